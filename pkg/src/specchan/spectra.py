"""Asymptotic eigenvalue distributions of H^T H.

A :class:`Spectrum` is a probability law on [0, inf) given as point masses
plus an optional continuous density carried by a fixed quadrature rule.
It also stores the load beta = K/N, because every formula downstream needs
(rho, beta) as a pair and mixing them up is the easiest way to get silently
wrong numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Spectrum",
    "SpectrumError",
    "make_wbes",
    "make_marchenko_pastur",
    "make_empirical",
    "make_delta",
    "average",
]

_MASS_TOL = 1e-10
_ATOM_MERGE_TOL = 1e-12


class SpectrumError(ValueError):
    """Invalid spectrum construction or query."""


@dataclass(frozen=True)
class _Continuous:
    """Continuous part, pre-discretized: sum(w * f(nodes)) ~ int density*f."""

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    support: tuple[float, float]
    params: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue law of H^T H: atoms + optional continuous density, with load beta."""

    atoms: tuple[tuple[float, float], ...]  # (mass, location)
    beta: float
    continuous: _Continuous | None = None

    def __post_init__(self):
        if not self.beta > 0:
            raise SpectrumError(f"beta must be > 0, got {self.beta}")
        for mass, loc in self.atoms:
            if mass < 0:
                raise SpectrumError(f"negative atom mass {mass}")
            if loc < 0:
                raise SpectrumError(f"negative atom location {loc}")
        # flattened arrays for vectorized averages; positive part separated
        # so resolvent-type quantities can be assembled cancellation-free
        am = np.array([m for m, _ in self.atoms], dtype=float)
        al = np.array([loc for _, loc in self.atoms], dtype=float)
        zero = al <= _ATOM_MERGE_TOL
        m0 = float(am[zero].sum())
        pw = am[~zero]
        pl = al[~zero]
        if self.continuous is not None:
            pw = np.concatenate([pw, self.continuous.weights])
            pl = np.concatenate([pl, self.continuous.nodes])
        object.__setattr__(self, "_m0", m0)
        object.__setattr__(self, "_pw", pw)
        object.__setattr__(self, "_pl", pl)

        total = self.total_mass()
        if abs(total - 1.0) > _MASS_TOL:
            raise SpectrumError(f"total mass {total} != 1 (tol {_MASS_TOL})")
        if self.beta > 1.0:
            need = 1.0 - 1.0 / self.beta - _MASS_TOL
            if m0 < need:
                raise SpectrumError(
                    f"beta={self.beta} > 1 requires mass >= {need:.12g} at "
                    f"lambda=0, got {m0:.12g}"
                )

    # -- basic queries -------------------------------------------------

    def total_mass(self) -> float:
        return float(self._m0 + self._pw.sum())

    def mass_at_zero(self) -> float:
        return self._m0

    @property
    def mean(self) -> float:
        return float(np.dot(self._pw, self._pl))

    def min_positive_location(self) -> float:
        return float(self._pl.min()) if len(self._pl) else math.inf

    def average(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """<f(lambda)>_rho. Raises if f is singular on an atom or node."""
        total = 0.0
        if self._m0 > 0.0:
            v0 = f(np.asarray(0.0))
            if not np.all(np.isfinite(v0)):
                raise SpectrumError(
                    f"integrand not finite at atom lambda=0 (mass {self._m0})"
                )
            total += self._m0 * float(v0)
        if len(self._pl):
            vals = f(self._pl)
            if not np.all(np.isfinite(vals)):
                raise SpectrumError("integrand not finite on the spectrum")
            total += float(np.dot(self._pw, vals))
        return total

    # Resolvent-style averages used by the saddle machinery.  `t` may be
    # complex or negative real (analytic continuation); the zero atom is
    # kept separate so downstream formulas can avoid 0*inf cancellations.

    def pos_resolvent(self, t):
        """R_+(t) = <1/(lambda + t)> over the positive part only."""
        return np.sum(self._pw / (self._pl + t)) if len(self._pl) else 0.0 * t

    def pos_resolvent2(self, t):
        return np.sum(self._pw / (self._pl + t) ** 2) if len(self._pl) else 0.0 * t

    def pos_resolvent3(self, t):
        return np.sum(self._pw / (self._pl + t) ** 3) if len(self._pl) else 0.0 * t

    def resolvent(self, t):
        """R(t) = <1/(lambda + t)>, zero atom included."""
        return self._m0 / t + self.pos_resolvent(t)

    def dfun(self, t):
        """D(t) = <lambda/(lambda + t)>; the zero atom contributes nothing."""
        return np.sum(self._pw * self._pl / (self._pl + t)) if len(self._pl) else 0.0 * t

    def resolvent_scaled(self, c, u):
        """<1/(c + u*lambda)> for c > 0, u >= 0."""
        out = self._m0 / c
        if len(self._pl):
            out += np.sum(self._pw / (c + u * self._pl))
        return float(out)

    def pos_log_average(self, t):
        """<ln(lambda + t)> over the positive part (complex log if t is)."""
        if len(self._pl) == 0:
            return 0.0 * t
        if np.iscomplexobj(np.asarray(t)) or isinstance(t, complex):
            return np.sum(self._pw * np.log(self._pl.astype(complex) + t))
        return np.sum(self._pw * np.log(np.abs(self._pl + t)))

    def pos_log1p_over(self, t: float):
        """<log1p(lambda/t)> over the positive part, stable for large t > 0."""
        if len(self._pl) == 0:
            return 0.0
        return float(np.sum(self._pw * np.log1p(self._pl / t)))

    # -- serialization ---------------------------------------------------

    def to_json(self) -> str:
        doc: dict = {
            "beta": self.beta,
            "atoms": [[m, loc] for m, loc in self.atoms],
        }
        if self.continuous is not None:
            cont = {"kind": self.continuous.kind, "support": list(self.continuous.support)}
            if self.continuous.kind == "marchenko_pastur":
                cont.update(self.continuous.params)
            else:
                cont["nodes"] = self.continuous.nodes.tolist()
                cont["weights"] = self.continuous.weights.tolist()
            doc["continuous"] = cont
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "Spectrum":
        doc = json.loads(text)
        beta = float(doc["beta"])
        cont = doc.get("continuous")
        if cont is None:
            atoms = tuple((float(m), float(loc)) for m, loc in doc["atoms"])
            return Spectrum(atoms=_merge_atoms(atoms), beta=beta)
        if cont["kind"] == "marchenko_pastur":
            return make_marchenko_pastur(beta, n_nodes=int(cont.get("n_nodes", 200)))
        if cont["kind"] == "tabulated":
            atoms = tuple((float(m), float(loc)) for m, loc in doc["atoms"])
            c = _Continuous(
                kind="tabulated",
                nodes=np.asarray(cont["nodes"], dtype=float),
                weights=np.asarray(cont["weights"], dtype=float),
                support=(float(cont["support"][0]), float(cont["support"][1])),
            )
            return Spectrum(atoms=_merge_atoms(atoms), beta=beta, continuous=c)
        raise SpectrumError(f"unknown continuous kind {cont['kind']!r}")

    @property
    def is_marchenko_pastur(self) -> bool:
        return self.continuous is not None and self.continuous.kind == "marchenko_pastur"


def _merge_atoms(atoms: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Merge atoms closer than the merge tolerance; drop zero-mass atoms at the end."""
    ordered = sorted((float(loc), float(m)) for m, loc in atoms)
    merged: list[list[float]] = []
    for loc, m in ordered:
        if merged and loc - merged[-1][0] <= _ATOM_MERGE_TOL:
            tot = merged[-1][1] + m
            if tot > 0:
                # mass-weighted location keeps the mean exact
                merged[-1][0] = (merged[-1][0] * merged[-1][1] + loc * m) / tot
            merged[-1][1] = tot
        else:
            merged.append([loc, m])
    return tuple((m, loc) for loc, m in merged if m > 0.0)


# -- constructors --------------------------------------------------------


def make_wbes(beta: float) -> Spectrum:
    """Welch-bound-equality spectrum: (1-1/beta) at 0 and 1/beta at beta. Needs beta > 1."""
    if not beta > 1.0:
        raise SpectrumError(f"WBES spectrum is defined only for beta > 1, got {beta}")
    atoms = ((1.0 - 1.0 / beta, 0.0), (1.0 / beta, float(beta)))
    return Spectrum(atoms=atoms, beta=float(beta))


def make_marchenko_pastur(beta: float, n_nodes: int = 200) -> Spectrum:
    """Marchenko-Pastur law for H^T H with IID Gaussian(0, 1/N) entries, load beta.

    Continuous density sqrt((l+ - x)(x - l-))/(2 pi beta x) on [l-, l+],
    l+- = (1 -+ sqrt(beta))^2, plus a (1 - 1/beta) atom at 0 when beta > 1.

    The square-root edge factor is absorbed exactly by the substitution
    x = c + h*cos(theta) (so sqrt((l+ - x)(x - l-)) = h*sin(theta)); the
    remaining theta-integrand is smooth even at beta = 1, and Gauss-Legendre
    in theta converges to machine precision well below the default 200 nodes.
    """
    if not beta > 0:
        raise SpectrumError(f"beta must be > 0, got {beta}")
    sb = math.sqrt(beta)
    lo, hi = (1.0 - sb) ** 2, (1.0 + sb) ** 2

    if lo == 0.0 or lo / hi >= 5e-3:
        center, half = (hi + lo) / 2.0, (hi - lo) / 2.0
        x, w = np.polynomial.legendre.leggauss(int(n_nodes))
        theta = (x + 1.0) * (math.pi / 2.0)
        wt = w * (math.pi / 2.0)
        lam = center + half * np.cos(theta)
        sin_t = np.sin(theta)
        # density * dlambda/dtheta = half^2 sin^2(theta) / (2 pi beta lam)
        weights = wt * (half * half) * sin_t * sin_t / (2.0 * math.pi * beta * lam)
    else:
        # beta near (but not at) 1: the 1/lam pole sits a distance lam- just
        # below the support and the single substitution cannot resolve it.
        # Composite rule: graded r-panels on the left (lam = lam- + r^2
        # absorbs the sqrt edge; panel grading resolves the r ~ sqrt(lam-)
        # transition of r^2/(lam- + r^2)), phi-substitution on the right.
        lam, weights = _mp_composite_rule(beta, lo, hi, int(n_nodes))

    atoms: tuple[tuple[float, float], ...]
    zero_mass = max(0.0, 1.0 - 1.0 / beta)
    atoms = ((zero_mass, 0.0),) if zero_mass > 0 else ()
    cont = _Continuous(
        kind="marchenko_pastur",
        nodes=lam,
        weights=weights,
        support=(lo, hi),
        params={"n_nodes": int(n_nodes)},
    )
    return Spectrum(atoms=atoms, beta=float(beta), continuous=cont)


def _mp_composite_rule(beta: float, lo: float, hi: float, n_nodes: int):
    """Nodes/weights integrating the MP density when lam- is tiny."""
    split = lo + 0.1 * (hi - lo)
    x24, w24 = np.polynomial.legendre.leggauss(24)

    def density(lam):
        return np.sqrt((hi - lam) * (lam - lo)) / (2.0 * math.pi * beta * lam)

    # left piece [lo, split]: lam = lo + r^2, graded geometric panels in r
    R = math.sqrt(split - lo)
    n_panels = max(10, int(math.ceil(math.log2(R / math.sqrt(lo)))) + 6)
    edges = [R * 2.0 ** (-k) for k in range(n_panels)] + [0.0]
    nodes_list, weights_list = [], []
    for k in range(len(edges) - 1):
        a, b = edges[k + 1], edges[k]
        r = (x24 + 1.0) * (b - a) / 2.0 + a
        wr = w24 * (b - a) / 2.0
        lam = lo + r * r
        # density * dlam/dr with sqrt(lam - lo) = r taken exactly
        wts = wr * np.sqrt(hi - lam) * r * 2.0 * r / (2.0 * math.pi * beta * lam)
        nodes_list.append(lam)
        weights_list.append(wts)

    # right piece [split, hi]: lam = hi - (hi - split) sin^2(phi), with
    # sqrt(hi - lam) = sqrt(hi - split) sin(phi) taken exactly:
    # density |dlam/dphi| = (hi-split)^{3/2} sin^2 cos sqrt(lam - lo)/(pi b lam)
    xr, wrr = np.polynomial.legendre.leggauss(max(64, n_nodes // 2))
    phi = (xr + 1.0) * (math.pi / 4.0)
    wphi = wrr * (math.pi / 4.0)
    sin_p, cos_p = np.sin(phi), np.cos(phi)
    lam = hi - (hi - split) * sin_p * sin_p
    wts = wphi * (hi - split) ** 1.5 * sin_p * sin_p * cos_p \
        * np.sqrt(lam - lo) / (math.pi * beta * lam)
    nodes_list.append(lam)
    weights_list.append(wts)
    return np.concatenate(nodes_list), np.concatenate(weights_list)


def make_empirical(eigenvalues: Sequence[float], K: int, beta: float | None = None) -> Spectrum:
    """Empirical spectrum of H^T H: mass 1/K per listed eigenvalue, rest at 0.

    `eigenvalues` should be the min(N, K) (potentially) nonzero eigenvalues;
    the remaining K - len(eigenvalues) exact zeros are added automatically.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    if vals.ndim != 1 or len(vals) == 0:
        raise SpectrumError("eigenvalues must be a nonempty 1-D sequence")
    if np.any(vals < -1e-9):
        raise SpectrumError(f"negative eigenvalue {vals.min()}")
    vals = np.clip(vals, 0.0, None)
    K = int(K)
    if K < len(vals):
        raise SpectrumError(f"K={K} < number of eigenvalues {len(vals)}")
    if beta is None:
        beta = K / len(vals)
    atoms = [(1.0 / K, float(v)) for v in vals]
    if K > len(vals):
        atoms.append(((K - len(vals)) / K, 0.0))
    return Spectrum(atoms=_merge_atoms(atoms), beta=float(beta))


def make_delta(location: float, beta: float = 1.0) -> Spectrum:
    """Degenerate spectrum delta(lambda - location)."""
    if location < 0:
        raise SpectrumError(f"negative location {location}")
    return Spectrum(atoms=((1.0, float(location)),), beta=float(beta))


def average(spec: Spectrum, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """<f(lambda)> under spec; module-level alias for Spectrum.average."""
    return spec.average(f)
