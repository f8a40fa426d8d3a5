"""Factorizable priors P(x) and memoryless channels P(y|Delta).

Each prior/channel exposes the scalar denoiser statistics the decoder and
the replica solver consume: the mean and log-curvature of the tilted scalar
measure P(x) exp(-a x^2/2 + h x), and for channels the mean/curvature of
ln int Dx P(y | sqrt(a) x + h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from ._quad import gh_nodes
from .errors import AccuracyError, DomainError, UnsupportedError

__all__ = [
    "BinaryPrior",
    "GaussianPrior",
    "TabulatedPrior",
    "GaussianChannel",
    "TabulatedChannel",
    "prior_denoise",
    "channel_denoise",
    "sample_prior",
    "sample_channel",
    "prior_from_config",
    "channel_from_config",
]

_H_MAX = 700.0  # tilted weights stay representable in log-domain below this


# -- priors ----------------------------------------------------------------


@dataclass(frozen=True)
class BinaryPrior:
    """x = +-1 equiprobable."""

    kind: str = "binary"
    is_binary: bool = True

    @property
    def second_moment(self) -> float:
        return 1.0

    @property
    def mean_value(self) -> float:
        return 0.0

    def denoise(self, h, chi_hat_x=0.0):
        # x^2 == 1 makes the chi_hat tilt a constant factor; it cancels
        m = np.tanh(h)
        return m, 1.0 - m * m

    def sample(self, K: int, rng: np.random.Generator) -> np.ndarray:
        return (2.0 * rng.integers(0, 2, size=K) - 1.0).astype(float)


@dataclass(frozen=True)
class GaussianPrior:
    var: float = 1.0
    kind: str = "gaussian"
    is_binary: bool = False

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError(f"gaussian prior variance must be > 0, got {self.var}")

    @property
    def second_moment(self) -> float:
        return self.var

    @property
    def mean_value(self) -> float:
        return 0.0

    def denoise(self, h, chi_hat_x=0.0):
        prec = 1.0 / self.var + chi_hat_x
        m = np.asarray(h) / prec
        return m, np.broadcast_to(np.asarray(1.0 / prec), m.shape).copy() if np.ndim(m) else 1.0 / prec

    def sample(self, K: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, math.sqrt(self.var), size=K)


class TabulatedPrior:
    """Discrete prior on given values; must be zero-mean (nonzero-mean laws
    are out of scope for the solvers built on top)."""

    kind = "tabulated"
    is_binary = False

    def __init__(self, values, probs):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape:
            raise DomainError("values and probs must be matching 1-D sequences")
        if np.any(probs < 0):
            raise DomainError("negative probability")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {probs.sum()}, not 1")
        mean = float(np.dot(probs, values))
        if abs(mean) > 1e-12:
            raise DomainError(f"only zero-mean priors are supported (mean {mean})")
        self.values = values
        self.probs = probs
        self._logp = np.full_like(probs, -np.inf)
        np.log(probs, out=self._logp, where=probs > 0)

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.probs, self.values**2))

    @property
    def mean_value(self) -> float:
        return 0.0

    def denoise(self, h, chi_hat_x=0.0):
        h = np.asarray(h, dtype=float)
        scalar = h.ndim == 0
        hv = np.atleast_1d(h)
        # log weights, normalized in log-domain: never under/overflows for |h| < 700
        logw = self._logp[None, :] - 0.5 * chi_hat_x * self.values[None, :] ** 2 \
            + hv[:, None] * self.values[None, :]
        logz = logsumexp(logw, axis=1, keepdims=True)
        w = np.exp(logw - logz)
        m = w @ self.values
        v = w @ self.values**2 - m * m
        v = np.maximum(v, 0.0)
        if scalar:
            return float(m[0]), float(v[0])
        return m, v

    def sample(self, K: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.values), size=K, p=self.probs)
        return self.values[idx]


# -- channels ---------------------------------------------------------------


@dataclass(frozen=True)
class GaussianChannel:
    """y = Delta + noise, noise ~ N(0, sigma2)."""

    sigma2: float
    kind: str = "gaussian"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")

    def denoise(self, y, h, chi_hat_u=0.0):
        denom = self.sigma2 + chi_hat_u
        mean = (np.asarray(y) - np.asarray(h)) / denom
        return mean, 1.0 / denom

    def sample(self, delta, rng: np.random.Generator) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        return delta + rng.normal(0.0, math.sqrt(self.sigma2), size=delta.shape)

    def pdf(self, y, delta):
        s2 = self.sigma2
        return np.exp(-((np.asarray(y) - np.asarray(delta)) ** 2) / (2 * s2)) / math.sqrt(2 * math.pi * s2)

    def output_entropy_term(self, t_hat_u: float) -> float:
        """Tr_y int Dz P(y|sqrt(T)z) ln P(y|sqrt(T)z) = -(1/2) ln(2 pi e sigma2)."""
        return -0.5 * math.log(2.0 * math.pi * math.e * self.sigma2)


class TabulatedChannel:
    """Channel given by an arbitrary likelihood density P(y|Delta).

    `pdf(y, delta)` must be vectorized; `y_support` bounds the output values
    that carry mass (used for replica-side y integrals); `sampler(delta, rng)`
    is needed only to draw channel outputs.
    """

    kind = "tabulated"

    def __init__(self, pdf: Callable, y_support: tuple[float, float] | None = None,
                 sampler: Callable | None = None, n_quad: int = 61):
        self.pdf_fn = pdf
        self.y_support = y_support
        self.sampler = sampler
        self.n_quad = int(n_quad)

    def pdf(self, y, delta):
        return self.pdf_fn(y, delta)

    def denoise(self, y, h, chi_hat_u=0.0):
        """Mean and curvature of ln int Dx P(y | sqrt(chi_hat) x + h).

        Gauss-Hermite with the weighted-moment (Stein) form of the
        derivatives; node count doubles until the relative change is below
        1e-7 (accuracy error beyond 4 doublings). Small chi_hat falls back
        to finite differences of ln P(y|h).
        """
        y = np.asarray(y, dtype=float)
        h = np.asarray(h, dtype=float)
        if chi_hat_u < 1e-9:
            step = 1e-6
            lp = lambda hh: np.log(np.maximum(self.pdf_fn(y, hh), 1e-300))
            mean = (lp(h + step) - lp(h - step)) / (2 * step)
            curv = -(lp(h + step) - 2.0 * lp(h) + lp(h - step)) / step**2
            return mean, curv

        prev = None
        n = self.n_quad
        for _ in range(5):
            mean, curv = self._gh_denoise(y, h, chi_hat_u, n)
            if prev is not None:
                num = max(np.max(np.abs(mean - prev[0])), np.max(np.abs(curv - prev[1])))
                den = max(1.0, np.max(np.abs(mean)), np.max(np.abs(curv)))
                if num / den < 1e-7:
                    return mean, curv
            prev = (mean, curv)
            n *= 2
        raise AccuracyError(
            f"channel denoiser quadrature did not stabilize below 1e-7 at {n} nodes"
        )

    def _gh_denoise(self, y, h, a, n):
        z, w = gh_nodes(n)
        sq = math.sqrt(a)
        vals = self.pdf_fn(y[..., None], sq * z[None, :] + h[..., None])
        zn = np.maximum(vals @ w, 1e-300)
        x1 = (vals @ (w * z)) / zn
        x2 = (vals @ (w * z * z)) / zn
        mean = x1 / sq
        curv = (1.0 + x1 * x1 - x2) / a
        return mean, curv

    def sample(self, delta, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            raise UnsupportedError("tabulated channel has no sampler")
        return self.sampler(np.asarray(delta, dtype=float), rng)

    def output_entropy_term(self, t_hat_u: float) -> float:
        """Tr_y int Dz P(y|sqrt(T)z) ln P(y|sqrt(T)z) by nested quadrature."""
        if self.y_support is None:
            raise UnsupportedError("tabulated channel needs y_support for replica terms")
        z, w = gh_nodes(121)
        ylo, yhi = self.y_support
        ynodes, yw = np.polynomial.legendre.leggauss(400)
        ynodes = (ynodes + 1.0) * (yhi - ylo) / 2.0 + ylo
        yw = yw * (yhi - ylo) / 2.0
        sq = math.sqrt(max(t_hat_u, 0.0))
        p = self.pdf_fn(ynodes[:, None], sq * z[None, :])  # (ny, nz)
        integrand = np.where(p > 0, p * np.log(np.maximum(p, 1e-300)), 0.0)
        return float(yw @ (integrand @ w))


# -- spec-named operation wrappers -----------------------------------------


def prior_denoise(prior, h, chi_hat_x: float = 0.0):
    """(mean, variance) of the tilted prior measure at field h."""
    return prior.denoise(h, chi_hat_x)


def channel_denoise(channel, y, h, chi_hat_u: float = 0.0):
    """(mean, curvature) of the Gaussian-smoothed channel log-evidence."""
    return channel.denoise(y, h, chi_hat_u)


def sample_prior(prior, K: int, rng: np.random.Generator) -> np.ndarray:
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    return prior.sample(K, rng)


def sample_channel(channel, delta, rng: np.random.Generator) -> np.ndarray:
    return channel.sample(delta, rng)


# -- config -----------------------------------------------------------------


def prior_from_config(cfg: dict):
    kind = cfg.get("kind", "binary")
    if kind == "binary":
        return BinaryPrior()
    if kind == "gaussian":
        return GaussianPrior(var=float(cfg.get("var", 1.0)))
    if kind == "tabulated":
        return TabulatedPrior(cfg["values"], cfg["probs"])
    raise UnsupportedError(f"unknown prior kind {kind!r}")


def channel_from_config(cfg: dict):
    kind = cfg.get("kind", "gaussian")
    if kind == "gaussian":
        return GaussianChannel(sigma2=float(cfg["sigma2"]))
    raise UnsupportedError(f"unknown channel kind {kind!r} (tabulated channels are API-only)")
