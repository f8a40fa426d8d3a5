"""The two-variable free-energy function F(xi, eta) of a rotationally
invariant matrix ensemble, and the saddle solves built on it.

Everything here is a function of the spectrum rho(lambda) of H^T H and the
load beta = K/N. The extremized form is

    F(xi, eta) = Extr_{Lx, Le} { -(b/2) <ln(Lx*Le + lam)>
                                 - (1-b)/2 * ln Le
                                 + b*Lx*xi/2 + Le*eta/2 }
                 - (b/2) ln xi - (1/2) ln eta - (1+b)/2 ,

with stationarity conditions (the same pair the decoder's H/V steps solve)

    xi  = < Le / (Lx*Le + lam) >
    eta = (1-b)/Le + b < Lx / (Lx*Le + lam) > .

The (1-b)/2 log sits on Le (the eta-side multiplier): that placement is what
reproduces the two conditions above by differentiation, and it is confirmed
by the closed form of the equal-singular-value ensemble; see
docs/math_notes.md.

Internally the joint saddle reduces to one scalar equation. With t = Lx*Le,
R(t) = <1/(lam+t)> and

    Psi(t) = (1-b) R(t) + b t R(t)^2

the conditions hold iff Psi(t) = xi*eta =: s, after which Lx = t R(t)/xi and
Le = xi/R(t). The physically relevant solution is the largest root (t ~ 1/s
as s -> 0). Psi attains a finite maximum on the real axis; beyond it F is
continued analytically: through a real root between the spectral edge and 0
when one exists, through the complex root pair otherwise, and for the
Marchenko-Pastur law beyond its edge through the algebraic branch of its
resolvent (where D(t) = <lam/(lam+t)> equals Psi(t) identically, so
dF/ds = -b/2 and the IID-Gaussian identity F = -(b/2) s holds on every
branch). Values on continued branches are the real parts.

Numerical care: with a zero atom of mass m0, R(t) ~ m0/t blows up as t -> 0
while Psi stays finite; Psi is therefore always assembled from the
decomposition

    Psi(t) = m0*e0/t + (e0 + b*m0) R+(t) + b t R+(t)^2 ,
    e0 = 1 - b + b*m0 ,  R+ = positive-part resolvent,

which has no 0*inf cancellation (e0 = 0 exactly for spectra whose zero atom
is the pure rank deficit 1 - 1/b).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ConvergenceError, DomainError, RangeError
from .spectra import Spectrum

__all__ = [
    "SaddlePair",
    "FResult",
    "eval_F",
    "solve_hstep_saddle",
    "solve_vstep_saddle",
    "hstep_quantities",
    "vstep_quantities",
    "gaussian_equivalent_variance",
    "coupling_root",
    "coupling_D",
    "f_partials",
    "psi",
    "psi_max",
]

# multipliers are searched on [LAM_MIN, LAM_MAX]; out of bracket is an error
LAM_MIN = 1e-12
LAM_MAX = 1e12
_ROOT_RTOL = 1e-15
_TINY_S = 1e-13
_T_ZERO = 1e-200


@dataclass(frozen=True)
class SaddlePair:
    """Extremizing multipliers of F at a real saddle (both > 0)."""

    lambda_xi: float
    lambda_eta: float


@dataclass(frozen=True)
class FResult:
    """Value of F with the saddle it was evaluated at.

    branch is "saddle" (real positive multipliers), "continued" (analytic
    continuation, saddle is None) or "zero" (xi*eta below resolution;
    first-order value).
    """

    value: float
    saddle: SaddlePair | None
    residual: float
    branch: str = "saddle"
    t: complex = 0.0


# -- scalar root solves ----------------------------------------------------


def _solve_reciprocal_average(spec: Spectrum, c: float, target: float) -> float:
    """Solve <1/(c + u*lam)> = target for u >= 0.

    The left side decreases monotonically from 1/c at u=0 to m0/c as
    u -> inf, so the root brackets by doubling. Accepts the closed endpoint
    target = 1/c (returns u = 0).
    """
    if not c > 0:
        raise DomainError(f"multiplier must be > 0, got {c}")
    m0 = spec.mass_at_zero()
    hi_val = 1.0 / c
    lo_val = m0 / c
    if target > hi_val * (1.0 + 1e-13):
        raise RangeError(
            f"target {target} above attainable supremum {hi_val}", lo_val, hi_val
        )
    if target >= hi_val:
        return 0.0
    if target <= lo_val:
        raise RangeError(
            f"target {target} at or below attainable infimum {lo_val}", lo_val, hi_val
        )

    def g(u: float) -> float:
        return spec.resolvent_scaled(c, u) - target

    u_hi = 1.0
    while g(u_hi) > 0.0:
        u_hi *= 8.0
        if u_hi > LAM_MAX:
            raise ConvergenceError(
                f"no bracket for reciprocal solve below u={LAM_MAX}", residual=g(LAM_MAX)
            )
    u_lo = u_hi / 8.0 if u_hi > 1.0 else 0.0
    return float(brentq(g, u_lo, u_hi, rtol=_ROOT_RTOL, xtol=1e-300, maxiter=200))


def hstep_quantities(spec: Spectrum, chi_x: float, lambda_x: float):
    """H-step search: given (chi_x, Lx), satisfy both saddle conditions.

    Returns (chi_u, lambda_u, chi_hat_u). Parametrized by v = 1/lambda_u so
    the cold-start endpoint chi_x = 1/Lx (v = 0, lambda_u = inf) is regular:
    there chi_u = 0 and chi_hat_u = b <lam>/Lx, the matched-filter value.
    chi_hat_u = 1/chi_u - lambda_u is computed in the cancellation-free form
    b <lam/(Lx + v lam)> / W with W = (1-b) + b <Lx/(Lx + v lam)>.
    """
    v = _solve_reciprocal_average(spec, lambda_x, chi_x)
    b = spec.beta
    w_avg = spec.average(lambda lam: lambda_x / (lambda_x + v * lam))
    W = (1.0 - b) + b * w_avg
    chi_hat_u = b * spec.average(lambda lam: lam / (lambda_x + v * lam)) / W
    chi_u = v * W
    lambda_u = math.inf if v == 0.0 else 1.0 / v
    return chi_u, lambda_u, chi_hat_u


def vstep_quantities(spec: Spectrum, chi_u: float, lambda_u: float):
    """V-step search: given (chi_u, Lu), satisfy both saddle conditions.

    Returns (chi_x, lambda_x, chi_hat_x); mirror of hstep_quantities with
    w = 1/lambda_x and the eta-side condition rearranged to
    <1/(Lu + w lam)> = (chi_u - (1-b)/Lu)/b.
    """
    b = spec.beta
    target = (chi_u - (1.0 - b) / lambda_u) / b
    w = _solve_reciprocal_average(spec, lambda_u, target)
    W2 = spec.average(lambda lam: lambda_u / (lambda_u + w * lam))
    chi_hat_x = spec.average(lambda lam: lam / (lambda_u + w * lam)) / W2
    chi_x = w * W2
    lambda_x = math.inf if w == 0.0 else 1.0 / w
    return chi_x, lambda_x, chi_hat_x


def _solve_additive(spec: Spectrum, v: float, target: float) -> float:
    """Solve <1/(x + v*lam)> = target for x > 0 (v >= 0 fixed).

    Left side decreases from the v-limit at x -> 0 to 0 at x -> inf; with a
    zero atom it diverges at x -> 0, so a root exists for every target > 0.
    """
    if target <= 0:
        raise RangeError(f"target must be > 0, got {target}", 0.0, math.inf)

    def g(x: float) -> float:
        return spec.resolvent_scaled(x, v) - target

    x_lo, x_hi = 1.0, 1.0
    while g(x_hi) > 0.0:
        x_hi *= 8.0
        if x_hi > LAM_MAX:
            raise ConvergenceError("additive solve: no bracket above", residual=g(LAM_MAX))
    while g(x_lo) < 0.0:
        x_lo /= 8.0
        if x_lo < LAM_MIN:
            raise RangeError(
                f"target {target} unattainable: supremum "
                f"{g(LAM_MIN) + target:.6g} at the search floor",
                0.0, g(LAM_MIN) + target,
            )
    return float(brentq(g, x_lo, x_hi, rtol=_ROOT_RTOL, xtol=1e-300, maxiter=200))


def hstep_refresh(spec: Spectrum, chi_x: float, lambda_u: float):
    """H-step search anchored at the empirical chi_x with L_u pinned.

    Re-solves condition 1 for L_x at the given chi_x (for WBES + Gaussian
    this is the closed-form quadratic root), then reads chi_u from condition
    2 and the Onsager coefficient from the cancellation-free form

        chi_hat_u = 1/chi_u - L_u = b <lam/(L_x + v lam)> / W ,
        W = (1-b) + b <L_x/(L_x + v lam)>,  v = 1/L_u .

    Returns (lambda_x, chi_u, chi_hat_u).
    """
    b = spec.beta
    v = 1.0 / lambda_u
    x = _solve_additive(spec, v, chi_x)
    W = (1.0 - b) + b * spec.average(lambda lam: x / (x + v * lam))
    chi_hat_u = b * spec.average(lambda lam: lam / (x + v * lam)) / W
    chi_u = v * W
    return x, chi_u, chi_hat_u


def solve_hstep_saddle(spec: Spectrum, chi_x: float, lambda_x: float):
    """Public H-step solve; returns (chi_u, lambda_u)."""
    if not chi_x > 0:
        raise DomainError(f"chi_x must be > 0, got {chi_x}")
    chi_u, lambda_u, _ = hstep_quantities(spec, chi_x, lambda_x)
    return chi_u, lambda_u


def solve_vstep_saddle(spec: Spectrum, chi_u: float, lambda_u: float):
    """Public V-step solve; returns (chi_x, lambda_x)."""
    if not chi_u > 0:
        raise DomainError(f"chi_u must be > 0, got {chi_u}")
    chi_x, lambda_x, _ = vstep_quantities(spec, chi_u, lambda_u)
    return chi_x, lambda_x


def gaussian_equivalent_variance(spec: Spectrum, T_x: float) -> float:
    """Variance b <lam> T_x of the components of Hx for x with second moment T_x."""
    if T_x < 0:
        raise DomainError(f"T_x must be >= 0, got {T_x}")
    return spec.beta * spec.mean * T_x


# -- Psi(t) = s --------------------------------------------------------------


def _e0(spec: Spectrum) -> float:
    """Zero-atom excess 1 - b + b m0; float noise around the exact rank
    deficit m0 = 1 - 1/b is treated as exactly zero (the noise term m0 e0/t
    would otherwise blow up spuriously near t = 0)."""
    e0 = 1.0 - spec.beta + spec.beta * spec.mass_at_zero()
    return 0.0 if abs(e0) < 1e-9 * (1.0 + spec.beta) else e0


def psi(spec: Spectrum, t):
    """Psi(t) in the cancellation-free decomposition (works for complex t)."""
    b = spec.beta
    m0 = spec.mass_at_zero()
    e0 = _e0(spec)
    rp = spec.pos_resolvent(t)
    out = (e0 + b * m0) * rp + b * t * rp * rp
    if m0 > 0.0 and e0 != 0.0:
        out = out + m0 * e0 / t
    return out


def _psi_prime(spec: Spectrum, t):
    b = spec.beta
    m0 = spec.mass_at_zero()
    e0 = _e0(spec)
    rp = spec.pos_resolvent(t)
    rp1 = -spec.pos_resolvent2(t)
    out = (e0 + b * m0) * rp1 + b * rp * rp + 2.0 * b * t * rp * rp1
    if m0 > 0.0 and e0 != 0.0:
        out = out - m0 * e0 / (t * t)
    return out


_POS_SCAN = np.geomspace(1e14, 1e-13, 120)


def _negative_grid(spec: Spectrum):
    edge = spec.min_positive_location()
    if not math.isfinite(edge) or edge <= 0.0:
        return None
    # with a quadrature-discretized density the resolvent is only trustworthy
    # a few node spacings away from the support edge; atom-only spectra are
    # exact arbitrarily close
    frac = 1.0 - 3e-2 if spec.continuous is not None else 1.0 - 1e-9
    q = np.geomspace(1e-9, frac, 90)
    return -edge * q  # descending from near 0- toward the edge


def coupling_root(spec: Spectrum, s: float):
    """Solve Psi(t) = s for the branch that continues the physical saddle.

    Returns (t, branch) with branch in:
      "saddle"   real t > 0 (true extremizing multipliers exist)
      "zero"     boundary root t = 0 (s at the supremum, no zero atom)
      "negative" real root between the spectral edge and 0
      "complex"  upper-half-plane root (conjugate pair; caller takes Re)
      "edge"     Marchenko-Pastur beyond its edge (algebraic continuation)
    """
    if not s > 0:
        raise DomainError(f"s must be > 0, got {s}")
    psi_pos = np.array([float(psi(spec, t)) for t in _POS_SCAN])
    idx = np.nonzero(psi_pos >= s)[0]
    if len(idx) > 0:
        k = int(idx[0])
        if k == 0:
            raise ConvergenceError(
                f"saddle root above search cap t={_POS_SCAN[0]:.3g}",
                residual=float(psi_pos[0] - s),
            )
        t = brentq(
            lambda tt: float(psi(spec, tt)) - s,
            _POS_SCAN[k],
            _POS_SCAN[k - 1],
            rtol=_ROOT_RTOL,
            xtol=1e-300,
            maxiter=200,
        )
        if t <= _T_ZERO:
            return 0.0, "zero"
        return float(t), "saddle"

    neg = _negative_grid(spec)
    m0 = spec.mass_at_zero()
    e0 = 1.0 - spec.beta + spec.beta * m0
    if neg is not None:
        psi_neg = np.array([float(psi(spec, t)) for t in neg])
        idx = np.nonzero(psi_neg >= s)[0]
        if len(idx) > 0:
            k = int(idx[0])
            if k == 0:
                # crossing sits between the last positive scan point and the
                # first negative one; Psi is continuous across 0 only when
                # the zero-atom singular term vanishes
                if m0 > 0.0 and abs(e0) > 1e-8:
                    lo, hi = float(neg[0]), -1e-18
                else:
                    lo, hi = float(neg[0]), float(_POS_SCAN[-1])
            else:
                lo, hi = float(neg[k]), float(neg[k - 1])
            t = brentq(
                lambda tt: float(psi(spec, tt)) - s,
                lo,
                hi,
                rtol=_ROOT_RTOL,
                xtol=1e-300,
                maxiter=200,
            )
            if abs(t) <= _T_ZERO:
                return 0.0, "zero"
            return float(t), "negative"
        # no real root; is there an interior peak on the negative side?
        k = int(np.argmax(psi_neg))
        if k == len(psi_neg) - 1 and psi_neg[-1] >= psi_pos.max():
            # Psi still rising into the spectral edge: real continuation is
            # exhausted; only the MP law carries an algebraic branch there
            if spec.is_marchenko_pastur:
                return float(neg[-1]), "edge"
            raise ConvergenceError(
                f"coupling s={s} lies beyond the real continuation for this "
                "spectrum (edge-limited); no analytic branch is available",
                residual=float(s - psi_neg[-1]),
            )
        t_pk, psi_pk = _interior_peak(spec, psi_neg, neg, psi_pos)
    else:
        t_pk, psi_pk = _interior_peak(spec, None, None, psi_pos)

    if s <= psi_pk:
        # narrow peak missed by the scan: root on the decreasing flank
        hi = _POS_SCAN[np.searchsorted(-_POS_SCAN, -t_pk)] if t_pk > 0 else _POS_SCAN[-1]
        t = brentq(
            lambda tt: float(psi(spec, tt)) - s,
            t_pk,
            float(_POS_SCAN[0]),
            rtol=_ROOT_RTOL,
            xtol=1e-300,
            maxiter=200,
        )
        return float(t), "saddle" if t > 0 else "negative"
    return _continue_complex(spec, s, t_pk, psi_pk), "complex"


def _interior_peak(spec, psi_neg, neg, psi_pos):
    """Locate the interior maximum of Psi over the scanned real points."""
    ts = list(_POS_SCAN)
    vals = list(psi_pos)
    if neg is not None:
        ts += list(neg)
        vals += list(psi_neg)
    k = int(np.argmax(vals))
    lo = ts[min(k + 1, len(ts) - 1)]
    hi = ts[max(k - 1, 0)]
    if lo > hi:
        lo, hi = hi, lo
    res = minimize_scalar(
        lambda tt: -float(psi(spec, tt)), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-14},
    )
    return float(res.x), float(-res.fun)


def psi_max(spec: Spectrum):
    """(t_peak, Psi(t_peak)) over the real continuation range."""
    psi_pos = np.array([float(psi(spec, t)) for t in _POS_SCAN])
    neg = _negative_grid(spec)
    psi_neg = np.array([float(psi(spec, t)) for t in neg]) if neg is not None else None
    return _interior_peak(spec, psi_neg, neg, psi_pos)


def _newton_complex(spec: Spectrum, s: float, t0: complex) -> complex:
    """Damped complex Newton for Psi(t) = s, kept in the upper half plane."""
    t = t0
    fval = psi(spec, t) - s
    for _ in range(100):
        if abs(fval) < 1e-13:
            return t
        der = _psi_prime(spec, t)
        if der == 0 or not np.isfinite(abs(der)):
            break
        step = fval / der
        for _ in range(30):  # backtrack until the residual shrinks
            t_new = t - step
            if t_new.imag <= 0:
                t_new = complex(t_new.real, abs(t.imag) / 2.0)
            f_new = psi(spec, t_new) - s
            if abs(f_new) < abs(fval):
                break
            step /= 2.0
        else:
            break
        t, fval = t_new, f_new
    raise ConvergenceError(
        f"complex continuation of Psi(t)={s} did not converge", residual=abs(fval)
    )


def _continue_complex(spec: Spectrum, s: float, t_peak: float, psi_peak: float) -> complex:
    h = max(abs(t_peak), 1e-8) * 1e-4
    psi2 = float(psi(spec, t_peak + h) + psi(spec, t_peak - h) - 2.0 * psi(spec, t_peak)) / (h * h)
    if psi2 >= 0:
        psi2 = -abs(psi2) - 1e-30

    def quad_start(s_target: float) -> complex:
        return t_peak + 1j * math.sqrt(2.0 * (s_target - psi_peak) / (-psi2))

    if s <= 1.5 * psi_peak:
        return _newton_complex(spec, s, quad_start(s))
    # deep continuation: walk s up geometrically, warm-starting each solve
    s_cur = 1.2 * psi_peak
    t = _newton_complex(spec, s_cur, quad_start(s_cur))
    while s_cur < s:
        s_cur = min(s, s_cur * 1.6)
        t = _newton_complex(spec, s_cur, t)
    return t


def coupling_D(spec: Spectrum, s: float) -> float:
    """D at the coupling root: the envelope reduces dF/dxi to -(b/2) D/xi
    and dF/deta to -(b/2) D/eta. Real part on continued branches; on the
    MP edge branch D equals s identically (algebraic continuation)."""
    if s <= _TINY_S:
        # t* ~ 1/s beyond the search cap; D = <lam/(lam+t*)> = <lam> s (1+O(s))
        return spec.mean * s
    try:
        t, branch = coupling_root(spec, s)
    except ConvergenceError:
        # very deep complex continuation: Re D is exactly constant past the
        # branch point for atomic spectra (= its peak value), and that
        # plateau is the only regime where the walk can stall
        t_pk, s_pk = psi_max(spec)
        if s > s_pk:
            return float(np.real(spec.dfun(t_pk)))
        raise
    if branch == "edge":
        return float(s)
    d = spec.dfun(t)
    return float(np.real(d))


def f_partials(spec: Spectrum, xi: float, eta: float):
    """(dF/dxi, dF/deta) via the envelope theorem, cancellation-free."""
    s = xi * eta
    b = spec.beta
    if s <= _TINY_S:
        lam_mean = spec.mean
        return -(b / 2.0) * lam_mean * eta, -(b / 2.0) * lam_mean * xi
    D = coupling_D(spec, s)
    return -(b / 2.0) * D / xi, -(b / 2.0) * D / eta


# -- F value -----------------------------------------------------------------


def _value_direct_real(spec: Spectrum, t: float, s: float) -> float:
    """Direct assembly at a real root (t may be <= 0); logs of moduli.

    Branch ambiguities of the complex logs are pure imaginary and drop out
    of the real part, which is the returned (continued) value.
    """
    b = spec.beta
    m0 = spec.mass_at_zero()
    R = float(spec.resolvent(t)) if t != 0.0 else float(spec.pos_resolvent(0.0))
    D = float(spec.dfun(t))
    lavg = float(spec.pos_log_average(t))
    if m0 > 0.0:
        lavg += m0 * math.log(abs(t))
    val = (
        -(b / 2.0) * lavg
        + (1.0 - b) / 2.0 * math.log(abs(R))
        + (b / 2.0) * (1.0 - D)
        + s / (2.0 * R)
        - 0.5 * math.log(s)
        - (1.0 + b) / 2.0
    )
    return float(val)


def eval_F(spec: Spectrum, xi: float, eta: float, residual_tol: float = 1e-10) -> FResult:
    """Evaluate F(xi, eta) for the given spectrum.

    Limits xi -> 0 or eta -> 0 give F = 0 (continuity extension). On the
    real positive branch the value is assembled from O(s) pieces,

        F = -(1/2) log1p(s t - 1) - (b/2) <log1p(lam/t)>_+
            + (1-b)/2 * log1p(-D) + (b/2)(1 - D) + s t / (2 (1-D))
            - (1+b)/2 ,

    exact algebra (t R = 1 - D after the zero atom is absorbed), avoiding
    the ln-term cancellations that destroy the naive formula as s -> 0.
    """
    if xi < 0 or eta < 0:
        raise DomainError(f"xi and eta must be >= 0, got ({xi}, {eta})")
    b = spec.beta
    s = xi * eta
    if s <= _TINY_S:
        return FResult(
            value=-(b / 2.0) * spec.mean * s, saddle=None, residual=0.0, branch="zero"
        )

    t, branch = coupling_root(spec, s)

    if spec.is_marchenko_pastur and branch not in ("saddle",):
        # For the MP law D(t) == Psi(t) identically, so dF/ds = -b/2 on every
        # branch; extend from a quadrature-safe interior anchor instead of
        # evaluating averages near the spectral edge.
        s0 = 0.5 * (1.0 - spec.mass_at_zero())
        t0, b0 = coupling_root(spec, s0)
        assert b0 == "saddle"
        val = _value_saddle(spec, t0, s0) - (b / 2.0) * (s - s0)
        return FResult(value=val, saddle=None, residual=0.0, branch="continued", t=t)

    if branch == "complex":
        R = spec.resolvent(t)
        D = spec.dfun(t)
        L = spec.pos_log_average(t) + spec.mass_at_zero() * cmath.log(t)
        val = (
            -(b / 2.0) * L
            + (1.0 - b) / 2.0 * cmath.log(R)
            + (b / 2.0) * (1.0 - D)
            + s / (2.0 * R)
            - 0.5 * math.log(s)
            - (1.0 + b) / 2.0
        )
        resid = abs(psi(spec, t) - s)
        return FResult(value=float(val.real), saddle=None, residual=float(resid),
                       branch="continued", t=t)

    if branch == "edge":
        # MP algebraic branch: D(t) == Psi(t) for this law, so dF/ds = -b/2
        # beyond the edge; extend linearly from the edge value.
        s_edge = float(psi(spec, t))
        val = _value_direct_real(spec, t, s_edge) - (b / 2.0) * (s - s_edge)
        return FResult(value=val, saddle=None, residual=0.0, branch="continued", t=t)

    if branch == "negative":
        val = _value_direct_real(spec, t, s)
        resid = abs(float(psi(spec, t)) - s)
        return FResult(value=val, saddle=None, residual=float(resid),
                       branch="continued", t=t)

    if branch == "zero" or t < 1e-12 * max(1.0, spec.min_positive_location()):
        # boundary root: only occurs without a zero atom; evaluate直接
        val = _value_direct_real(spec, max(t, 0.0), s)
        R0 = float(spec.pos_resolvent(t)) if t > 0 else float(spec.pos_resolvent(0.0))
        lam_xi = (1.0 - float(spec.dfun(t))) / xi if t > 0 else _lim_zero_lam_xi(spec, xi)
        lam_eta = xi / R0
        resid = abs(float(psi(spec, max(t, 0.0))) - s)
        saddle = None
        if lam_xi > 0 and lam_eta > 0:
            saddle = SaddlePair(lambda_xi=float(lam_xi), lambda_eta=float(lam_eta))
        return FResult(value=val, saddle=saddle, residual=float(resid),
                       branch="saddle" if saddle else "continued", t=float(t))

    # regular real positive saddle
    D = float(spec.dfun(t))
    one_m_D = 1.0 - D
    val = _value_saddle(spec, t, s)
    lam_xi = one_m_D / xi
    lam_eta = xi * t / one_m_D

    # residuals of the two stationarity conditions, assembled without the
    # 1/Le blow-up (condition 2 is |Psi - s| / xi up to O(r1))
    t2 = lam_xi * lam_eta
    r1 = abs(lam_eta * float(spec.resolvent(t2)) - xi)
    r2 = abs(float(psi(spec, t2)) - s) / max(xi, 1e-300)
    resid = max(r1, r2)
    if resid > residual_tol * max(1.0, xi, eta):
        raise ConvergenceError(
            f"saddle residual {resid:.3g} above tolerance {residual_tol}", residual=resid
        )
    return FResult(
        value=float(val),
        saddle=SaddlePair(lambda_xi=float(lam_xi), lambda_eta=float(lam_eta)),
        residual=float(resid),
        branch="saddle",
        t=float(t),
    )


def _value_saddle(spec: Spectrum, t: float, s: float) -> float:
    """Grouped O(s)-piece assembly of F at a real positive root t.

    The zero atom contributes exactly 0 to <ln(lam+t)> - ln t, so only the
    positive part enters the log1p average.
    """
    b = spec.beta
    D = float(spec.dfun(t))
    one_m_D = 1.0 - D
    st = s * t
    return float(
        -0.5 * math.log1p(st - 1.0)
        - (b / 2.0) * spec.pos_log1p_over(t)
        + (1.0 - b) / 2.0 * math.log1p(-D)
        + (b / 2.0) * one_m_D
        + st / (2.0 * one_m_D)
        - (1.0 + b) / 2.0
    )


def _lim_zero_lam_xi(spec: Spectrum, xi: float) -> float:
    # t -> 0 boundary: Lx = t R(t)/xi -> (1 - D(0))/xi with D(0) = 1 - m0,
    # i.e. m0/xi; zero when the spectrum has no zero atom
    return spec.mass_at_zero() / xi
