"""Message-passing decoder for rotationally invariant linear channels.

The algorithm alternates an H-step (channel side) and a V-step (prior side).
Each step searches the spectrum-side saddle pair -- the same two conditions
behind F(xi, eta) -- then applies the scalar denoiser with the
self-reaction-cancellation (SRC) terms chi_hat_u m_u / chi_hat_x m_x.

Update order per iteration (see docs/math_notes.md for the searches):

  H-step: L_x <- condition-1 root at the current empirical chi_x with L_u
          pinned (Gaussian channels: L_u = sigma2 throughout, so this is the
          closed-form quadratic of the WBES reduction, first iteration
          included); chi_hat_u <- 1/chi_u - L_u at that saddle;
          h_u <- h_u - chi_hat_u m_u;  m_u <- channel mean(y, h_u);
          h_x <- H^T m_u;  chi_u <- mean curvature;  L_u <- 1/chi_u - chi_hat_u
  V-step: (chi_x, L_x) <- condition-2 root given (chi_u, L_u) -- for Gaussian
          channels this returns exactly the H-step's L_x and the empirical
          chi_x; chi_hat_x <- 1/chi_x - L_x;
          h_x <- h_x + chi_hat_x m_x;  m_x <- prior mean(h_x);
          h_u <- H m_x;  chi_x <- mean variance;  L_x <- 1/chi_x - chi_hat_x

For a Gaussian channel L_u = 1/chi_u - chi_hat_u collapses to sigma2 after
every H-step; decode_wbes_gaussian is the closed-form reduction of this flow
with identical floating-point operation order, so the two paths agree to
~1e-14 per component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, RangeError, ConvergenceError, UnsupportedError
from .models import GaussianChannel, channel_denoise, prior_denoise
from .rmt import hstep_quantities, hstep_refresh, vstep_quantities
from .spectra import Spectrum

__all__ = [
    "DecoderState",
    "DecodeResult",
    "DecodeOptions",
    "init",
    "h_step",
    "v_step",
    "decode",
    "decode_wbes_gaussian",
    "hard_bits",
]


@dataclass
class DecoderState:
    m_x: np.ndarray
    m_u: np.ndarray
    h_x: np.ndarray
    h_u: np.ndarray
    chi_x: float
    chi_u: float
    lambda_x: float
    lambda_u: float
    chi_hat_x: float
    chi_hat_u: float
    t: int = 0


@dataclass(frozen=True)
class DecodeOptions:
    max_iter: int = 200
    tol: float = 1e-8
    src: bool = True
    damping: float = 0.0
    init_mode: str = "paper_fig1"
    record_trajectory: bool = False

    def __post_init__(self):
        if not (0.0 <= self.damping < 1.0):
            raise DomainError(f"damping must be in [0, 1), got {self.damping}")
        if self.init_mode not in ("paper_fig1", "matched_filter"):
            raise DomainError(f"unknown init mode {self.init_mode!r}")


@dataclass
class TrajectoryRow:
    t: int
    ber: float | None
    chi_x: float
    chi_u: float
    lambda_x: float
    chi_hat_x: float
    chi_hat_u: float
    max_delta: float


@dataclass
class DecodeResult:
    m_x_final: np.ndarray
    bits: np.ndarray
    iterations: int
    converged: bool
    diverged: bool = False
    ties: int = 0
    trajectory: list[TrajectoryRow] | None = None
    extras: dict = field(default_factory=dict)


def hard_bits(m_x: np.ndarray) -> tuple[np.ndarray, int]:
    """sign(m_x) with sign(0) := +1; returns (bits, tie count)."""
    ties = int(np.count_nonzero(m_x == 0.0))
    return np.where(m_x >= 0.0, 1.0, -1.0), ties


def init(H: np.ndarray, y: np.ndarray, prior, channel, mode: str = "paper_fig1") -> DecoderState:
    """Initial decoder state.

    paper_fig1: chi_x = T_x, chi_hat_x = 0, L_x = 1/chi_x, m_x = prior means,
    h_u = H m_x, m_u = 0. matched_filter (Gaussian channel + binary prior
    only): m_x = tanh(H^T y / sigma2), the rest derived the same way. L_u is
    seeded from the zero-field channel curvature (= sigma2 for the Gaussian
    channel), which the first H-step search needs.
    """
    N, K = H.shape
    if y.shape != (N,):
        raise DomainError(f"y shape {y.shape} != ({N},)")
    if mode == "paper_fig1":
        m_x = np.full(K, prior.mean_value, dtype=float)
        chi_x = float(prior.second_moment - prior.mean_value**2)
    elif mode == "matched_filter":
        if not isinstance(channel, GaussianChannel) or not getattr(prior, "is_binary", False):
            raise UnsupportedError("matched_filter init needs a Gaussian channel and binary prior")
        m_x = np.tanh((H.T @ y) / channel.sigma2)
        chi_x = float(np.mean(1.0 - m_x * m_x))
    else:
        raise DomainError(f"unknown init mode {mode!r}")
    chi_hat_x = 0.0
    lambda_x = 1.0 / chi_x - chi_hat_x
    h_u = H @ m_x
    _, curv0 = channel_denoise(channel, y, h_u, 0.0)
    lambda_u0 = 1.0 / float(np.mean(curv0))
    return DecoderState(
        m_x=m_x,
        m_u=np.zeros(N),
        h_x=np.zeros(K),
        h_u=h_u,
        chi_x=chi_x,
        chi_u=math.nan,
        lambda_x=lambda_x,
        lambda_u=lambda_u0,
        chi_hat_x=chi_hat_x,
        chi_hat_u=math.nan,
        t=0,
    )


def h_step(state: DecoderState, H: np.ndarray, y: np.ndarray, spec: Spectrum,
           channel, src: bool = True) -> DecoderState:
    """Channel-side half-iteration (mutates and returns state)."""
    if src:
        try:
            lam_x, _, chi_hat_u = hstep_refresh(spec, state.chi_x, state.lambda_u)
            state.lambda_x = lam_x
        except RangeError:
            # no condition-1 root in L_x at this chi_x (possible without a
            # zero atom, transiently): treat the u side as unresolved
            # (L_u -> inf boundary), whose limit is the annealed interference
            # variance chi_hat_u = b <lam> chi_x
            state.lambda_x = 1.0 / state.chi_x
            chi_hat_u = spec.beta * spec.mean * state.chi_x
    else:
        chi_hat_u = 0.0
    state.chi_hat_u = chi_hat_u
    state.h_u = state.h_u - chi_hat_u * state.m_u
    mean, curv = channel_denoise(channel, y, state.h_u, chi_hat_u)
    state.m_u = np.asarray(mean, dtype=float)
    state.h_x = H.T @ state.m_u
    state.chi_u = float(np.mean(curv))
    if state.chi_u <= 0 or not math.isfinite(state.chi_u):
        raise FloatingPointError(f"chi_u = {state.chi_u} after H-step")
    state.lambda_u = 1.0 / state.chi_u - chi_hat_u
    return state


def v_step(state: DecoderState, H: np.ndarray, spec: Spectrum, prior,
           src: bool = True, damping: float = 0.0,
           self_coupling: np.ndarray | None = None) -> DecoderState:
    """Prior-side half-iteration (mutates and returns state).

    With SRC off, the Onsager feedback chi_hat_x m_x vanishes, but the field
    H^T m_u still carries each component's own matrix diagonal, which the
    posterior never sees (for binary inputs it is an additive constant);
    `self_coupling` = diag(H^T H) compensates it, giving the naive
    mean-field iteration.
    """
    if src:
        _, _, chi_hat_x = vstep_quantities(spec, state.chi_u, state.lambda_u)
        state.h_x = state.h_x + chi_hat_x * state.m_x
    else:
        chi_hat_x = 0.0
        if self_coupling is not None:
            state.h_x = state.h_x + (self_coupling * state.chi_u) * state.m_x
    state.chi_hat_x = chi_hat_x
    mean, var = prior_denoise(prior, state.h_x, chi_hat_x)
    m_new = np.asarray(mean, dtype=float)
    if damping > 0.0:
        m_new = (1.0 - damping) * m_new + damping * state.m_x
    state.m_x = m_new
    state.h_u = H @ state.m_x
    state.chi_x = float(np.mean(var))
    state.lambda_x = 1.0 / state.chi_x - chi_hat_x
    state.t += 1
    return state


def _ber(m_x: np.ndarray, x_true: np.ndarray | None) -> float | None:
    if x_true is None:
        return None
    bits, _ = hard_bits(m_x)
    return float(np.mean(bits != np.sign(x_true)))


def decode(H: np.ndarray, y: np.ndarray, spec: Spectrum, prior, channel,
           opts: DecodeOptions = DecodeOptions(), x_true: np.ndarray | None = None) -> DecodeResult:
    """Iterate H-step / V-step until max |delta m_x| < tol or max_iter.

    Divergence (chi_x leaving (0, T_x], non-finite messages, or a saddle
    search leaving its bracket) sets the diverged flag and stops with the
    partial trajectory; nothing is clamped.
    """
    state = init(H, y, prior, channel, opts.init_mode)
    T_x = float(prior.second_moment)
    self_coupling = None if opts.src else np.sum(H * H, axis=0)
    traj: list[TrajectoryRow] | None = [] if opts.record_trajectory else None
    if traj is not None:
        traj.append(TrajectoryRow(0, _ber(state.m_x, x_true), state.chi_x, state.chi_u,
                                  state.lambda_x, state.chi_hat_x, state.chi_hat_u, math.nan))
    converged = False
    diverged = False
    iterations = 0
    for _ in range(opts.max_iter):
        m_prev = state.m_x
        try:
            h_step(state, H, y, spec, channel, src=opts.src)
            v_step(state, H, spec, prior, src=opts.src, damping=opts.damping,
                   self_coupling=self_coupling)
        except (FloatingPointError, RangeError, ConvergenceError):
            diverged = True
            break
        iterations = state.t
        delta = float(np.max(np.abs(state.m_x - m_prev)))
        if traj is not None:
            traj.append(TrajectoryRow(state.t, _ber(state.m_x, x_true), state.chi_x,
                                      state.chi_u, state.lambda_x, state.chi_hat_x,
                                      state.chi_hat_u, delta))
        if not np.all(np.isfinite(state.m_x)) or not (0.0 < state.chi_x <= T_x + 1e-9):
            diverged = True
            break
        if delta < opts.tol:
            converged = True
            break
    bits, ties = hard_bits(state.m_x)
    return DecodeResult(m_x_final=state.m_x, bits=bits, iterations=iterations,
                        converged=converged, diverged=diverged, ties=ties, trajectory=traj)


def decode_wbes_gaussian(H: np.ndarray, y: np.ndarray, beta: float, sigma2: float,
                         opts: DecodeOptions = DecodeOptions(),
                         x_true: np.ndarray | None = None) -> DecodeResult:
    """Closed-form WBES + Gaussian-channel + binary-prior decoder.

    Same recursion as `decode` with every spectrum-side search replaced by
    the WBES closed forms: L_x^t is the positive root of the quadratic
    chi_x^t = (1-1/b)/L_x + (1/b) sigma2/(sigma2 L_x + b) at the current
    empirical chi_x^t = 1 - |m_x|^2/K, chi_hat_u = 1/chi_u - L_u (= b/L_x),
    and chi_hat_x = 1/chi_x^t - L_x^t. Vector operations mirror `decode`
    exactly, so both paths agree to ~1e-14 per component.
    """
    if not beta > 1:
        raise DomainError(f"WBES decoding needs beta > 1, got {beta}")
    N, K = H.shape
    if opts.init_mode == "matched_filter":
        m_x = np.tanh((H.T @ y) / sigma2)
        chi_x = float(np.mean(1.0 - m_x * m_x))
    else:
        m_x = np.zeros(K)
        chi_x = 1.0
    m_u = np.zeros(N)
    h_u = H @ m_x
    lambda_u = sigma2
    chi_hat_x = 0.0
    lambda_x = 1.0 / chi_x - chi_hat_x
    self_coupling = None if opts.src else np.sum(H * H, axis=0)

    saddle_residuals: list[float] = []
    traj: list[TrajectoryRow] | None = [] if opts.record_trajectory else None
    if traj is not None:
        traj.append(TrajectoryRow(0, _ber(m_x, x_true), chi_x, math.nan,
                                  lambda_x, chi_hat_x, math.nan, math.nan))
    converged = False
    diverged = False
    iterations = 0
    for t in range(1, opts.max_iter + 1):
        m_prev = m_x
        # H-step: positive quadratic root of condition 1 at (chi_x, L_u)
        if opts.src:
            a = chi_x * lambda_u
            bq = chi_x * beta - lambda_u
            disc = bq * bq + 4.0 * a * (beta - 1.0)
            lambda_x = (-bq + math.sqrt(disc)) / (2.0 * a)
            chi_u_s = lambda_x / (lambda_x * lambda_u + beta)
            saddle_residuals.append(abs(
                chi_x - (1.0 - 1.0 / beta) / lambda_x
                - (1.0 / beta) * lambda_u / (lambda_u * lambda_x + beta)))
            chi_hat_u = 1.0 / chi_u_s - lambda_u
        else:
            chi_hat_u = 0.0
        h_u = h_u - chi_hat_u * m_u
        m_u = (y - h_u) / (sigma2 + chi_hat_u)
        h_x = H.T @ m_u
        chi_u = 1.0 / (sigma2 + chi_hat_u)
        lambda_u = 1.0 / chi_u - chi_hat_u
        # V-step: condition-2 root for L_x given (chi_u, L_u), then cond. 1
        if opts.src:
            lam_x_v = beta * chi_u / (1.0 - lambda_u * chi_u)
            chi_x_v = (1.0 - 1.0 / beta) / lam_x_v \
                + (1.0 / beta) * lambda_u / (lam_x_v * lambda_u + beta)
            chi_hat_x = 1.0 / chi_x_v - lam_x_v
            h_x = h_x + chi_hat_x * m_x
        else:
            chi_hat_x = 0.0
            h_x = h_x + (self_coupling * chi_u) * m_x
        m_new = np.tanh(h_x)
        if opts.damping > 0.0:
            m_new = (1.0 - opts.damping) * m_new + opts.damping * m_x
        m_x = m_new
        h_u = H @ m_x
        chi_x = float(np.mean(1.0 - m_x * m_x))
        lambda_x = 1.0 / chi_x - chi_hat_x
        iterations = t

        delta = float(np.max(np.abs(m_x - m_prev)))
        if traj is not None:
            traj.append(TrajectoryRow(t, _ber(m_x, x_true), chi_x, chi_u, lambda_x,
                                      chi_hat_x, chi_hat_u, delta))
        if not np.all(np.isfinite(m_x)) or not (0.0 < chi_x <= 1.0 + 1e-9):
            diverged = True
            break
        if delta < opts.tol:
            converged = True
            break
    bits, ties = hard_bits(m_x)
    return DecodeResult(m_x_final=m_x, bits=bits, iterations=iterations,
                        converged=converged, diverged=diverged, ties=ties,
                        trajectory=traj, extras={"saddle_residuals": saddle_residuals})
