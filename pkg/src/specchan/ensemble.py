"""Sampling of rotationally invariant channel matrices and full instances.

H = U D V^T with U, V Haar-orthogonal and D carrying the prescribed singular
values; the BASIC ensemble (IID Gaussian entries of variance 1/N) is sampled
directly without an SVD.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .models import sample_channel, sample_prior
from .spectra import Spectrum, make_empirical

__all__ = [
    "ChannelInstance",
    "sample_haar_orthogonal",
    "build_matrix",
    "make_instance",
    "dump_instance",
    "load_instance",
    "rng_for_trial",
]

_MAGIC = b"SPCH"
_VERSION = 1


def rng_for_trial(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent stream for one trial, derived from (master_seed, trial)."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(trial_index))))


def sample_haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed n x n orthogonal matrix.

    QR of a standard-Gaussian matrix with the R diagonal forced positive;
    without the sign fix the QR convention biases the distribution and the
    result is NOT Haar.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r))
    d[d == 0.0] = 1.0
    return q * d[None, :]


@dataclass(frozen=True)
class ChannelInstance:
    """One sampled channel: matrix, true input, received output."""

    H: np.ndarray
    x_true: np.ndarray
    y: np.ndarray
    N: int
    K: int
    seed: int
    ensemble_tag: str

    def __post_init__(self):
        if self.H.shape != (self.N, self.K):
            raise DomainError(f"H shape {self.H.shape} != (N={self.N}, K={self.K})")
        if self.x_true.shape != (self.K,) or self.y.shape != (self.N,):
            raise DomainError("x_true/y dimensions inconsistent with (N, K)")

    @property
    def beta(self) -> float:
        return self.K / self.N

    def empirical_spectrum(self) -> Spectrum:
        """make_empirical of the nonzero eigenvalues of H^T H (via the smaller Gram)."""
        if self.N <= self.K:
            gram = self.H @ self.H.T
        else:
            gram = self.H.T @ self.H
        eigs = np.linalg.eigvalsh(gram)
        eigs = np.clip(eigs, 0.0, None)
        return make_empirical(eigs, self.K, beta=self.beta)


def _quantile_singular_values(spec: Spectrum, n: int, K: int) -> np.ndarray:
    """Deterministic d_k = sqrt(lambda) at the quantiles of spec.

    The K-point empirical law of H^T H should reproduce spec; n = min(N, K)
    of those points carry the (potentially) nonzero values.
    """
    locs = [loc for _, loc in spec.atoms]
    masses = [m for m, _ in spec.atoms]
    if spec.continuous is not None:
        locs += list(spec.continuous.nodes)
        masses += list(spec.continuous.weights)
    locs = np.asarray(locs)
    masses = np.asarray(masses)
    order = np.argsort(locs)
    locs, masses = locs[order], masses[order]
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    qs = (np.arange(K) + 0.5) / K
    vals = locs[np.searchsorted(cdf, qs, side="left").clip(0, len(locs) - 1)]
    top = np.sort(vals)[::-1][:n]
    return np.sqrt(np.clip(top, 0.0, None))


def build_matrix(spec_or_tag, N: int, K: int, rng: np.random.Generator,
                 orthogonal_override: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Sample an N x K channel matrix for the requested ensemble.

    spec_or_tag: "wbes" | "basic" | a Spectrum (custom singular values at
    deterministic quantiles). "basic" draws IID Gaussian(0, 1/N) entries and
    involves no SVD; the others compose H = U D V^T from Haar factors.
    orthogonal_override=(U, V) replaces the Haar factors (tests only).
    """
    if N < 1 or K < 1:
        raise DomainError(f"dimensions must be >= 1, got N={N}, K={K}")
    if isinstance(spec_or_tag, str) and spec_or_tag == "basic":
        return rng.standard_normal((N, K)) / np.sqrt(N)

    if isinstance(spec_or_tag, str) and spec_or_tag == "wbes":
        if K <= N:
            raise DomainError(f"WBES needs K > N, got K={K}, N={N}")
        beta = K / N
        d = np.full(N, np.sqrt(beta))
    elif isinstance(spec_or_tag, Spectrum):
        d = _quantile_singular_values(spec_or_tag, min(N, K), K)
    else:
        raise DomainError(f"unknown ensemble {spec_or_tag!r}")

    if orthogonal_override is not None:
        U, V = orthogonal_override
    else:
        U = sample_haar_orthogonal(N, rng)
        V = sample_haar_orthogonal(K, rng)
    r = len(d)
    # H = U[:, :r] diag(d) (V[:, :r])^T without forming the N x K diagonal
    return (U[:, :r] * d[None, :]) @ V[:, :r].T


def make_instance(ensemble, N: int, K: int, prior, channel, seed: int) -> ChannelInstance:
    """Sample (H, x, y) reproducibly from a single 64-bit seed."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    H = build_matrix(ensemble, N, K, rng)
    x = sample_prior(prior, K, rng)
    y = sample_channel(channel, H @ x, rng)
    tag = ensemble if isinstance(ensemble, str) else "custom-spectrum"
    return ChannelInstance(H=H, x_true=x, y=y, N=N, K=K, seed=int(seed), ensemble_tag=tag)


def dump_instance(instance: ChannelInstance, path) -> None:
    """32-byte header (magic, version, N, K, seed) then little-endian f64
    payload: H row-major, x_true, y."""
    header = _MAGIC + struct.pack("<IQQQ", _VERSION, instance.N, instance.K,
                                  instance.seed & 0xFFFFFFFFFFFFFFFF)
    assert len(header) == 32
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(instance.H, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.x_true, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.y, dtype="<f8").tobytes())


def load_instance(path, ensemble_tag: str = "custom-spectrum") -> ChannelInstance:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise DomainError(f"bad magic {raw[:4]!r} in {path}")
    version, N, K, seed = struct.unpack("<IQQQ", raw[4:32])
    if version != _VERSION:
        raise DomainError(f"unsupported dump version {version}")
    off = 32
    H = np.frombuffer(raw, dtype="<f8", count=N * K, offset=off).reshape(N, K).copy()
    off += 8 * N * K
    x = np.frombuffer(raw, dtype="<f8", count=K, offset=off).copy()
    off += 8 * K
    y = np.frombuffer(raw, dtype="<f8", count=N, offset=off).copy()
    return ChannelInstance(H=H, x_true=x, y=y, N=int(N), K=int(K), seed=int(seed),
                           ensemble_tag=ensemble_tag)
