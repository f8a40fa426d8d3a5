"""Quadrature helpers.

gh_nodes: Gauss-Hermite for standard-normal expectations,
int Dz f(z) ~ sum w f(z). leg_nodes: Gauss-Legendre on [lo, hi].
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite


@lru_cache(maxsize=32)
def gh_nodes(n: int = 61) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_hermite(int(n))
    z = x * math.sqrt(2.0)
    w = w / math.sqrt(math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@lru_cache(maxsize=32)
def leg_nodes(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = (hi - lo) / 2.0
    nodes = (x + 1.0) * half + lo
    weights = w * half
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
