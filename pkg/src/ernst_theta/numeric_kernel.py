"""Small dense linear algebra and quadrature rules used throughout the package.

Everything here works at genus size (a handful of rows), so clarity beats
blocking or other large-scale tricks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

ATOL = 1e-12
RTOL = 1e-10


class NotPositiveDefinite(ValueError):
    pass


class SingularMatrix(ValueError):
    pass


def close(a, b, atol: float = ATOL, rtol: float = RTOL) -> bool:
    """Hybrid comparison |a-b| <= atol + rtol*max(|a|,|b|), elementwise-all."""
    a = np.asarray(a)
    b = np.asarray(b)
    bound = atol + rtol * np.maximum(np.abs(a), np.abs(b))
    return bool(np.all(np.abs(a - b) <= bound))


def cholesky_spd(m) -> np.ndarray:
    """Lower-triangular L with L @ L.T == m for a real symmetric positive-definite m."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - m.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    n = m.shape[0]
    lower = np.zeros_like(m)
    for j in range(n):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > 0.0:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}")
        lower[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            lower[i, j] = (m[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def solve_linear(a, b) -> np.ndarray:
    """Solve a @ x = b with partial pivoting; b may be a vector or a matrix."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    norm = np.max(np.abs(a)) if a.size else 0.0
    if norm == 0.0 or not np.all(np.isfinite(a)):
        raise SingularMatrix("matrix is zero or not finite")
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    smallest = np.min(np.abs(np.diag(lu)))
    if smallest < 1e-14 * norm:
        raise SingularMatrix(f"pivot magnitude {smallest:.3e} below 1e-14*|A|")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, fn, a: float = -1.0, b: float = 1.0):
        """Apply the rule on [a, b]; for Chebyshev the weight 1/sqrt(1-t^2) is implied."""
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * self.nodes
        if self.kind == "gauss_chebyshev":
            return np.sum(self.weights * fn(x), axis=-1)
        return half * np.sum(self.weights * fn(x), axis=-1)


@lru_cache(maxsize=64)
def _rule(kind: str, order: int) -> QuadratureRule:
    if kind == "gauss_legendre":
        nodes, weights = np.polynomial.legendre.leggauss(order)
    elif kind == "gauss_chebyshev":
        k = np.arange(1, order + 1)
        nodes = np.cos((2 * k - 1) * np.pi / (2 * order))
        weights = np.full(order, np.pi / order)
    else:
        raise ValueError(f"unknown quadrature kind {kind!r}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(kind, order, nodes, weights)


def quadrature_nodes(kind: str, order: int) -> QuadratureRule:
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    return _rule(kind, int(order))
