"""Laplacian assembly, cached Cholesky solves and the Laplacian pseudoinverse."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, DomainError, NumericalError
from .graph import EdgeList, check_symmetric

DEFAULT_DELTA = 1e-6
EIG_RTOL = 1e-10


def laplacian_matrix(edges: EdgeList, capacities: np.ndarray | None = None) -> np.ndarray:
    """Unregularized weighted Laplacian B^T C B (capacities default to edge weights)."""
    c = edges.weights if capacities is None else np.asarray(capacities, dtype=np.float64)
    if c.shape != (len(edges),):
        raise DimensionError(f"expected {len(edges)} capacities, got shape {c.shape}")
    n = edges.n_nodes
    i, j = edges.src, edges.dst
    L = np.zeros((n, n))
    np.add.at(L, (i, j), -c)
    np.add.at(L, (j, i), -c)
    L[np.diag_indices(n)] = np.bincount(i, c, n) + np.bincount(j, c, n)
    return L


def dense_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """D - A for a symmetric weight matrix, diagonal of A ignored."""
    A = np.array(adjacency, dtype=np.float64)
    np.fill_diagonal(A, 0.0)
    return np.diag(A.sum(axis=1)) - A


@dataclass(frozen=True)
class RegularizedLaplacian:
    """``L = B^T C B + delta I`` with its lower Cholesky factor."""

    L: np.ndarray
    delta: float
    factor: np.ndarray

    @property
    def n(self) -> int:
        return self.L.shape[0]


def factorize(L: np.ndarray, delta: float) -> RegularizedLaplacian:
    try:
        chol = linalg.cholesky(L, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    L.setflags(write=False)
    chol.setflags(write=False)
    return RegularizedLaplacian(L, float(delta), chol)


def build_laplacian(
    edges: EdgeList, capacities: np.ndarray, delta: float = DEFAULT_DELTA
) -> RegularizedLaplacian:
    c = np.asarray(capacities, dtype=np.float64)
    if c.shape != (len(edges),):
        raise DimensionError(f"expected {len(edges)} capacities, got shape {c.shape}")
    if not np.all(c > 0) or not np.all(np.isfinite(c)):
        raise DomainError("capacities must be finite and strictly positive")
    if not delta > 0:
        raise DomainError("delta must be strictly positive")
    L = laplacian_matrix(edges, c)
    L[np.diag_indices_from(L)] += delta
    return factorize(L, delta)


def solve(lap: RegularizedLaplacian, rhs: np.ndarray) -> np.ndarray:
    """Solve L x = rhs with two triangular sweeps against the cached factor."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != lap.n:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, expected {lap.n}")
    y = linalg.solve_triangular(lap.factor, rhs, lower=True, check_finite=False)
    return linalg.solve_triangular(lap.factor, y, lower=True, trans="T", check_finite=False)


def pseudoinverse(L: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix by eigendecomposition.

    Eigenvalues at or below ``rtol * max_eigenvalue`` are treated as zero.
    """
    L = np.asarray(L, dtype=np.float64)
    check_symmetric(L, "L", tol=1e-10)
    try:
        w, V = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    top = np.max(np.abs(w)) if w.size else 0.0
    if top == 0.0:
        return np.zeros_like(L)
    keep = w > rtol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    Ldag = (V * inv) @ V.T
    return 0.5 * (Ldag + Ldag.T)
