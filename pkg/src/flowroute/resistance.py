from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraphError
from .graph import validate_sc
from .spectral import DEFAULT_DELTA, EIG_RTOL, dense_laplacian, pseudoinverse


@dataclass(frozen=True)
class ResistanceMatrix:
    R: np.ndarray
    regularized: bool = False


def n_components(sc: np.ndarray) -> int:
    return connected_components(np.asarray(sc) > 0, directed=False)[0]


def effective_resistance(
    sc: np.ndarray,
    regularize: bool = False,
    delta: float = DEFAULT_DELTA,
    rtol: float = EIG_RTOL,
) -> ResistanceMatrix:
    """Pairwise effective resistance with SC weights as conductances.

    ``R[i, j] = Ldag[i, i] + Ldag[j, j] - 2 Ldag[i, j]``. Disconnected graphs raise
    unless ``regularize`` is set, in which case ``(L + delta I)^-1`` replaces the
    pseudoinverse and the result is tagged.
    """
    sc = validate_sc(sc)
    L = dense_laplacian(sc)
    connected = n_components(sc) == 1
    if connected:
        G = pseudoinverse(L, rtol)
    elif regularize:
        G = np.linalg.inv(L + delta * np.eye(L.shape[0]))
        G = 0.5 * (G + G.T)
    else:
        raise DisconnectedGraphError(
            "structural graph is disconnected; effective resistance is infinite "
            "across components (use the regularized fallback to proceed)"
        )
    d = np.diag(G)
    R = d[:, None] + d[None, :] - 2.0 * G
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    np.maximum(R, 0.0, out=R)
    R.setflags(write=False)
    return ResistanceMatrix(R, regularized=not connected)
