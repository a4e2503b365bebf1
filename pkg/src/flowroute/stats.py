"""Edge-wise group comparison of flow maps: Welch t-tests, FDR control, top-k ranking."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import DimensionError, InputValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupStats:
    t: np.ndarray
    p: np.ndarray
    reject: np.ndarray
    direction: np.ndarray
    degenerate: np.ndarray
    q: float


def edge_ttest(flows_a: np.ndarray, flows_b: np.ndarray):
    """Two-sided Welch test per column of ``flows_a`` (patients) vs ``flows_b`` (controls).

    Returns ``(t, p, degenerate)``. Columns where both groups are constant get
    t = 0, p = 1 if the means agree and t = +-inf, p = 0 (flagged) otherwise.
    """
    a = np.atleast_2d(np.asarray(flows_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(flows_b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionError("groups have different numbers of edges")
    na, nb = a.shape[0], b.shape[0]
    if na < 2 or nb < 2:
        raise InputValidationError("each group needs at least 2 subjects")
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    va, vb = a.var(axis=0, ddof=1) / na, b.var(axis=0, ddof=1) / nb
    se2 = va + vb
    diff = ma - mb
    ok = se2 > 0
    t = np.zeros_like(diff)
    p = np.ones_like(diff)
    se = np.sqrt(se2[ok])
    t[ok] = diff[ok] / se
    dof = se2[ok] ** 2 / (va[ok] ** 2 / (na - 1) + vb[ok] ** 2 / (nb - 1))
    p[ok] = np.minimum(1.0, 2.0 * sps.t.sf(np.abs(t[ok]), dof))
    degenerate = ~ok & (diff != 0)
    t[degenerate] = np.copysign(np.inf, diff[degenerate])
    p[degenerate] = 0.0
    return t, p, degenerate


def fdr_bh(p: np.ndarray, q: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up: reject every hypothesis ranked at or below the
    largest rank i with p_(i) <= i q / m."""
    p = np.asarray(p, dtype=np.float64).ravel()
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise InputValidationError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    below = p[order] <= q * np.arange(1, m + 1) / m
    reject = np.zeros(m, dtype=bool)
    if below.any():
        k = np.flatnonzero(below)[-1]
        reject[order[: k + 1]] = True
    return reject


def fdr_by(p: np.ndarray, q: float = 0.05) -> np.ndarray:
    """Benjamini-Yekutieli: BH at level q / H_m, valid under arbitrary dependence."""
    m = np.asarray(p).size
    harmonic = np.sum(1.0 / np.arange(1, m + 1)) if m else 1.0
    return fdr_bh(p, q / harmonic)


def group_stats(
    flows_patient: np.ndarray,
    flows_control: np.ndarray,
    q: float = 0.05,
    method: str = "bh",
    log_flow: bool = False,
    eps: float = 1e-6,
) -> GroupStats:
    a, b = np.asarray(flows_patient, dtype=np.float64), np.asarray(flows_control, dtype=np.float64)
    if log_flow:
        a, b = np.log(a + eps), np.log(b + eps)
    t, p, degenerate = edge_ttest(a, b)
    reject = (fdr_by if method == "by" else fdr_bh)(p, q)
    direction = np.sign(a.mean(axis=0) - b.mean(axis=0)).astype(int)
    return GroupStats(t, p, reject, direction, degenerate, q)


def topk_edges(mean_phi: np.ndarray, edges: np.ndarray, k: int) -> np.ndarray:
    """Edge indices by descending mean flow; ties fall back to (i, j) order."""
    mean_phi = np.asarray(mean_phi, dtype=np.float64)
    edges = np.asarray(edges).reshape(-1, 2)
    M = mean_phi.size
    if edges.shape[0] != M:
        raise DimensionError("mean_phi and edges differ in length")
    if k > M:
        log.warning("top-k of %d requested but only %d edges exist; returning all", k, M)
        k = M
    order = np.lexsort((edges[:, 1], edges[:, 0], -mean_phi))
    return order[:k]
