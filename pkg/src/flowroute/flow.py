"""Demand-driven information flow on a capacitated structural graph.

For a unit demand s -> t the node potentials solve ``L_flow v = e_s - e_t`` and
edge m = (i, j) carries intensity ``c_m (v_i - v_j)^2``. Summing intensities over
all ordered pairs weighted by ``|fc[s, t]|`` collapses to

    phi_m = 2 c_m g_m^T L_fc g_m,    g_m = L_flow^-1 (e_i - e_j),

which is what :func:`aggregate_flow_closed_form` evaluates with one block solve.
:func:`aggregate_flow_oracle` keeps the literal double sum for testing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDemandError, DimensionError, UsageError
from .graph import EdgeList, check_symmetric
from .spectral import RegularizedLaplacian, solve


@dataclass(frozen=True)
class DemandLaplacian:
    """``D_fc - |A_fc|`` with the diagonal of ``|A_fc|`` zeroed first."""

    Lfc: np.ndarray

    @property
    def n(self) -> int:
        return self.Lfc.shape[0]


def demand_weights(fc: np.ndarray) -> np.ndarray:
    W = np.abs(np.asarray(fc, dtype=np.float64))
    np.fill_diagonal(W, 0.0)
    return W


def demand_laplacian(fc: np.ndarray) -> DemandLaplacian:
    fc = np.asarray(fc, dtype=np.float64)
    check_symmetric(fc, "fc")
    W = demand_weights(fc)
    Lfc = np.diag(W.sum(axis=1)) - W
    Lfc.setflags(write=False)
    return DemandLaplacian(Lfc)


@dataclass(frozen=True)
class _ForwardState:
    lap: RegularizedLaplacian
    edges: EdgeList
    G: np.ndarray  # (N, M) columns g_m
    LfcG: np.ndarray  # (N, M)
    Lfc: np.ndarray


@dataclass(frozen=True)
class FlowMap:
    phi: np.ndarray
    capacities: np.ndarray
    per_pair: dict | None = None
    state: _ForwardState | None = None


def _check_pair(n: int, s: int, t: int) -> None:
    if s == t:
        raise DegenerateDemandError(f"source and target coincide (node {s})")
    if not (0 <= s < n and 0 <= t < n):
        raise DimensionError(f"demand ({s}, {t}) outside node range [0, {n})")


def solve_potential(lap: RegularizedLaplacian, s: int, t: int) -> np.ndarray:
    _check_pair(lap.n, s, t)
    rhs = np.zeros(lap.n)
    rhs[s] = 1.0
    rhs[t] = -1.0
    return solve(lap, rhs)


def pair_intensity(
    lap: RegularizedLaplacian, edges: EdgeList, capacities: np.ndarray, s: int, t: int
) -> np.ndarray:
    v = solve_potential(lap, s, t)
    dv = v[edges.src] - v[edges.dst]
    return np.asarray(capacities, dtype=np.float64) * dv * dv


def _as_lfc(Lfc) -> np.ndarray:
    return Lfc.Lfc if isinstance(Lfc, DemandLaplacian) else np.asarray(Lfc, dtype=np.float64)


def aggregate_flow_closed_form(
    lap: RegularizedLaplacian,
    edges: EdgeList,
    capacities: np.ndarray,
    Lfc: DemandLaplacian | np.ndarray,
) -> FlowMap:
    """Aggregated flow per edge; keeps the solve state for :func:`flow_gradient_adjoint`."""
    F = _as_lfc(Lfc)
    c = np.asarray(capacities, dtype=np.float64)
    if F.shape != (lap.n, lap.n):
        raise DimensionError(f"L_fc has shape {F.shape}, expected {(lap.n, lap.n)}")
    if c.shape != (len(edges),) or edges.n_nodes != lap.n:
        raise DimensionError("capacities / edge list do not match the Laplacian")
    G = solve(lap, edges.incidence().columns())
    FG = F @ G
    q = np.einsum("nm,nm->m", G, FG)
    phi = 2.0 * c * q
    # Round-off can leave tiny negatives when L_fc is (near) zero.
    np.maximum(phi, 0.0, out=phi)
    return FlowMap(phi, c, state=_ForwardState(lap, edges, G, FG, F))


def aggregate_flow_oracle(
    lap: RegularizedLaplacian,
    edges: EdgeList,
    capacities: np.ndarray,
    fc: np.ndarray,
    keep_pairs: bool = False,
) -> FlowMap:
    """Brute-force double sum over ordered pairs s != t; O(N^2) solves, tests only."""
    W = demand_weights(fc)
    n = lap.n
    if W.shape != (n, n):
        raise DimensionError(f"fc has shape {W.shape}, expected {(n, n)}")
    phi = np.zeros(len(edges))
    pairs = {} if keep_pairs else None
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            inten = pair_intensity(lap, edges, capacities, s, t)
            if pairs is not None:
                pairs[(s, t)] = inten
            phi += W[s, t] * inten
    return FlowMap(phi, np.asarray(capacities, dtype=np.float64), per_pair=pairs)


def flow_gradient_adjoint(flow: FlowMap, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian product of ``upstream . phi`` w.r.t. capacities and L_fc.

    Uses one extra block solve ``H = L_flow^-1 L_fc G`` against the cached factor.
    With ``w = upstream * c`` and ``P = H diag(w) G^T``:

        d/dc_k   = 2 upstream_k q_k - 4 b_k^T P b_k
        d/dL_fc  = 2 G diag(w) G^T
    """
    st = flow.state
    if st is None:
        raise UsageError("flow_gradient_adjoint needs the forward state of aggregate_flow_closed_form")
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != flow.phi.shape:
        raise DimensionError(f"upstream has shape {u.shape}, expected {flow.phi.shape}")
    c = flow.capacities
    G, FG = st.G, st.LfcG
    q = np.einsum("nm,nm->m", G, FG)
    w = u * c
    H = solve(st.lap, FG)
    P = (H * w) @ G.T
    i, j = st.edges.src, st.edges.dst
    bPb = P[i, i] + P[j, j] - P[i, j] - P[j, i]
    grad_c = 2.0 * u * q - 4.0 * bPb
    grad_Lfc = 2.0 * (G * w) @ G.T
    return grad_c, 0.5 * (grad_Lfc + grad_Lfc.T)


def lfc_grad_to_fc(grad_Lfc: np.ndarray, fc: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. L_fc onto the symmetric pair values fc[s, t] = fc[t, s].

    Entry (s, t) is the derivative when both mirror entries move together.
    """
    g = np.asarray(grad_Lfc)
    d = np.diag(g)
    pair = d[:, None] + d[None, :] - g - g.T
    out = np.sign(np.asarray(fc, dtype=np.float64)) * pair
    np.fill_diagonal(out, 0.0)
    return out


def demand_identity_matrix(fc: np.ndarray) -> np.ndarray:
    """``sum_{s,t} |fc_st| (e_s - e_t)(e_s - e_t)^T`` by explicit outer products."""
    W = demand_weights(fc)
    n = W.shape[0]
    Q = np.zeros((n, n))
    for s in range(n):
        for t in range(n):
            if s == t or W[s, t] == 0.0:
                continue
            b = np.zeros(n)
            b[s], b[t] = 1.0, -1.0
            Q += W[s, t] * np.outer(b, b)
    return Q
