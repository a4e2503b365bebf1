"""Built-in numerical self-checks behind ``flowroute selftest``.

Each check compares a fast path against an independent slow one (brute-force
sums, finite differences, hand-worked values) and reports the worst deviation.
"""
from __future__ import annotations

import io
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import (
    aggregate_flow_closed_form,
    aggregate_flow_oracle,
    demand_identity_matrix,
    demand_laplacian,
    flow_gradient_adjoint,
    lfc_grad_to_fc,
)
from .graph import build_edge_list
from .resistance import effective_resistance
from .spectral import build_laplacian
from .stats import fdr_bh


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool


def random_connected_sc(rng: np.random.Generator, n: int, p: float = 0.4) -> np.ndarray:
    """Random weighted graph guaranteed connected by a spanning path under a random relabeling."""
    w = np.triu(rng.uniform(0.2, 2.0, (n, n)) * (rng.random((n, n)) < p), 1)
    perm = rng.permutation(n)
    for a, b in zip(perm[:-1], perm[1:]):
        i, j = min(a, b), max(a, b)
        if w[i, j] == 0.0:
            w[i, j] = rng.uniform(0.2, 2.0)
    return w + w.T


def random_fc(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, (n, n))
    fc = np.triu(a, 1)
    fc = fc + fc.T
    np.fill_diagonal(fc, 1.0)
    return fc


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def check_oracle(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(3, 16))
        sc, fc = random_connected_sc(rng, n), random_fc(rng, n)
        edges = build_edge_list(sc)
        caps = rng.uniform(0.1, 3.0, len(edges))
        lap = build_laplacian(edges, caps)
        fast = aggregate_flow_closed_form(lap, edges, caps, demand_laplacian(fc)).phi
        slow = aggregate_flow_oracle(lap, edges, caps, fc).phi
        worst = max(worst, float(np.max(np.abs(fast - slow) / np.abs(slow))))
    return worst


def check_identity(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        fc = random_fc(rng, int(rng.integers(2, 16)))
        diff = demand_identity_matrix(fc) - 2.0 * demand_laplacian(fc).Lfc
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def check_adjoint(rng, n: int = 10, h: float = 1e-6) -> float:
    """Worst relative error of the adjoint gradient against central differences."""
    sc, fc = random_connected_sc(rng, n), random_fc(rng, n)
    edges = build_edge_list(sc)
    caps = rng.uniform(0.5, 2.0, len(edges))
    u = rng.standard_normal(len(edges))

    def objective(c, f):
        lap = build_laplacian(edges, c)
        return float(u @ aggregate_flow_closed_form(lap, edges, c, demand_laplacian(f)).phi)

    fm = aggregate_flow_closed_form(build_laplacian(edges, caps), edges, caps, demand_laplacian(fc))
    g_c, g_L = flow_gradient_adjoint(fm, u)
    g_fc = lfc_grad_to_fc(g_L, fc)

    fd_c = np.empty_like(caps)
    for k in range(len(caps)):
        e = np.zeros_like(caps)
        e[k] = h
        fd_c[k] = (objective(caps + e, fc) - objective(caps - e, fc)) / (2 * h)
    iu, ju = np.triu_indices(n, 1)
    fd_f = np.empty(iu.size)
    for k, (i, j) in enumerate(zip(iu, ju)):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = h
        fd_f[k] = (objective(caps, fc + E) - objective(caps, fc - E)) / (2 * h)
    return max(_rel(g_c, fd_c), _rel(g_fc[iu, ju], fd_f))


def check_model_gradient(rng, samples: int = 20, h: float = 1e-5) -> float:
    from .graph import ConnectomePair
    from .nn import autodiff as ad
    from .nn.model import FlowRouteNet, ModelConfig, prepare

    n = 6
    pair = ConnectomePair(random_connected_sc(rng, n, 0.6), random_fc(rng, n), label=1)
    cfg = ModelConfig(d_x=n, d=8, res_hidden=8, gate_hidden=8, dropout=0.0)
    net = FlowRouteNet(cfg, rng=rng)
    subj = prepare(pair, cfg)
    net.zero_grad()
    net.loss(subj).backward()
    names = sorted(net.params)
    worst = 0.0
    for _ in range(samples):
        name = names[int(rng.integers(len(names)))]
        p = net.params[name]
        idx = tuple(int(rng.integers(s)) for s in p.data.shape)
        analytic = 0.0 if p.grad is None else float(p.grad[idx])
        orig = p.data[idx]
        vals = []
        for sgn in (1.0, -1.0):
            p.data = p.data.copy()
            p.data[idx] = orig + sgn * h
            with ad.no_grad():
                vals.append(net.loss(subj).item())
        p.data = p.data.copy()
        p.data[idx] = orig
        numeric = (vals[0] - vals[1]) / (2 * h)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst


def check_resistance_examples() -> float:
    two = effective_resistance(np.array([[0.0, 2.5], [2.5, 0.0]])).R[0, 1]
    tri = effective_resistance(np.ones((3, 3)) - np.eye(3)).R
    return max(abs(two - 1 / 2.5), float(np.max(np.abs(tri[np.triu_indices(3, 1)] - 2 / 3))))


def check_mask_peak() -> float:
    from .nn.model import make_mask

    sc = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    edges = build_edge_list(sc)
    m = make_mask(np.array([1.0, 2.0, 4.0]), edges, 8.0, 0.5).data
    return abs(m[1, 2] - 1.0 / (1.0 + np.exp(-4.0)))


def check_bh_example() -> float:
    reject = fdr_bh(np.array([0.01, 0.02, 0.03, 0.04, 0.2]), 0.05)
    return float(abs(int(reject.sum()) - 4))


def check_checkpoint_roundtrip(rng) -> float:
    from .nn import checkpoint

    arrays = {"a": rng.standard_normal((3, 4)), "b": np.array([np.pi]), "c": rng.standard_normal(5)}
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "rt.ckpt"
        checkpoint.save(path, arrays, {"k": 1})
        back, cfg = checkpoint.load(path)
    same = all(back[k].tobytes() == np.ascontiguousarray(v).tobytes() for k, v in arrays.items())
    return 0.0 if same and cfg == {"k": 1} else 1.0


def run_selftest(seed: int = 0, quick: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    plan = [
        ("flow closed form vs brute force", lambda: check_oracle(rng, 10 if quick else 50), 1e-8),
        ("demand identity Q = 2 L_fc", lambda: check_identity(rng, 20), 1e-10),
        ("flow adjoint vs finite differences", lambda: check_adjoint(rng), 1e-4),
        ("model gradient vs finite differences", lambda: check_model_gradient(rng, 8 if quick else 20), 1e-3),
        ("resistance hand examples", check_resistance_examples, 1e-9),
        ("mask peak value sigmoid(4)", check_mask_peak, 1e-12),
        ("BH example rejections", check_bh_example, 0.0),
        ("checkpoint round trip", lambda: check_checkpoint_roundtrip(rng), 0.0),
    ]
    out = []
    for name, fn, tol in plan:
        value = float(fn())
        out.append(CheckResult(name, value, tol, bool(value <= tol)))
    return out


def format_table(results: list[CheckResult]) -> str:
    buf = io.StringIO()
    width = max(len(r.name) for r in results)
    buf.write(f"{'check':<{width}}  {'value':>10}  {'tol':>8}  result\n")
    for r in results:
        buf.write(f"{r.name:<{width}}  {r.value:>10.3g}  {r.tol:>8.1g}  {'PASS' if r.passed else 'FAIL'}\n")
    return buf.getvalue()


def print_table(results: list[CheckResult]) -> None:
    print(format_table(results), end="")
