"""Resistance-biased encoder, edge gate, flow node, routing mask and masked aggregator."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError, DimensionError, NumericalError
from ..flow import aggregate_flow_closed_form, demand_laplacian, flow_gradient_adjoint
from ..graph import ConnectomePair, EdgeList, build_edge_list, max_normalize
from ..resistance import effective_resistance
from ..spectral import build_laplacian
from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class ModelConfig:
    d_x: int = 0  # input feature width, fixed from the data when 0
    n_classes: int = 2
    d: int = 64
    layers: int = 2
    heads: int = 1
    ffn_mult: int = 4
    res_hidden: int = 128
    gate_hidden: int = 64
    deg_buckets: int = 64
    dropout: float = 0.3
    tau_init: float = 8.0
    theta_init: float = 0.5
    eps: float = 1e-6
    delta: float = 1e-6
    gate_clamp: float = 30.0
    mask_mode: str = "additive"  # or "multiplicative"
    threshold: float = 0.0
    normalize_sc: bool = False
    erd_regularize: bool = False

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.mask_mode not in ("additive", "multiplicative"):
            raise ConfigError(f"unknown mask_mode {self.mask_mode!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PreparedSubject:
    """Everything about a subject that does not depend on learned parameters."""

    id: str
    X: np.ndarray
    deg_idx: np.ndarray
    R: np.ndarray
    edges: EdgeList
    fc: np.ndarray
    Lfc: np.ndarray
    label: int | None
    erd_regularized: bool = False

    @property
    def n(self) -> int:
        return self.X.shape[0]


def prepare(pair: ConnectomePair, cfg: ModelConfig) -> PreparedSubject:
    sc = max_normalize(pair.sc) if cfg.normalize_sc else pair.sc
    edges = build_edge_list(sc, cfg.threshold)
    res = effective_resistance(sc, regularize=cfg.erd_regularize, delta=cfg.delta)
    deg = np.minimum(edges.degrees(), cfg.deg_buckets - 1)
    return PreparedSubject(
        id=pair.id,
        X=pair.node_features(),
        deg_idx=deg,
        R=res.R,
        edges=edges,
        fc=pair.fc,
        Lfc=demand_laplacian(pair.fc).Lfc,
        label=pair.label,
        erd_regularized=res.regularized,
    )


# -- parameters ----------------------------------------------------------------


def _glorot(rng, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    if cfg.d_x <= 0:
        raise ConfigError("d_x must be set before initialising parameters")
    d, dh, H = cfg.d, cfg.d // cfg.heads, cfg.heads
    p: dict[str, np.ndarray] = {}
    p["in.W"] = _glorot(rng, cfg.d_x, d)
    p["in.b"] = np.zeros(d)
    p["deg.emb"] = rng.normal(0.0, 0.02, size=(cfg.deg_buckets, d))
    p["res.W1"] = _glorot(rng, 1, cfg.res_hidden)
    p["res.b1"] = np.zeros(cfg.res_hidden)
    p["res.W2"] = _glorot(rng, cfg.res_hidden, H)
    p["res.b2"] = np.zeros(H)
    for l in range(cfg.layers):
        for h in range(H):
            for m in "QKV":
                p[f"enc{l}.{m}{h}"] = _glorot(rng, d, dh)
        p[f"enc{l}.ln1.g"] = np.ones(d)
        p[f"enc{l}.ln1.b"] = np.zeros(d)
        p[f"enc{l}.ffn.W1"] = _glorot(rng, d, cfg.ffn_mult * d)
        p[f"enc{l}.ffn.b1"] = np.zeros(cfg.ffn_mult * d)
        p[f"enc{l}.ffn.W2"] = _glorot(rng, cfg.ffn_mult * d, d)
        p[f"enc{l}.ffn.b2"] = np.zeros(d)
        p[f"enc{l}.ln2.g"] = np.ones(d)
        p[f"enc{l}.ln2.b"] = np.zeros(d)
    p["gate.W1"] = _glorot(rng, 2 * d, cfg.gate_hidden)
    p["gate.b1"] = np.zeros(cfg.gate_hidden)
    p["gate.W2"] = _glorot(rng, cfg.gate_hidden, 1)
    p["gate.b2"] = np.zeros(1)
    p["mask.tau"] = np.array(cfg.tau_init)
    p["mask.theta"] = np.array(cfg.theta_init)
    for h in range(H):
        for m in "QKV":
            p[f"agg.{m}{h}"] = _glorot(rng, d, dh)
    p["head.W1"] = _glorot(rng, d, d)
    p["head.b1"] = np.zeros(d)
    p["head.W2"] = _glorot(rng, d, cfg.n_classes)
    p["head.b2"] = np.zeros(cfg.n_classes)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


# -- building blocks -----------------------------------------------------------


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def _check_finite(t: Tensor, where: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"non-finite activations in {where}")


def _upper_index(n: int):
    iu = np.triu_indices(n)
    pos = np.empty((n, n), dtype=np.int64)
    pos[iu] = np.arange(iu[0].size)
    pos[iu[1], iu[0]] = pos[iu]
    return iu, pos


def resistance_bias(R: np.ndarray, params: dict[str, Tensor]) -> Tensor:
    """Scalar MLP applied to every R[i, j]; returns (N, N, heads).

    R is symmetric, so the MLP runs once per upper-triangle entry.
    """
    R = np.asarray(R)
    iu, pos = _upper_index(R.shape[0])
    r = Tensor(R[iu][:, None])
    hidden = ad.gelu(r @ params["res.W1"] + params["res.b1"])
    out = hidden @ params["res.W2"] + params["res.b2"]
    return out[pos]


def _attention(H: Tensor, prefix: str, params, cfg: ModelConfig, bias, rng) -> Tensor:
    """Single- or multi-head attention with per-head additive score bias ``bias(h)``."""
    dh = cfg.d // cfg.heads
    outs = []
    for h in range(cfg.heads):
        q = H @ params[f"{prefix}.Q{h}"]
        k = H @ params[f"{prefix}.K{h}"]
        v = H @ params[f"{prefix}.V{h}"]
        scores = (q @ k.T) * (1.0 / math.sqrt(dh))
        b = bias(h)
        if b is not None:
            scores = scores + b
        outs.append(ad.softmax(scores, axis=-1) @ v)
    out = outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)
    return dropout(out, cfg.dropout, rng)


def encode(
    X: np.ndarray,
    deg_idx: np.ndarray,
    R: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Structure-aware node states H (N x d); ``rng`` enables dropout."""
    h = Tensor(X) @ params["in.W"] + params["in.b"] + params["deg.emb"][np.asarray(deg_idx)]
    rb = resistance_bias(R, params)
    head_bias = [rb[:, :, k] for k in range(cfg.heads)]
    for l in range(cfg.layers):
        att = _attention(h, f"enc{l}", params, cfg, head_bias.__getitem__, rng)
        z = ad.layer_norm(h + att, params[f"enc{l}.ln1.g"], params[f"enc{l}.ln1.b"])
        f = ad.gelu(z @ params[f"enc{l}.ffn.W1"] + params[f"enc{l}.ffn.b1"])
        f = dropout(f, cfg.dropout, rng)
        f = f @ params[f"enc{l}.ffn.W2"] + params[f"enc{l}.ffn.b2"]
        h = ad.layer_norm(z + f, params[f"enc{l}.ln2.g"], params[f"enc{l}.ln2.b"])
        _check_finite(h, f"encoder layer {l}")
    return h


def gate_capacities(H: Tensor, edges: EdgeList, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Edge capacities exp(w([h_i; h_j])), averaged over both endpoint orders."""
    M = len(edges)
    hi, hj = H[edges.src], H[edges.dst]
    x = ad.concat([ad.concat([hi, hj], axis=1), ad.concat([hj, hi], axis=1)], axis=0)
    s = ad.silu(x @ params["gate.W1"] + params["gate.b1"]) @ params["gate.W2"] + params["gate.b2"]
    s = (s[:M] + s[M:]) * 0.5
    s = ad.clip(s, -cfg.gate_clamp, cfg.gate_clamp)
    return ad.exp(s).reshape(M)


def flow_node(capacities: Tensor, edges: EdgeList, Lfc: np.ndarray, delta: float) -> Tensor:
    """Aggregated flow as a graph node whose backward rule is the adjoint solve."""
    c = capacities.data
    fm = aggregate_flow_closed_form(build_laplacian(edges, c, delta), edges, c, Lfc)
    return ad.make_node(fm.phi, (capacities,), lambda g: (flow_gradient_adjoint(fm, g)[0],))


def make_mask(
    phi,
    edges: EdgeList,
    tau,
    theta,
    eps: float = 1e-6,
) -> Tensor:
    """Symmetric N x N routing mask from per-edge flow.

    Edges get sigmoid(tau * (norm - theta)) where norm is the min-max scaled
    log(phi + eps); non-edges use norm = 0 and the diagonal is 1.
    """
    phi = ad.as_tensor(phi)
    tau, theta = ad.as_tensor(tau), ad.as_tensor(theta)
    n = edges.n_nodes
    u = ad.log(phi + eps)
    hi, lo = ad.reduce_max(u), ad.reduce_min(u)
    span = hi.data - lo.data
    if span <= 1e-12 * max(1.0, abs(float(hi.data))):
        norm = Tensor(np.full(phi.shape, 0.5))
    else:
        norm = (u - lo) / (hi - lo)
    m_edge = ad.sigmoid(tau * (norm - theta))
    base = ad.sigmoid(tau * (0.0 - theta))
    delta_e = m_edge - base
    src, dst = edges.src, edges.dst
    diag = np.arange(n)
    full = (
        base * np.ones((n, n))
        + ad.scatter(delta_e, (src, dst), (n, n))
        + ad.scatter(delta_e, (dst, src), (n, n))
        + ad.scatter((1.0 - base) * np.ones(n), (diag, diag), (n, n))
    )
    return full


def aggregate_and_classify(
    H: Tensor,
    mask: Tensor | None,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mask-biased attention, mean pooling and the two-layer head; returns logits (C,)."""
    if mask is None:
        bias = None
    elif cfg.mask_mode == "additive":
        bias = mask
    else:
        bias = ad.log(mask)
    z = _attention(H, "agg", params, cfg, lambda h: bias, rng)
    _check_finite(z, "aggregator")
    pooled = z.mean(axis=0, keepdims=True)
    hidden = ad.relu(pooled @ params["head.W1"] + params["head.b1"])
    hidden = dropout(hidden, cfg.dropout, rng)
    logits = hidden @ params["head.W2"] + params["head.b2"]
    return logits.reshape(cfg.n_classes)


@dataclass
class ForwardResult:
    logits: Tensor
    H: Tensor
    capacities: Tensor
    phi: Tensor
    mask: Tensor


class FlowRouteNet:
    """The full pipeline: encode -> gate -> flow -> mask -> aggregate -> logits."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None, rng=None):
        self.cfg = cfg
        if params is None:
            if rng is None:
                raise ConfigError("need either params or an rng to initialise them")
            params = init_params(cfg, rng)
        self.params = params

    def check_subject(self, subj: PreparedSubject) -> None:
        if subj.X.shape[1] != self.cfg.d_x:
            raise DimensionError(
                f"subject {subj.id!r} has {subj.X.shape[1]} feature columns, model expects {self.cfg.d_x}"
            )

    def forward(self, subj: PreparedSubject, rng: np.random.Generator | None = None) -> ForwardResult:
        self.check_subject(subj)
        p, cfg = self.params, self.cfg
        H = encode(subj.X, subj.deg_idx, subj.R, p, cfg, rng)
        c = gate_capacities(H, subj.edges, p, cfg)
        phi = flow_node(c, subj.edges, subj.Lfc, cfg.delta)
        mask = make_mask(phi, subj.edges, p["mask.tau"], p["mask.theta"], cfg.eps)
        logits = aggregate_and_classify(H, mask, p, cfg, rng)
        return ForwardResult(logits, H, c, phi, mask)

    def logits(self, subj: PreparedSubject) -> np.ndarray:
        with ad.no_grad():
            return self.forward(subj).logits.data.copy()

    def loss(self, subj: PreparedSubject, rng=None) -> Tensor:
        if subj.label is None:
            raise ConfigError(f"subject {subj.id!r} has no label")
        return ad.cross_entropy(self.forward(subj, rng).logits, subj.label)

    def flow(self, subj: PreparedSubject) -> np.ndarray:
        """Per-edge flow under the learned capacities."""
        with ad.no_grad():
            return self.forward(subj).phi.data.copy()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None
