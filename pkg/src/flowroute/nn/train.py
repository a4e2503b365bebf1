"""Training loop, optimizers, data splits and evaluation."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError
from ..rng import stream
from . import autodiff as ad
from .metrics import classification_metrics
from .model import FlowRouteNet, ModelConfig, PreparedSubject

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 5e-4
    weight_decay: float = 0.01
    batch_size: int = 64
    split: tuple[float, float, float] = (6, 1, 3)
    seeds: tuple[int, ...] = (0, 1, 2)
    optimizer: str = "adamw"  # or "sgd"
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        self.split = tuple(float(s) for s in self.split)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.betas = tuple(float(b) for b in self.betas)
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.optimizer not in ("adamw", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and lr >= 0 are required")
        if len(self.split) != 3 or min(self.split) < 0 or sum(self.split) <= 0:
            raise ConfigError("split must be three nonnegative ratios")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split"] = list(self.split)
        out["seeds"] = list(self.seeds)
        out["betas"] = list(self.betas)
        return out


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr, self.wd, self.eps = lr, weight_decay, eps
        self.b1, self.b2 = betas
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.wd * p.data
            p.data = p.data - self.lr * update


class SGD:
    def __init__(self, params, lr, weight_decay=0.0):
        self.params, self.lr, self.wd = params, lr, weight_decay

    def step(self) -> None:
        for p in self.params.values():
            g = p.grad if p.grad is not None else 0.0
            p.data = p.data - self.lr * (g + self.wd * p.data)


def make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr, cfg.weight_decay)
    return AdamW(params, cfg.lr, cfg.weight_decay, cfg.betas, cfg.adam_eps)


def stratified_split(labels, ratios, rng: np.random.Generator):
    """Per-class shuffled split into train / val / test index arrays."""
    labels = np.asarray(labels)
    r = np.asarray(ratios, dtype=np.float64)
    r = r / r.sum()
    parts = [[], [], []]
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n = idx.size
        n_tr = int(round(r[0] * n))
        n_va = int(round(r[1] * n))
        n_va = min(n_va, n - n_tr)
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr : n_tr + n_va])
        parts[2].append(idx[n_tr + n_va :])
    return tuple(np.sort(np.concatenate(p)).astype(int) for p in parts)


def predict_proba(net: FlowRouteNet, subjects: list[PreparedSubject]) -> np.ndarray:
    out = []
    with ad.no_grad():
        for s in subjects:
            z = net.forward(s).logits.data
            e = np.exp(z - z.max())
            out.append(e / e.sum())
    return np.array(out)


def evaluate(net: FlowRouteNet, subjects: list[PreparedSubject]) -> dict:
    probs = predict_proba(net, subjects)
    labels = np.array([s.label for s in subjects])
    metrics = classification_metrics(labels, probs)
    metrics["loss"] = float(-np.mean(np.log(probs[np.arange(len(labels)), labels] + 1e-300)))
    return metrics


@dataclass
class TrainResult:
    seed: int
    net: FlowRouteNet
    best_epoch: int
    history: list[dict]
    splits: dict[str, list[str]]
    test_metrics: dict


def train_epoch(net, opt, subjects, order, batch_size, drop_rng) -> float:
    total = 0.0
    for start in range(0, len(order), batch_size):
        batch = order[start : start + batch_size]
        net.zero_grad()
        for k in batch:
            loss = net.loss(subjects[k], drop_rng) * (1.0 / len(batch))
            loss.backward()
            total += loss.item() * len(batch)
        opt.step()
    return total / max(len(order), 1)


def train(subjects: list[PreparedSubject], cfg: TrainConfig, seed: int) -> TrainResult:
    """One seeded run; keeps the parameters of the best validation epoch.

    Best means highest validation AUC, ties broken by lower validation loss.
    """
    labels = np.array([-1 if s.label is None else s.label for s in subjects])
    if np.any(labels < 0):
        raise ConfigError("every training subject needs a label")
    mcfg = ModelConfig.from_dict(cfg.model.to_dict())
    mcfg.d_x = subjects[0].X.shape[1]
    if labels.max() >= mcfg.n_classes:
        raise ConfigError(f"label {labels.max()} out of range for {mcfg.n_classes} classes")
    tr, va, te = stratified_split(labels, cfg.split, stream(seed, "split"))
    for name, part in (("train", tr), ("validation", va), ("test", te)):
        if part.size == 0:
            raise ConfigError(f"{name} split is empty")
    if np.unique(labels[tr]).size < 2:
        raise ConfigError("training split contains a single class")

    net = FlowRouteNet(mcfg, rng=stream(seed, "init"))
    opt = make_optimizer(net.params, cfg)
    shuffle_rng = stream(seed, "shuffle")
    drop_rng = stream(seed, "dropout") if mcfg.dropout > 0 else None
    val_set = [subjects[k] for k in va]

    best = (-np.inf, np.inf)
    best_arrays = {k: v.copy() for k, v in net.arrays().items()}
    best_epoch = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(tr)
        loss = train_epoch(net, opt, subjects, order, cfg.batch_size, drop_rng)
        val = evaluate(net, val_set)
        history.append({"epoch": epoch, "train_loss": loss, **{f"val_{k}": v for k, v in val.items()}})
        key = (np.nan_to_num(val["auc"], nan=-1.0), -val["loss"])
        if key[0] > best[0] or (key[0] == best[0] and -key[1] < best[1]):
            best = (key[0], -key[1])
            best_arrays = {k: v.copy() for k, v in net.arrays().items()}
            best_epoch = epoch
        log.info("seed %d epoch %d loss %.4f val_acc %.3f val_auc %.3f", seed, epoch, loss, val["acc"], val["auc"])

    for k, v in best_arrays.items():
        net.params[k].data = v
    test = evaluate(net, [subjects[k] for k in te])
    splits = {name: [subjects[k].id for k in part] for name, part in (("train", tr), ("val", va), ("test", te))}
    return TrainResult(seed, net, best_epoch, history, splits, test)
