"""Dataset-level glue shared by the CLI: preparing cohorts, per-subject flow maps,
multi-seed training and group analysis."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputValidationError
from .flow import aggregate_flow_closed_form, demand_laplacian
from .graph import ConnectomePair, build_edge_list, format_float, max_normalize
from .nn import checkpoint
from .nn.model import FlowRouteNet, ModelConfig, PreparedSubject, prepare
from .nn.train import TrainConfig, TrainResult, evaluate, train
from .spectral import DEFAULT_DELTA, build_laplacian
from .stats import group_stats, topk_edges

log = logging.getLogger(__name__)


def thread_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("FLOWROUTE_THREADS", default)))
    except ValueError:
        return default


def pmap(fn, items, threads: int | None = None) -> list:
    """Order-preserving map over a worker pool; serial when one thread."""
    threads = thread_count() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def prepare_all(pairs: list[ConnectomePair], cfg: ModelConfig, threads=None) -> list[PreparedSubject]:
    return pmap(lambda p: prepare(p, cfg), pairs, threads)


def sc_flow(pair: ConnectomePair, delta=DEFAULT_DELTA, threshold=0.0, normalize_sc=False):
    """Flow with raw SC weights as capacities; returns (edges, phi)."""
    sc = max_normalize(pair.sc) if normalize_sc else pair.sc
    edges = build_edge_list(sc, threshold)
    lap = build_laplacian(edges, edges.weights, delta)
    return edges, aggregate_flow_closed_form(lap, edges, edges.weights, demand_laplacian(pair.fc)).phi


# -- checkpoints ---------------------------------------------------------------


def save_model(path, net: FlowRouteNet, extra: dict | None = None) -> None:
    cfg = {"model": net.cfg.to_dict()}
    if extra:
        cfg.update(extra)
    checkpoint.save(path, net.arrays(), cfg)


def load_model(path) -> tuple[FlowRouteNet, dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "model.ckpt"
    arrays, cfg = checkpoint.load(path)
    from .nn.autodiff import Tensor

    mcfg = ModelConfig.from_dict(cfg["model"])
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
    return FlowRouteNet(mcfg, params), cfg


# -- training ------------------------------------------------------------------


@dataclass
class MultiSeedResult:
    runs: list[TrainResult]
    summary: dict


def _mean_std(values):
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std())}


def train_seeds(pairs: list[ConnectomePair], cfg: TrainConfig, seeds, out_dir=None) -> MultiSeedResult:
    subjects = prepare_all(pairs, cfg.model)
    runs = []
    for seed in seeds:
        res = train(subjects, cfg, seed)
        runs.append(res)
        if out_dir is not None:
            d = Path(out_dir) / f"seed_{seed}"
            d.mkdir(parents=True, exist_ok=True)
            save_model(d / "model.ckpt", res.net, {"train": cfg.to_dict(), "seed": seed, "splits": res.splits})
            write_json(d / "history.json", {"seed": seed, "best_epoch": res.best_epoch, "history": res.history,
                                            "test": res.test_metrics})
    keys = ["acc", "pre", "rec", "f1", "auc"]
    summary = {
        "seeds": list(seeds),
        "test": {k: _mean_std([r.test_metrics[k] for r in runs]) for k in keys},
        "per_seed": [{"seed": r.seed, "best_epoch": r.best_epoch, **r.test_metrics} for r in runs],
    }
    if out_dir is not None:
        best = max(runs, key=lambda r: (max(h["val_auc"] for h in r.history) if r.history else 0.0, -r.seed))
        save_model(Path(out_dir) / "model.ckpt", best.net, {"train": cfg.to_dict(), "seed": best.seed,
                                                            "splits": best.splits})
        summary["selected_seed"] = best.seed
        write_json(Path(out_dir) / "summary.json", summary)
    return MultiSeedResult(runs, summary)


def evaluate_model(net: FlowRouteNet, pairs: list[ConnectomePair]) -> dict:
    subjects = prepare_all(pairs, net.cfg)
    if any(s.label is None for s in subjects):
        raise ConfigError("evaluation needs labelled subjects")
    return evaluate(net, subjects)


# -- group analysis ------------------------------------------------------------


@dataclass
class GroupReport:
    edges: np.ndarray
    mean_phi: np.ndarray
    topk: np.ndarray
    stats: object
    summary: dict


def cohort_flows(pairs, net: FlowRouteNet | None = None, delta=DEFAULT_DELTA, threshold=0.0,
                 normalize_sc=False, threads=None):
    """Per-subject flow on the edges common to every subject: (edges (M,2), flows (K,M))."""
    if net is not None:
        subjects = prepare_all(pairs, net.cfg, threads)
        per = [(s.edges, net.flow(s)) for s in subjects]
    else:
        per = pmap(lambda p: sc_flow(p, delta, threshold, normalize_sc), pairs, threads)
    common = None
    for e, _ in per:
        keys = {tuple(x) for x in e.edges.tolist()}
        common = keys if common is None else common & keys
    if not common:
        raise InputValidationError("subjects share no structural edges")
    edges = np.array(sorted(common), dtype=np.int64)
    dropped = max(len(e) for e, _ in per) - len(edges)
    if dropped:
        log.warning("%d edges are missing in some subjects and were excluded", dropped)
    flows = np.empty((len(per), len(edges)))
    for k, (e, phi) in enumerate(per):
        flows[k] = phi[[e.index_of(i, j) for i, j in edges]]
    return edges, flows


def analyze_groups(pairs, net=None, q=0.05, topk=100, log_flow=False, method="bh", patient_label=1,
                   delta=DEFAULT_DELTA, threshold=0.0, normalize_sc=False, threads=None) -> GroupReport:
    labels = np.array([-1 if p.label is None else p.label for p in pairs])
    if np.any(labels < 0):
        raise ConfigError("group analysis needs labelled subjects")
    edges, flows = cohort_flows(pairs, net, delta, threshold, normalize_sc, threads)
    pat, ctl = flows[labels == patient_label], flows[labels != patient_label]
    st = group_stats(pat, ctl, q=q, method=method, log_flow=log_flow)
    mean_phi = flows.mean(axis=0)
    top = topk_edges(mean_phi, edges, topk)
    summary = {
        "n_patients": int(pat.shape[0]),
        "n_controls": int(ctl.shape[0]),
        "n_edges": int(len(edges)),
        "q": q,
        "fdr": method,
        "log_flow": log_flow,
        "capacities": "checkpoint" if net is not None else "sc",
        "n_significant": int(st.reject.sum()),
        "n_patient_higher": int(np.sum(st.reject & (st.direction > 0))),
        "n_control_higher": int(np.sum(st.reject & (st.direction < 0))),
        "n_degenerate": int(st.degenerate.sum()),
        "topk": int(len(top)),
    }
    return GroupReport(edges, mean_phi, top, st, summary)


def write_group_report(report: GroupReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    e, st = report.edges, report.stats
    with open(out / "topk.csv", "w") as fh:
        fh.write("i,j,mean_phi\n")
        for m in report.topk:
            fh.write(f"{e[m, 0]},{e[m, 1]},{format_float(report.mean_phi[m])}\n")

    def rows(fh, idx):
        fh.write("i,j,t,p,reject,direction\n")
        for m in idx:
            fh.write(f"{e[m, 0]},{e[m, 1]},{format_float(st.t[m])},{format_float(st.p[m])},"
                     f"{int(st.reject[m])},{int(st.direction[m])}\n")

    sig = np.flatnonzero(st.reject)
    sig = sig[np.lexsort((e[sig, 1], e[sig, 0], st.p[sig]))]
    with open(out / "sig_edges.csv", "w") as fh:
        rows(fh, sig)
    with open(out / "edge_stats.csv", "w") as fh:
        rows(fh, range(len(e)))
    write_json(out / "summary.json", report.summary)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
