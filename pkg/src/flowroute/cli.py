"""``flowroute`` command-line entry point.

Exit codes: 0 success, 2 usage/input error, 3 I/O failure, 4 numerical failure.
Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FlowRouteError, InputValidationError
from .flow import aggregate_flow_oracle
from .graph import ConnectomePair, build_edge_list, load_dataset, max_normalize, read_matrix_csv, write_matrix_csv
from .pipeline import (
    analyze_groups,
    evaluate_model,
    load_model,
    thread_count,
    train_seeds,
    write_group_report,
    write_json,
)
from .resistance import effective_resistance
from .spectral import DEFAULT_DELTA, build_laplacian
from .synth import SynthSpec, generate

log = logging.getLogger("flowroute")


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _emit_error(kind: str, code: int, **fields) -> int:
    sys.stderr.write(json.dumps({"error": kind, **fields}, sort_keys=True) + "\n")
    return code


def _echo(path: Path, command: str, args: argparse.Namespace) -> None:
    """Write the reproducibility echo for a run (no timestamps, so it is byte-stable)."""
    skip = {"func", "command"}
    echo = {
        "command": command,
        "version": __version__,
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in skip},
    }
    write_json(path, echo)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- commands ------------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    spec = SynthSpec.from_dict(_read_json(args.spec)) if args.spec else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    cohort = generate(spec, out)
    _echo(out / "run_config.json", "gen-synth", args)
    print(json.dumps({"subjects": len(cohort.subjects), "planted_edges": [list(e) for e in cohort.planted_edges]}))
    return 0


def _load_sc(args) -> np.ndarray:
    sc = read_matrix_csv(args.sc)
    return max_normalize(sc) if args.normalize_sc else sc


def cmd_resistance(args) -> int:
    res = effective_resistance(_load_sc(args), regularize=args.erd_regularize, delta=args.delta)
    out = Path(args.out)
    write_matrix_csv(out, res.R)
    _echo(out.with_name(out.name + ".config.json"), "resistance", args)
    if res.regularized:
        log.warning("graph is disconnected; resistances use the regularized inverse")
    return 0


def cmd_compute_flow(args) -> int:
    sc = _load_sc(args)
    fc = read_matrix_csv(args.fc)
    pair = ConnectomePair(sc, fc, features=read_matrix_csv(args.features) if args.features else None)
    if args.ckpt:
        from .nn.model import prepare

        net, _ = load_model(args.ckpt)
        subj = prepare(pair, net.cfg)
        edges = subj.edges
        from .nn import autodiff as ad

        with ad.no_grad():
            res = net.forward(subj)
        caps, phi = res.capacities.data, res.phi.data
        delta = net.cfg.delta
    else:
        edges = build_edge_list(sc, args.threshold)
        if args.capacities:
            caps = read_matrix_csv(args.capacities).ravel()
        elif args.uniform:
            caps = np.ones(len(edges))
        else:
            caps = edges.weights
        delta = args.delta
        from .flow import aggregate_flow_closed_form, demand_laplacian

        lap = build_laplacian(edges, caps, delta)
        phi = aggregate_flow_closed_form(lap, edges, caps, demand_laplacian(fc)).phi
    out = Path(args.out)
    rows = np.column_stack([edges.edges.astype(np.float64), caps, phi])
    with open(out, "w") as fh:
        fh.write("i,j,c_ij,phi_ij\n")
        for i, j, c, p in rows:
            fh.write(f"{int(i)},{int(j)},{float(c)!r},{float(p)!r}\n")
    _echo(out.with_name(out.name + ".config.json"), "compute-flow", args)
    if args.oracle:
        lap = build_laplacian(edges, caps, delta)
        ref = aggregate_flow_oracle(lap, edges, caps, fc).phi
        scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
        dev = float(np.max(np.abs(phi - ref) / scale)) if ref.size else 0.0
        print(json.dumps({"oracle_max_rel_dev": dev}))
    return 0


def cmd_train(args) -> int:
    from .nn.train import TrainConfig

    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    seeds = args.seed if args.seed else list(cfg.seeds)
    pairs = load_dataset(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train_seeds(pairs, cfg, seeds, out)
    _echo(out / "run_config.json", "train", args)
    print(json.dumps(result.summary["test"], sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    net, meta = load_model(args.ckpt)
    pairs = load_dataset(args.manifest)
    if args.split != "all":
        keep = set(meta.get("splits", {}).get(args.split, []))
        if not keep:
            raise InputValidationError(f"checkpoint records no {args.split!r} split")
        pairs = [p for p in pairs if p.id in keep]
    metrics = evaluate_model(net, pairs)
    out = {k: metrics[k] for k in ("acc", "pre", "rec", "f1", "auc")}
    text = json.dumps(out, sort_keys=True)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
        _echo(path.with_name(path.name + ".config.json"), "eval", args)
    print(text)
    return 0


def cmd_analyze_groups(args) -> int:
    pairs = load_dataset(args.manifest)
    net = None
    if args.ckpt and not args.from_sc:
        net, _ = load_model(args.ckpt)
    elif not args.from_sc:
        raise InputValidationError("pass --ckpt for learned capacities or --from-sc for SC weights")
    report = analyze_groups(
        pairs, net, q=args.q, topk=args.topk, log_flow=args.log_flow, method=args.fdr,
        patient_label=args.patient_label, delta=args.delta, threshold=args.threshold,
        normalize_sc=args.normalize_sc,
    )
    out = Path(args.out)
    write_group_report(report, out)
    _echo(out / "run_config.json", "analyze-groups", args)
    print(json.dumps(report.summary, sort_keys=True))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import print_table, run_selftest

    results = run_selftest(seed=args.seed, quick=args.quick)
    print_table(results)
    return 0 if all(r.passed for r in results) else 1


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flowroute", description="Adaptive flow routing on paired SC/FC graphs")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="worker/BLAS threads (default FLOWROUTE_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def graph_opts(sp):
        sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
        sp.add_argument("--threshold", type=float, default=0.0)
        sp.add_argument("--normalize-sc", action="store_true", help="divide SC by its maximum")

    g = sub.add_parser("gen-synth", help="write a synthetic cohort")
    g.add_argument("--spec", help="synthetic spec JSON")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    r = sub.add_parser("resistance", help="effective resistance matrix of an SC matrix")
    r.add_argument("--sc", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--erd-regularize", action="store_true")
    graph_opts(r)
    r.set_defaults(func=cmd_resistance)

    f = sub.add_parser("compute-flow", help="aggregated per-edge flow")
    f.add_argument("--sc", required=True)
    f.add_argument("--fc", required=True)
    cap = f.add_mutually_exclusive_group()
    cap.add_argument("--capacities", help="CSV of per-edge capacities in edge order")
    cap.add_argument("--uniform", action="store_true")
    cap.add_argument("--from-sc", action="store_true", help="SC weights as capacities (default)")
    cap.add_argument("--ckpt", help="use capacities from a trained model's edge gate")
    f.add_argument("--features", help="node features CSV (with --ckpt)")
    f.add_argument("--oracle", action="store_true", help="also run the pairwise brute force")
    f.add_argument("--out", required=True)
    graph_opts(f)
    f.set_defaults(func=cmd_compute_flow)

    t = sub.add_parser("train", help="train on a labelled manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config")
    t.add_argument("--seed", type=int, nargs="+", default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="classification metrics of a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", choices=["all", "train", "val", "test"], default="all")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze-groups", help="edge-wise patient/control flow differences")
    a.add_argument("--manifest", required=True)
    a.add_argument("--ckpt")
    a.add_argument("--from-sc", action="store_true")
    a.add_argument("--q", type=float, default=0.05)
    a.add_argument("--topk", type=int, default=100)
    a.add_argument("--fdr", choices=["bh", "by"], default="bh")
    a.add_argument("--log-flow", action="store_true")
    a.add_argument("--patient-label", type=int, default=1)
    a.add_argument("--out", required=True)
    graph_opts(a)
    a.set_defaults(func=cmd_analyze_groups)

    s = sub.add_parser("selftest", help="oracle and gradient checks")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quick", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliUsageError as exc:
        return _emit_error("usage", 2, message=str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads if args.threads is not None else thread_count()
    from threadpoolctl import threadpool_limits

    import os

    os.environ["FLOWROUTE_THREADS"] = str(threads)
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except FileNotFoundError as exc:
        return _emit_error("io", 3, path=str(exc.filename), message=exc.strerror or str(exc))
    except OSError as exc:
        return _emit_error("io", 3, path=str(getattr(exc, "filename", "")), message=str(exc))
    except FlowRouteError as exc:
        return _emit_error(exc.kind, exc.exit_code, message=str(exc))
    except (ValueError, json.JSONDecodeError) as exc:
        return _emit_error("input", 2, message=str(exc))


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
