"""Command line entry point.

Every experiment runs from a JSON config (see config.SCHEMA); the named
subcommands are conveniences that additionally check the config's
experiment kind matches the command.  Results are written once, at the
end, as a RunRecord (JSON) or as CSV rows for the tabular experiments.

Exit codes: 0 success, 2 config/validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

from . import estimators, oracle, renorm
from .config import (ConfigError, RunConfig, RunRecord, dump_record,
                     load_config, validate_config)
from .dynamics import DEFAULT_UPDATE_BUDGET
from .renorm import BoxSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# experiments with natural tabular output
CSV_KINDS = ("sweep", "renorm", "renorm-fit", "block-sensitivity")


def _resolve_workers(args_workers, cfg_workers) -> int:
    if args_workers is not None:
        return max(1, args_workers)
    if cfg_workers is not None:
        return max(1, int(cfg_workers))
    env = os.environ.get("CPSIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


# ---------------------------------------------------------------------------
# experiment dispatch: each returns a results dict (deterministic for a
# fixed config) plus optional CSV rows (header, rows)

def _run_survival(cfg: RunConfig, workers: int, budget: int):
    est = estimators.survival_probability(
        cfg.mu, cfg.params.lam, cfg.survival_query(), workers=workers, budget=budget)
    return est.to_dict(), None


def _run_strong(cfg: RunConfig, workers: int, budget: int):
    window = cfg.experiment.get("window", [0.0, cfg.params.horizon])
    est = estimators.strong_survival_probability(
        cfg.mu, cfg.params.lam, cfg.survival_query(),
        (float(window[0]), float(window[1])), workers=workers, budget=budget)
    return est.to_dict(), None


def _run_sweep(cfg: RunConfig, workers: int, budget: int):
    lambdas = sorted(float(v) for v in cfg.experiment["lambdas"])
    ests = estimators.survival_sweep(
        cfg.mu, lambdas, cfg.survival_query(),
        coupled=bool(cfg.experiment.get("coupled", True)),
        workers=workers, budget=budget)
    rows = [
        {"lambda": lam, "t": cfg.params.horizon, "estimate": e.value,
         "stderr": e.std_error, "replicas": e.replicas}
        for lam, e in zip(lambdas, ests)
    ]
    header = ["lambda", "t", "estimate", "stderr", "replicas"]
    return {"rows": rows}, (header, rows)


def _run_critical(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    window = exp.get("window")
    res = estimators.critical_value(
        cfg.mu, cfg.survival_query(),
        (float(exp["bracket"][0]), float(exp["bracket"][1])),
        threshold=float(exp.get("threshold", estimators.DEFAULT_THRESHOLD)),
        depth=int(exp.get("depth", 8)),
        mode=exp.get("mode", "survival"),
        window=(float(window[0]), float(window[1])) if window else None,
        workers=workers, budget=budget)
    return res.to_dict(), None


def _run_c1(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    x = tuple(exp.get("x", cfg.resolved_region().origin))
    w = exp.get("w")
    lhs, rhs = estimators.c1_check(
        cfg.mu, cfg.params.lam, cfg.survival_query(), x,
        float(exp["t"]), None if w is None else float(w),
        workers=workers, budget=budget)
    return {"lhs": lhs.to_dict(), "rhs": rhs.to_dict(),
            "gap": lhs.value - rhs.value}, None


def _run_c2(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    x = tuple(exp.get("x", cfg.resolved_region().origin))
    est = estimators.c2_check(
        cfg.mu, cfg.params.lam, cfg.survival_query(), x,
        float(exp["m"]), float(exp["t"]), workers=workers, budget=budget)
    return est.to_dict(), None


def _run_hit(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    est = estimators.hit_probability(
        cfg.mu, cfg.params.lam, cfg.survival_query(),
        [tuple(p) for p in exp["a"]], [tuple(p) for p in exp["b"]],
        float(exp.get("t", cfg.params.horizon)), workers=workers, budget=budget)
    return est.to_dict(), None


def _run_block(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    est = renorm.block_probability(
        BoxSpec.from_dict(exp["box"]), cfg.mu, cfg.params,
        replicas=cfg.replicas, regime=cfg.regime,
        d=int(exp.get("d", 1)), master_seed=cfg.seed, workers=workers,
        budget=budget, method=exp.get("method", "kernel"))
    return est.to_dict(), None


def _run_find_blocks(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    res = renorm.find_block_params(
        float(exp["epsilon"]), cfg.mu, cfg.params,
        int(exp.get("search_budget", 4000)),
        d=int(exp.get("d", 1)), master_seed=cfg.seed, workers=workers,
        budget=budget)
    return res.to_dict(), None


def _renorm_rows(results):
    rows = []
    for n in sorted(results):
        for i, r in enumerate(results[n]):
            rows.append({"n": n, "sample_index": i,
                         "T": "" if r.T is None else r.T,
                         "success": int(r.success)})
    return rows


def _run_renorm(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    ns = exp.get("ns", exp.get("n"))
    if isinstance(ns, int):
        ns = [ns]
    boxes = (BoxSpec.from_dict(exp["boxes"]["S"]), BoxSpec.from_dict(exp["boxes"]["L"]))
    results = renorm.renorm_samples(
        [int(n) for n in ns], float(exp["epsilon"]), boxes, cfg.mu, cfg.params,
        int(exp.get("samples", 30)), d=int(exp.get("d", 1)),
        master_seed=cfg.seed, workers=workers, budget=budget)
    rows = _renorm_rows(results)
    summary = {str(n): {"samples": len(results[n]),
                        "successes": sum(r.success for r in results[n])}
               for n in sorted(results)}
    header = ["n", "sample_index", "T", "success"]
    return {"rows": rows, "summary": summary}, (header, rows)


def _run_renorm_fit(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    ns = exp.get("ns", exp.get("n"))
    if isinstance(ns, int):
        ns = [ns]
    boxes = (BoxSpec.from_dict(exp["boxes"]["S"]), BoxSpec.from_dict(exp["boxes"]["L"]))
    results = renorm.renorm_samples(
        [int(n) for n in ns], float(exp["epsilon"]), boxes, cfg.mu, cfg.params,
        int(exp.get("samples", 30)), d=int(exp.get("d", 1)),
        master_seed=cfg.seed, workers=workers, budget=budget)
    fit = renorm.linear_growth_fit(renorm.successful_times(results))
    rows = [s.to_dict() for s in fit.scales]
    header = ["n", "count", "median", "ratio", "inside_fraction"]
    return {"fit": fit.to_dict(), "rows": rows}, (header, rows)


def _run_sensitivity(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    pairs = renorm.block_sensitivity(
        BoxSpec.from_dict(exp["box"]), cfg.mu, cfg.params,
        [float(v) for v in exp["deltas"]], replicas=cfg.replicas,
        d=int(exp.get("d", 1)), master_seed=cfg.seed, workers=workers,
        budget=budget)
    rows = [{"delta": d, "estimate": e.value, "stderr": e.std_error,
             "replicas": e.replicas} for d, e in pairs]
    header = ["delta", "estimate", "stderr", "replicas"]
    return {"rows": rows,
            "estimates": [{"delta": d, **e.to_dict()} for d, e in pairs]}, (header, rows)


def _run_oracle(cfg: RunConfig, workers: int, budget: int):
    exp = cfg.experiment
    g = exp["graph"]
    graph = oracle.FiniteGraph(
        n=int(g["n"]),
        edges=tuple((int(u), int(v), float(w)) for u, v, w in g["edges"]),
        labels=tuple(tuple(p) for p in g["labels"]) if g.get("labels") else None)
    t = float(exp["t"])
    op = exp.get("op", "survival")
    if op == "survival":
        value, bound = oracle.exact_survival(graph, cfg.params.lam, exp["init"], t)
    else:
        value, bound = oracle.exact_hit(graph, cfg.params.lam, exp["a"], exp["b"], t)
    return {"graph": graph.to_dict(), "params": {"lambda": cfg.params.lam},
            "t": t, "value": value, "error_bound": bound}, None


_DISPATCH = {
    "survival": _run_survival,
    "strong-survival": _run_strong,
    "sweep": _run_sweep,
    "critical": _run_critical,
    "c1": _run_c1,
    "c2": _run_c2,
    "hit": _run_hit,
    "block": _run_block,
    "find-blocks": _run_find_blocks,
    "renorm": _run_renorm,
    "renorm-fit": _run_renorm_fit,
    "block-sensitivity": _run_sensitivity,
    "oracle": _run_oracle,
}


# ---------------------------------------------------------------------------
# output

def _write_csv(header, rows, out_path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in header})
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit(record: RunRecord, fmt: str, out_path, table) -> int:
    if fmt == "csv":
        if table is None:
            print("error: this experiment has no CSV form; use --format json",
                  file=sys.stderr)
            return EXIT_CONFIG
        _write_csv(table[0], table[1], out_path)
        return EXIT_OK
    if out_path:
        dump_record(record, out_path)
    else:
        json.dump(record.to_dict(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# commands

def _cmd_validate(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}",
              file=sys.stderr)
        return EXIT_CONFIG
    violations = validate_config(obj) if isinstance(obj, dict) else None
    if violations is None:
        print("error: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    if args.format == "json":
        json.dump({"violations": [v.to_dict() for v in violations]},
                  sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        for v in violations:
            print(v)
        if not violations:
            print("ok")
    return EXIT_OK if not violations else EXIT_CONFIG


def _cmd_run(args, expected_kind=None) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_CONFIG

    if expected_kind is not None and cfg.kind != expected_kind:
        print(f"error: config declares experiment kind {cfg.kind!r}, "
              f"command expects {expected_kind!r}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        cfg.seed = args.seed
    workers = _resolve_workers(args.workers, cfg.workers)

    runner = _DISPATCH[cfg.kind]
    start = time.perf_counter()
    try:
        results, table = runner(cfg, workers, args.budget)
    except (ValueError, RuntimeError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start

    record = RunRecord(config=cfg.to_dict(), results=results, wall_clock_s=wall)
    return _emit(record, args.format, args.out, table)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to a JSON run config")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: config, then $CPSIM_WORKERS, then 1)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--budget", type=int, default=DEFAULT_UPDATE_BUDGET,
                   help="per-replica site-update budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpsim",
        description="Contact process in a quenched random edge environment "
                    "on the half space: simulation and estimation suite.")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("validate", help="schema-check a config without running it")
    pv.add_argument("--config", required=True)
    pv.add_argument("--format", choices=("json", "text"), default="text")

    pr = sub.add_parser("run", help="run the experiment named in the config")
    _add_common(pr)

    for kind in _DISPATCH:
        if kind == "sweep":
            continue  # reachable through `run`; kept off the top level
        pk = sub.add_parser(kind, help=f"run a {kind!r} config")
        _add_common(pk)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_run(args, expected_kind=args.command)


if __name__ == "__main__":
    sys.exit(main())
