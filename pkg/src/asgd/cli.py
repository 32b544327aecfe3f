"""Command line front end.

Subcommands:
    run          simulate every seed in a config, write traces and summaries
    check-delay  report the admissibility verdict for a config
    rate-fit     fit a power-law decay rate to an ensemble of traces
    compare      rank trace ensembles by when they cross a threshold

Exit codes: 0 success, 2 inadmissible configuration refused, 64 malformed
configuration, 66 no traces matched an input pattern, 74 I/O failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunSpec, load_config
from .delays import AnalysisUnavailableError, admissibility_check
from .diagnostics import compare_to_threshold, ensemble_mean, fit_rate
from .engine import ALGORITHMS, InadmissibleConfigError, run
from .trace import read_trace, write_summary, write_trace

EXIT_OK = 0
EXIT_INADMISSIBLE = 2
EXIT_CONFIG = 64
EXIT_NO_INPUT = 66
EXIT_IO = 74


def _expand(patterns: list[str]) -> list[Path]:
    """Resolve glob patterns to a sorted, deduplicated list of paths."""
    found: set[Path] = set()
    for pattern in patterns:
        found.update(Path(p) for p in glob.glob(pattern))
    return sorted(found)


def _dump(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_run(args: argparse.Namespace) -> int:
    spec: RunSpec = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else list(spec.seeds)
    out_dir = Path(args.out_dir or spec.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    allow = True if args.allow_inadmissible else None
    traces = []
    for seed in seeds:
        config = spec.run_config(seed=seed, algorithm=args.algorithm, allow_inadmissible=allow)
        trace = run(config)
        traces.append(trace)
        write_trace(trace, out_dir / f"trace_seed{seed}.csv")
        write_summary(trace.summary, out_dir / f"summary_seed{seed}.json")
        final = trace.summary["final"]
        print(
            f"seed {seed}: grad_norm_sq={final['grad_norm_sq']:.6g} "
            f"objective={final['objective']:.6g} vtime={final['vtime']:.6g}"
        )

    iterations, mean, stderr, vtime = ensemble_mean(traces)
    _, obj_mean, _, _ = ensemble_mean(traces, column="objective")
    with open(out_dir / "ensemble_mean.csv", "w", newline="") as handle:
        handle.write("k,grad_norm_sq_mean,grad_norm_sq_stderr,objective_mean,vtime_mean\n")
        for row in zip(iterations, mean, stderr, obj_mean, vtime):
            handle.write("%d,%.17g,%.17g,%.17g,%.17g\n" % row)

    aggregate = {
        "config": str(args.config),
        "seeds": seeds,
        "final_grad_norm_sq_mean": float(mean[-1]),
        "final_objective_mean": float(obj_mean[-1]),
        "final_vtime_mean": float(vtime[-1]),
        "per_seed": {
            str(seed): trace.summary["final"] for seed, trace in zip(seeds, traces)
        },
    }
    write_summary(aggregate, out_dir / "summary.json")
    print(f"wrote {len(seeds)} trace(s) to {out_dir}")
    return EXIT_OK


def _cmd_check_delay(args: argparse.Namespace) -> int:
    spec = load_config(args.config)
    batch = spec.batch.size
    try:
        report = admissibility_check(
            spec.delay, spec.step, batch, spec.problem.lipschitz
        )
    except AnalysisUnavailableError as exc:
        _dump({"analysis_unavailable": True, "reason": str(exc)})
        return EXIT_OK
    head = report.weights.head
    _dump(
        {
            "analysis_unavailable": False,
            "admissible": report.admissible,
            "gamma_sup": report.gamma_sup,
            "step_cap": report.step_cap,
            "head_weight": None if not np.isfinite(head) else head,
            "weights": [float(w) for w in report.weights.values[:20]],
            "truncation_error": report.weights.truncation_error,
            "reason": report.reason,
        }
    )
    return EXIT_OK


def _load_ensemble(paths: list[Path]):
    return ensemble_mean([read_trace(p) for p in paths])


def _cmd_rate_fit(args: argparse.Namespace) -> int:
    paths = _expand(args.traces)
    if not paths:
        print("no trace files matched", file=sys.stderr)
        return EXIT_NO_INPUT
    iterations, mean, stderr, _ = _load_ensemble(paths)
    fit = fit_rate(iterations, mean, window=args.window)
    payload = fit.as_dict()
    payload["n_traces"] = len(paths)
    _dump(payload)
    out_dir = Path(args.out_dir) if args.out_dir else paths[0].parent
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "rate_fit_points.csv", "w", newline="") as handle:
        handle.write("k,mean,stderr\n")
        for row in zip(iterations, mean, stderr):
            handle.write("%d,%.17g,%.17g\n" % row)
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    groups: dict[str, tuple] = {}
    for item in args.groups:
        label, sep, pattern = item.partition("=")
        if not sep:
            label, pattern = item, item
        if label in groups:
            print(f"duplicate group label {label}", file=sys.stderr)
            return EXIT_CONFIG
        paths = _expand([pattern])
        if not paths:
            print(f"no trace files matched {pattern}", file=sys.stderr)
            return EXIT_NO_INPUT
        iterations, mean, _, vtime = _load_ensemble(paths)
        groups[label] = (iterations, mean, vtime)
    report = compare_to_threshold(groups, args.threshold)
    _dump(report.as_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asgd",
        description="Simulate and analyse stochastic gradient descent under delays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config and write traces")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--seed", type=int, help="run a single seed instead of run.seeds")
    p_run.add_argument("--out-dir", help="output directory (default from config)")
    p_run.add_argument("--algorithm", choices=ALGORITHMS, help="override run.algorithm")
    p_run.add_argument(
        "--allow-inadmissible",
        action="store_true",
        help="run even when the step size fails the admissibility check",
    )
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check-delay", help="print the admissibility verdict")
    p_check.add_argument("--config", required=True, help="TOML config path")
    p_check.set_defaults(func=_cmd_check_delay)

    p_fit = sub.add_parser("rate-fit", help="fit a decay rate to trace ensembles")
    p_fit.add_argument("traces", nargs="+", help="trace CSV paths or globs")
    p_fit.add_argument(
        "--window",
        type=float,
        default=0.5,
        help="trailing fraction of iterations used for the fit (default 0.5)",
    )
    p_fit.add_argument("--out-dir", help="where to write the fit points CSV")
    p_fit.set_defaults(func=_cmd_rate_fit)

    p_cmp = sub.add_parser("compare", help="rank ensembles by threshold crossing")
    p_cmp.add_argument(
        "groups",
        nargs="+",
        metavar="LABEL=GLOB",
        help="labelled trace globs, e.g. sync=out/sync/trace_*.csv",
    )
    p_cmp.add_argument("--threshold", type=float, required=True)
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InadmissibleConfigError as exc:
        print(f"refusing to run: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
