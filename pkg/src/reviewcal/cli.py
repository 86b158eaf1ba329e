"""Command line entry point: ``reviewcal <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure
(for ``experiment`` and ``sweep``: every LSC run failed in the solver).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .assignment import AssignmentConfig, assignment_rows, doubly_connected_assignment, random_assignment
from .calibrate import HypothesisClass, Kind, calibrate, check_perfect_recovery
from .exceptions import ConfigError, DataError, MissingGroundTruth, ParseError, SolverError
from .experiment import (
    PRESETS,
    SWEEP_AXES,
    ExperimentConfig,
    generate_synthetic,
    parse_mixture,
    run_experiment,
    sweep,
    sweep_csv,
)
from .metrics import evaluate
from .model import read_reviews_csv, write_ground_truth_csv, write_reviews_csv
from .reviewgraph import build_review_graph, is_recovery_robust, repeat_union2
from .synth import QualityDistribution

log = logging.getLogger("reviewcal")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


def load_config(path) -> dict:
    """Read a YAML or JSON mapping."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def resolve_experiment_config(args) -> ExperimentConfig:
    """Preset, then config file, then explicit flags."""
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[args.preset].to_dict()
    if args.config:
        base.update(load_config(args.config))
    overrides = {
        "N": args.N, "M": args.M, "k": args.k, "sigma": args.sigma, "trials": args.trials,
        "seed": args.seed, "acceptance_ratio": args.ratio, "assignment": args.assignment,
        "C": args.C, "solver_tol": args.tol,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.mixture is not None:
        base["mixture"] = parse_mixture(args.mixture)
    if args.methods is not None:
        base["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.quality is not None:
        base["quality"] = _quality(args.quality)
    try:
        return ExperimentConfig.from_dict(base).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _quality(name) -> dict:
    if name == "iclr":
        return {"mean": 5.32, "std": 1.2, "low": 0.0, "high": 10.0}
    if name == "default":
        return QualityDistribution().__dict__
    raise ConfigError(f"unknown quality distribution {name!r} (default, iclr)")


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _json_clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_clean(obj.item())
    return obj


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    data = generate_synthetic(args.N, args.M, args.k, args.sigma,
                              parse_mixture(args.mixture), args.assignment,
                              QualityDistribution(**_quality(args.quality)), args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_reviews_csv(data.instance, out / "reviews.csv")
    write_ground_truth_csv(data.instance, out / "truth.csv")
    meta = {
        "N": args.N, "M": args.M, "k": args.k, "sigma": args.sigma, "seed": args.seed,
        "assignment": args.assignment, "mixture": parse_mixture(args.mixture),
        "functions": [f.to_dict() for f in data.functions],
    }
    (out / "generator.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %d reviews to %s", len(data.instance), out)
    return EXIT_OK


def cmd_assign(args) -> int:
    cfg = AssignmentConfig(args.N, args.M, args.k, args.seed)
    plan = random_assignment(cfg) if args.kind == "random" else doubly_connected_assignment(cfg)
    lines = ["reviewer_id,item_id"] + [f"{j},{i}" for j, i in assignment_rows(plan)]
    _write_text(args.out, "\n".join(lines))
    return EXIT_OK


def _read_kinds(path, reviewer_labels) -> tuple:
    index = {lab: j for j, lab in enumerate(reviewer_labels)}
    kinds = [None] * len(reviewer_labels)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and row and row[0].strip() == "reviewer_id":
                continue
            if not row:
                continue
            if len(row) != 2:
                raise ParseError("expected reviewer_id,kind", line=lineno)
            lab = row[0].strip()
            if lab not in index:
                raise ParseError(f"unknown reviewer {lab!r}", line=lineno)
            kinds[index[lab]] = Kind.parse(row[1])
    missing = [reviewer_labels[j] for j, k in enumerate(kinds) if k is None]
    if missing:
        raise ConfigError(f"no kind given for reviewers {missing[:10]}")
    return tuple(kinds)


def calibrate_file(reviews, truth=None, kind="linear", C=1000.0, tol=1e-8, kinds_file=None,
                   metrics=False, n=None) -> dict:
    instance, reviewer_labels, item_labels = read_reviews_csv(reviews, truth)
    hyp_kind = _read_kinds(kinds_file, reviewer_labels) if kinds_file else kind
    result = calibrate(instance, HypothesisClass(hyp_kind, C), solver_tol=tol)
    out = result.to_dict(item_labels=item_labels)
    out["reviewer_ids"] = list(reviewer_labels)
    if metrics and instance.ground_truth is None:
        raise MissingGroundTruth("metrics requested but no ground-truth file given")
    if instance.ground_truth is not None:
        size = n if n is not None else max(1, round(0.1 * instance.num_items))
        bundle = evaluate(result.qualities, instance.ground_truth, size)
        report = check_perfect_recovery(result.qualities, instance.ground_truth) \
            if np.ptp(instance.ground_truth) > 0 else None
        out["metrics"] = {"n": size, **bundle.to_dict()}
        if report is not None:
            out["metrics"]["perfect_recovery"] = report.is_perfect
    return out


def cmd_calibrate(args) -> int:
    out = calibrate_file(args.reviews, args.truth, args.kind, args.C, args.tol,
                         args.kinds_file, args.metrics, args.n)
    _write_text(args.out, json.dumps(_json_clean(out), indent=2))
    return EXIT_OK


def graph_report(reviews) -> dict:
    instance, reviewer_labels, item_labels = read_reviews_csv(reviews)
    graph = build_review_graph(instance)
    partition = repeat_union2(graph)
    robust, _ = is_recovery_robust(graph, instance.num_items, partition)
    comps = [{
        "reviewers": [reviewer_labels[j] for j in sorted(c.reviewers)],
        "items": [item_labels[i] for i in sorted(c.items)],
        "covered_items": len(c.items),
    } for c in partition]
    report = {"recovery_robust": bool(robust), "num_components": len(comps), "components": comps}
    if not robust and len(comps) >= 2:
        a, b = sorted(range(len(comps)), key=lambda t: (comps[t]["covered_items"], t))[:2]
        ra = comps[a]["reviewers"][0]
        report["suggestion"] = (
            f"components {a} and {b} are the smallest; have reviewer {ra} of component {a} "
            f"also review two items covered by component {b} so the two share two items")
    elif not robust:
        missing = instance.num_items - comps[0]["covered_items"]
        report["suggestion"] = f"{missing} items lie outside the only component"
    return report


def cmd_graph(args) -> int:
    _write_text(args.out, json.dumps(graph_report(args.reviews), indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = resolve_experiment_config(args)
    report = run_experiment(config, workers=args.workers, timing=not args.no_timing,
                            log=log.info)
    _write_text(args.out, report.to_json())
    return EXIT_SOLVER if report.all_solver_failures() else EXIT_OK


def _parse_values(axis, raw):
    values = [v.strip() for v in (raw.split(";") if axis == "mixture" else raw.split(","))]
    values = [v for v in values if v]
    if not values:
        raise ConfigError("no sweep values given")
    try:
        if axis == "k":
            return [int(v) for v in values]
        if axis == "sigma":
            return [float(v) for v in values]
    except ValueError:
        raise ConfigError(f"bad value in {raw!r} for axis {axis}") from None
    return values


def cmd_sweep(args) -> int:
    config = resolve_experiment_config(args)
    values = _parse_values(args.axis, args.values)
    rows = sweep(config, args.axis, values, workers=args.workers, timing=not args.no_timing,
                 log=log.info)
    _write_text(args.out, sweep_csv(rows))
    lsc = [r for r in rows if r["method"] != "average"]
    if lsc and all(math.isnan(r["precision_mean"]) for r in lsc):
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _experiment_flags(p):
    p.add_argument("--preset", default="desk", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--config", help="YAML or JSON file with ExperimentConfig fields")
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, help="acceptance ratio (fraction selected)")
    p.add_argument("--assignment", choices=("random", "doubly_connected"))
    p.add_argument("--mixture", help='e.g. "linear=0.5,convex=0.5"')
    p.add_argument("--methods", help="comma list: average,lsc-noiseless,lsc-linear,lsc-mono,"
                                     "lsc-convex,lsc-concave,lsc-mix")
    p.add_argument("--quality", choices=("default", "iclr"))
    p.add_argument("--C", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--workers", type=int, help="parallel trials (default: $REVIEWCAL_WORKERS or 1)")
    p.add_argument("--no-timing", action="store_true", help="omit wall times (byte-stable output)")
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reviewcal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark")
    g.add_argument("--N", type=int, default=200)
    g.add_argument("--M", type=int, default=200)
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--mixture", default="linear")
    g.add_argument("--assignment", choices=("random", "doubly_connected"), default="doubly_connected")
    g.add_argument("--quality", choices=("default", "iclr"), default="default")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("assign", help="print a reviewer-item assignment")
    a.add_argument("--N", type=int, required=True)
    a.add_argument("--M", type=int, required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--kind", choices=("random", "doubly_connected"), default="random")
    a.add_argument("--out")
    a.set_defaults(func=cmd_assign)

    c = sub.add_parser("calibrate", help="calibrate a review CSV")
    c.add_argument("reviews")
    c.add_argument("--truth", help="ground-truth CSV (item_id,quality)")
    c.add_argument("--kind", default="linear",
                   help="noiseless, linear, monotone, convex or concave")
    c.add_argument("--kinds-file", help="CSV reviewer_id,kind for per-reviewer classes")
    c.add_argument("--C", type=float, default=1000.0)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--metrics", action="store_true", help="require ground truth and report metrics")
    c.add_argument("--n", type=int, help="selection size for metrics (default 10%% of items)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("graph", help="review-graph components and robustness")
    r.add_argument("reviews")
    r.add_argument("--out")
    r.set_defaults(func=cmd_graph)

    e = sub.add_parser("experiment", help="run repeated synthetic trials")
    _experiment_flags(e)
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", help="sweep one experiment parameter, emit CSV")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True,
                   help='comma list; for mixture use ";" between mixtures')
    _experiment_flags(s)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
