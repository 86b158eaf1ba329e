"""Synthetic experiment harness: generate, calibrate, score, aggregate.

Every trial derives its own seed from the run seed through
``numpy.random.SeedSequence.spawn``, so a trial's outcome depends only on
``(config, trial index)`` and trials can run in any order or in parallel.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .assignment import AssignmentConfig, doubly_connected_assignment, random_assignment
from .calibrate import GENERATOR_CLASS, HypothesisClass, Kind, average_baseline, calibrate
from .exceptions import InvalidAxis, InvalidConfig, ReviewCalError, SolverError
from .metrics import evaluate
from .synth import (
    KINDS,
    NoiseModel,
    QualityDistribution,
    SyntheticData,
    generate_scores,
    mixture_kinds,
    sample_qualities,
    sample_scoring_function,
)

NOISY_SIGMA = 0.5
ACCEPTANCE_RATIO = 0.1
WORKERS_ENV = "REVIEWCAL_WORKERS"

METHODS = {
    "average": None,
    "lsc-noiseless": Kind.NOISELESS_LINEAR,
    "lsc-linear": Kind.LINEAR,
    "lsc-mono": Kind.MONOTONE,
    "lsc-convex": Kind.CONVEX,
    "lsc-concave": Kind.CONCAVE,
    "lsc-mix": "mix",  # per-reviewer class matching each reviewer's generator
}
METRICS = ("precision", "avg_gap", "avg_l1", "ap", "ndcg")
ASSIGNMENTS = ("random", "doubly_connected")
SWEEP_AXES = ("k", "ratio", "sigma", "mixture")
SWEEP_HEADER = ("axis_value", "method", "precision_mean", "precision_std", "avg_gap_mean",
                "avg_gap_std", "avg_l1_mean", "ap_mean", "ndcg_mean", "wall_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 200
    M: int = 200
    k: int = 5
    sigma: float = 0.0
    trials: int = 20
    seed: int = 0
    acceptance_ratio: float = ACCEPTANCE_RATIO
    quality: QualityDistribution = QualityDistribution()
    assignment: str = "doubly_connected"
    mixture: dict = field(default_factory=lambda: {"linear": 1.0})
    methods: tuple = ("average", "lsc-linear")
    solver_tol: float = 1e-8
    C: float = 1000.0

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise InvalidConfig(f"trials must be >= 1, got {self.trials}")
        if not 0 < self.acceptance_ratio <= 1:
            raise InvalidConfig(f"acceptance_ratio must lie in (0, 1], got {self.acceptance_ratio}")
        if self.sigma < 0:
            raise InvalidConfig(f"sigma must be >= 0, got {self.sigma}")
        if self.assignment not in ASSIGNMENTS:
            raise InvalidConfig(f"assignment must be one of {ASSIGNMENTS}, got {self.assignment!r}")
        if not self.mixture or any(k not in KINDS for k in self.mixture):
            raise InvalidConfig(f"mixture kinds must come from {KINDS}, got {sorted(self.mixture)}")
        if any(v < 0 for v in self.mixture.values()) or abs(sum(self.mixture.values()) - 1) > 1e-9:
            raise InvalidConfig("mixture proportions must be nonnegative and sum to 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise InvalidConfig(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
        if not (self.C > 0 and self.solver_tol > 0):
            raise InvalidConfig("C and solver_tol must be positive")
        AssignmentConfig(self.N, self.M, self.k).validate()
        self.quality.validate()
        return self

    @property
    def n_select(self) -> int:
        return max(1, int(round(self.acceptance_ratio * self.N)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidConfig(f"unknown config keys: {sorted(extra)}")
        if isinstance(d.get("quality"), dict):
            d["quality"] = QualityDistribution(**d["quality"])
        if "methods" in d:
            d["methods"] = tuple([d["methods"]] if isinstance(d["methods"], str) else d["methods"])
        if isinstance(d.get("mixture"), str):
            d["mixture"] = parse_mixture(d["mixture"])
        return cls(**d)


PRESETS = {
    "desk": ExperimentConfig(),
    "desk-noisy": ExperimentConfig(sigma=NOISY_SIGMA),
    "paper": ExperimentConfig(N=1000, M=1000),
    "paper-noisy": ExperimentConfig(N=1000, M=1000, sigma=NOISY_SIGMA),
}


def parse_mixture(text: str) -> dict:
    """``"linear=0.5,convex=0.5"`` -> ``{"linear": 0.5, "convex": 0.5}``; a bare kind means 1."""
    out = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        name, _, weight = part.partition("=")
        try:
            out[name.strip()] = float(weight) if weight else 1.0
        except ValueError:
            raise InvalidConfig(f"bad mixture weight in {part!r}") from None
    return out


def _child_seeds(seed, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def generate_synthetic(N: int, M: int, k: int, sigma: float = 0.0, mixture=None,
                       assignment: str = "doubly_connected",
                       quality: QualityDistribution = QualityDistribution(),
                       seed: int = 0) -> SyntheticData:
    mixture = {"linear": 1.0} if mixture is None else mixture
    s_quality, s_assign, s_kinds, s_funcs, s_noise = _child_seeds(seed, 5)
    x_star = sample_qualities(N, quality, seed=s_quality)
    cfg = AssignmentConfig(N, M, k, seed=s_assign)
    if assignment == "random":
        plan = random_assignment(cfg)
    elif assignment == "doubly_connected":
        plan = doubly_connected_assignment(cfg)
    else:
        raise InvalidConfig(f"assignment must be one of {ASSIGNMENTS}, got {assignment!r}")
    kinds = mixture_kinds(M, mixture, seed=s_kinds)
    rng = np.random.default_rng(s_funcs)
    functions = [sample_scoring_function(kind, seed=rng, n_points=len(plan[j]))
                 for j, kind in enumerate(kinds)]
    instance, perceptions = generate_scores(x_star, plan, functions,
                                            NoiseModel(sigma, s_noise), return_perceptions=True)
    return SyntheticData(instance, functions, kinds, perceptions, plan)


@dataclass
class TrialReport:
    trial: int
    seed: int
    results: dict  # method -> {"status", metrics..., "wall_ms"?, "error"?}

    def ok(self, method: str) -> bool:
        return self.results[method]["status"] == "ok"


def run_method(method: str, data: SyntheticData, config: ExperimentConfig):
    """Recovered qualities for one method."""
    kind = METHODS[method]
    if kind is None:
        return average_baseline(data.instance)
    if kind == "mix":
        hyp = HypothesisClass(tuple(GENERATOR_CLASS[k] for k in data.kinds), config.C)
    else:
        hyp = HypothesisClass(kind, config.C)
    res = calibrate(data.instance, hyp, solver_tol=config.solver_tol, reconstruct=False)
    return res.qualities


def run_trial(config: ExperimentConfig, trial: int, seed: int, timing: bool = True) -> TrialReport:
    data = generate_synthetic(config.N, config.M, config.k, config.sigma, config.mixture,
                              config.assignment, config.quality, seed)
    x_star = data.instance.ground_truth
    results = {}
    for method in config.methods:
        t0 = time.perf_counter()
        try:
            x = run_method(method, data, config)
            entry = {"status": "ok", **evaluate(x, x_star, config.n_select).to_dict()}
        except SolverError as exc:
            entry = {"status": "solver_error", "error": f"{type(exc).__name__}: {exc}"}
        except ReviewCalError as exc:
            entry = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        if timing:
            entry["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
        results[method] = entry
    return TrialReport(trial, seed, results)


def _trial_job(args):
    return run_trial(*args)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfig(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _mean_std(values):
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def summarize(config: ExperimentConfig, trials) -> dict:
    """Mean and sample standard deviation per metric over successful trials."""
    out = {}
    for method in config.methods:
        ok = [t.results[method] for t in trials if t.ok(method)]
        entry = {"trials_ok": len(ok), "trials_failed": len(trials) - len(ok)}
        for metric in METRICS:
            entry[f"{metric}_mean"], entry[f"{metric}_std"] = _mean_std([r[metric] for r in ok])
        walls = [t.results[method]["wall_ms"] for t in trials if "wall_ms" in t.results[method]]
        if walls:
            entry["wall_ms"] = float(np.mean(walls))
        out[method] = entry
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    trials: list
    summary: dict

    def all_solver_failures(self) -> bool:
        """True if every LSC method failed in the solver on every trial."""
        lsc = [m for m in self.config.methods if METHODS[m] is not None]
        if not lsc:
            return False
        return all(t.results[m]["status"] == "solver_error" for t in self.trials for m in lsc)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "summary": self.summary,
            "trials": [asdict(t) for t in self.trials],
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True)


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def run_experiment(config: ExperimentConfig, workers: int = None, timing: bool = True,
                   log=None) -> ExperimentReport:
    config.validate()
    workers = default_workers() if workers is None else max(1, int(workers))
    seeds = _child_seeds(config.seed, config.trials)
    jobs = [(config, t, s, timing) for t, s in enumerate(seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            reports = list(pool.map(_trial_job, jobs))
    else:
        reports = []
        for job in jobs:
            reports.append(_trial_job(job))
            if log is not None:
                log(_trial_line(reports[-1]))
    if workers > 1 and log is not None:
        for r in reports:
            log(_trial_line(r))
    return ExperimentReport(config, reports, summarize(config, reports))


def _trial_line(report: TrialReport) -> str:
    parts = []
    for method, r in report.results.items():
        parts.append(f"{method}={r['precision']:.3f}" if r["status"] == "ok" else f"{method}={r['status']}")
    return f"trial {report.trial} seed {report.seed}: " + " ".join(parts)


def _axis_config(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "k":
        return replace(config, k=int(value))
    if axis == "sigma":
        return replace(config, sigma=float(value))
    if axis == "ratio":
        ratio = _parse_ratio(value)
        return replace(config, M=max(1, int(round(config.N / ratio))))
    if axis == "mixture":
        return replace(config, mixture=parse_mixture(value) if isinstance(value, str) else dict(value))
    raise InvalidAxis(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def _parse_ratio(value) -> float:
    """Item-to-reviewer ratio ``N/M`` from ``2``, ``"2"`` or ``"2:1"``."""
    try:
        if isinstance(value, str) and ":" in value:
            a, b = value.split(":")
            r = float(a) / float(b)
        else:
            r = float(value)
    except (ValueError, ZeroDivisionError):
        raise InvalidConfig(f"bad ratio {value!r}") from None
    if not r > 0:
        raise InvalidConfig(f"ratio must be positive, got {value!r}")
    return r


def sweep(config: ExperimentConfig, axis: str, values, workers: int = None,
          timing: bool = True, log=None) -> list[dict]:
    """One summary row per (axis value, method)."""
    if axis not in SWEEP_AXES:
        raise InvalidAxis(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    configs = [(v, _axis_config(config, axis, v).validate()) for v in values]
    rows = []
    for value, cfg in configs:
        report = run_experiment(cfg, workers=workers, timing=timing, log=log)
        for method in cfg.methods:
            s = report.summary[method]
            rows.append({
                "axis_value": value if isinstance(value, str) else json.dumps(value),
                "method": method,
                "precision_mean": s["precision_mean"],
                "precision_std": s["precision_std"],
                "avg_gap_mean": s["avg_gap_mean"],
                "avg_gap_std": s["avg_gap_std"],
                "avg_l1_mean": s["avg_l1_mean"],
                "ap_mean": s["ap_mean"],
                "ndcg_mean": s["ndcg_mean"],
                "wall_ms": s.get("wall_ms", math.nan),
                "M": cfg.M,
            })
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_HEADER, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
