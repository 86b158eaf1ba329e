"""Least-squares calibration programs.

For each reviewer the reviews are taken in score order.  Writing
``xt = x(item) + eps`` for a perceived quality, ``dy`` / ``dxt`` for
consecutive score / perception gaps, the constraint blocks are

* noiseless linear: ``dx >= 1`` (``>= 0`` across a score tie) and equal
  slopes ``dx_l * dy_{l+1} = dx_{l+1} * dy_l``, no noise variables;
* linear: ``dxt >= dy / C`` plus the same equal-slope equalities on ``xt``;
* monotone: the gap inequalities only;
* convex / concave: gap inequalities plus a one-sided slope comparison
  (``dy/dxt`` nondecreasing for convex, nonincreasing for concave).

Ratios are always cross-multiplied so score ties stay well defined.  The
objective is ``sum(eps ** 2)`` plus a ``1e-12 * ||x||^2`` term that pins
down the otherwise free shift of ``x``.
"""
from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    DegenerateReviewer,
    DegenerateTruth,
    DimensionMismatch,
    EmptyReviewer,
    Infeasible,
    SlopeBoundViolated,
    SolverFailure,
    UnknownKind,
    UnreviewedItem,
)
from .model import Instance, reviewer_views
from .qpsolve import DEFAULT_TOL, FEASIBILITY_REG, QPProblem, QPSolution, Status, solve_qp

DEFAULT_C = 1000.0


class Kind(str, Enum):
    NOISELESS_LINEAR = "noiseless"
    LINEAR = "linear"
    MONOTONE = "monotone"
    CONVEX = "convex"
    CONCAVE = "concave"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "noiseless": cls.NOISELESS_LINEAR, "noiseless-linear": cls.NOISELESS_LINEAR,
            "lp": cls.NOISELESS_LINEAR,
            "linear": cls.LINEAR, "linear-noisy": cls.LINEAR, "lin": cls.LINEAR,
            "monotone": cls.MONOTONE, "mono": cls.MONOTONE,
            "convex": cls.CONVEX, "concave": cls.CONCAVE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise UnknownKind(f"unknown hypothesis class {value!r}") from None


# generator kind -> hypothesis kind that contains it
GENERATOR_CLASS = {
    "linear": Kind.LINEAR,
    "monotone": Kind.MONOTONE,
    "convex": Kind.CONVEX,
    "concave": Kind.CONCAVE,
}


class SingleReviewWarning(UserWarning):
    """A reviewer with one review contributes no constraint."""


@dataclass(frozen=True)
class HypothesisClass:
    """Per-reviewer prior on scoring functions.

    ``kind`` is either one :class:`Kind` for everybody or a tuple with one
    entry per reviewer.  ``C`` bounds the slope of every noisy kind.
    """

    kind: Kind | tuple = Kind.LINEAR
    C: float = DEFAULT_C

    def __post_init__(self):
        if isinstance(self.kind, (str, Kind)):
            object.__setattr__(self, "kind", Kind.parse(self.kind))
        else:
            object.__setattr__(self, "kind", tuple(Kind.parse(k) for k in self.kind))
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ValueError(f"slope bound C must be a positive finite number, got {self.C}")

    @classmethod
    def mixed(cls, kinds: Sequence | Mapping, C: float = DEFAULT_C, M: int = None,
              default=Kind.LINEAR) -> "HypothesisClass":
        if isinstance(kinds, Mapping):
            if M is None:
                M = 1 + max(kinds)
            kinds = [kinds.get(j, default) for j in range(M)]
        return cls(tuple(kinds), C)

    @property
    def uniform(self) -> bool:
        return isinstance(self.kind, Kind)

    def kind_of(self, j: int) -> Kind:
        return self.kind if self.uniform else self.kind[j]

    def label(self) -> str:
        if self.uniform:
            return self.kind.value
        return "mixed(" + ",".join(sorted({k.value for k in self.kind})) + ")"


@dataclass
class LSCProgram:
    """A built calibration program and the bookkeeping to read its solution."""

    problem: QPProblem
    num_items: int
    hypothesis: HypothesisClass
    views: list
    eps_index: dict  # (reviewer, position) -> variable index
    single_review: tuple
    x_reg: float

    def split(self, z):
        z = np.asarray(z, dtype=float)
        x = z[: self.num_items]
        eps = {key: float(z[v]) for key, v in self.eps_index.items()}
        return x, eps

    def perceptions(self, z) -> dict:
        """``xt = x + eps`` per reviewer, in view order."""
        z = np.asarray(z, dtype=float)
        return {view.reviewer_id: self.perception_of(z, view.reviewer_id) for view in self.views}

    def perception_of(self, z, j: int) -> np.ndarray:
        view = self.views[j]
        xt = np.asarray(z, dtype=float)[view.items]
        for pos in range(len(view)):
            v = self.eps_index.get((j, pos))
            if v is not None:
                xt[pos] += z[v]
        return xt

    def planted_point(self, x_star, eps_planted: Mapping) -> np.ndarray:
        """Variable vector for given qualities and per-(reviewer, item) noise."""
        z = np.zeros(self.problem.n_vars)
        z[: self.num_items] = x_star
        for view in self.views:
            for pos, (item, _) in enumerate(view.entries):
                v = self.eps_index.get((view.reviewer_id, pos))
                if v is not None:
                    z[v] = eps_planted[(view.reviewer_id, item)]
        return z

    def violation(self, z) -> tuple[float, float]:
        """Absolute ``(max |Az - b|, max(Gz - h)+)`` at ``z``."""
        p = self.problem
        eq = float(np.max(np.abs(p.A @ z - p.b))) if p.n_eq else 0.0
        ineq = float(max(0.0, np.max(p.G @ z - p.h))) if p.n_ineq else 0.0
        return eq, ineq


class _Rows:
    def __init__(self):
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []

    def add(self, coeffs: dict, rhs: float):
        r = len(self.rhs)
        for c, v in coeffs.items():
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(c)
                self.vals.append(v)
        self.rhs.append(rhs)

    def matrix(self, n):
        return sp.csc_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n))


def build_program(instance: Instance, hypothesis: HypothesisClass | str,
                  x_reg: float = FEASIBILITY_REG) -> LSCProgram:
    if not isinstance(hypothesis, HypothesisClass):
        hypothesis = HypothesisClass(hypothesis)
    if not hypothesis.uniform and len(hypothesis.kind) != instance.num_reviewers:
        raise DimensionMismatch(
            f"{len(hypothesis.kind)} per-reviewer kinds for {instance.num_reviewers} reviewers")
    N = instance.num_items
    C = float(hypothesis.C)
    views = reviewer_views(instance)

    eps_index = {}
    nv = N
    for view in views:
        if len(view) == 0:
            raise EmptyReviewer(f"reviewer {view.reviewer_id} has no reviews")
        if hypothesis.kind_of(view.reviewer_id) is not Kind.NOISELESS_LINEAR:
            for pos in range(len(view)):
                eps_index[(view.reviewer_id, pos)] = nv
                nv += 1

    eq, ineq = _Rows(), _Rows()
    single = []
    for view in views:
        j = view.reviewer_id
        kind = hypothesis.kind_of(j)
        items, y = view.items, view.scores
        L = len(view)
        if L == 1:
            single.append(j)
            continue

        def xt(pos, coef, acc):
            # accumulate coef * (x_item + eps) into acc
            acc[int(items[pos])] = acc.get(int(items[pos]), 0.0) + coef
            v = eps_index.get((j, pos))
            if v is not None:
                acc[v] = acc.get(v, 0.0) + coef

        dy = np.diff(y)
        for pos in range(1, L):
            acc: dict = {}
            xt(pos, -1.0, acc)
            xt(pos - 1, 1.0, acc)
            if kind is Kind.NOISELESS_LINEAR:
                need = 1.0 if dy[pos - 1] > 0 else 0.0
            else:
                need = dy[pos - 1] / C
            ineq.add(acc, -need)

        if kind is Kind.MONOTONE:
            continue
        for pos in range(1, L - 1):
            d1, d2 = dy[pos - 1], dy[pos]
            norm = max(abs(d1), abs(d2))
            if norm == 0.0:
                continue
            d1, d2 = d1 / norm, d2 / norm
            acc = {}
            if kind in (Kind.LINEAR, Kind.NOISELESS_LINEAR):
                # (xt_l - xt_{l-1}) d2 - (xt_{l+1} - xt_l) d1 = 0
                xt(pos - 1, -d2, acc)
                xt(pos, d2 + d1, acc)
                xt(pos + 1, -d1, acc)
                eq.add(acc, 0.0)
            else:
                # convex: d1 * (xt_{l+1} - xt_l) - d2 * (xt_l - xt_{l-1}) <= 0
                sign = 1.0 if kind is Kind.CONVEX else -1.0
                xt(pos + 1, sign * d1, acc)
                xt(pos, -sign * (d1 + d2), acc)
                xt(pos - 1, sign * d2, acc)
                ineq.add(acc, 0.0)

    if single:
        warnings.warn(f"{len(single)} reviewer(s) with a single review add no constraints",
                      SingleReviewWarning, stacklevel=2)

    pdiag = np.full(nv, float(x_reg))
    pdiag[N:] = 2.0
    problem = QPProblem.build(
        n=nv, P=pdiag, q=np.zeros(nv),
        A=eq.matrix(nv), b=np.array(eq.rhs, dtype=float),
        G=ineq.matrix(nv), h=np.array(ineq.rhs, dtype=float),
    )
    return LSCProgram(problem, N, hypothesis, views, eps_index, tuple(single), float(x_reg))


def feasibility_scale(program: LSCProgram, z) -> float:
    """Smallest ``t >= 1`` with ``t * z`` meeting every inequality with negative right side.

    All constraint blocks are homogeneous apart from those right-hand sides,
    so positive scaling is the only adjustment a feasible direction needs.
    Returns ``inf`` when some such row is not strictly satisfied in direction.
    """
    p = program.problem
    Gz = p.G @ z
    t = 1.0
    for g, h in zip(Gz, p.h):
        if h < 0:
            if g >= 0:
                return math.inf
            t = max(t, h / g)
    return t


@dataclass
class CalibrationResult:
    qualities: np.ndarray
    noise: dict  # (reviewer, position in sorted view) -> eps
    objective: float
    status: str
    normalized_qualities: np.ndarray
    hypothesis: HypothesisClass
    weakly_identified: tuple = ()
    unreviewed: tuple = ()
    reviewer_functions: dict = field(default_factory=dict)
    recovery_robust: bool | None = None
    solution: QPSolution | None = field(default=None, repr=False)
    program: LSCProgram | None = field(default=None, repr=False)

    def perceptions(self) -> dict:
        """Perceived qualities ``x + eps`` per reviewer, in sorted-view order."""
        return self.program.perceptions(self.solution.z)

    def to_dict(self, item_labels=None) -> dict:
        def clean(v):
            return None if not math.isfinite(v) else float(v)

        out = {
            "hypothesis": self.hypothesis.label(),
            "C": self.hypothesis.C,
            "status": self.status,
            "objective": float(self.objective),
            "qualities": [clean(v) for v in self.qualities],
            "normalized_qualities": [clean(v) for v in self.normalized_qualities],
            "reviewer_functions": {
                str(j): {"slope": a, "intercept": b}
                for j, (a, b) in sorted(self.reviewer_functions.items())
            },
            "weakly_identified": list(self.weakly_identified),
            "unreviewed": list(self.unreviewed),
            "recovery_robust": self.recovery_robust,
        }
        if item_labels is not None:
            out["item_ids"] = list(item_labels)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def normalize(x) -> np.ndarray:
    """Affine map of the finite entries onto [0, 1]; a constant maps to 0.5."""
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, np.nan)
    ok = np.isfinite(x)
    if not ok.any():
        return out
    lo, hi = x[ok].min(), x[ok].max()
    out[ok] = 0.5 if hi == lo else (x[ok] - lo) / (hi - lo)
    return out


def _insert_by_average(x, avg, weak, identified):
    """Place weakly identified items by an isotonic fit of x on average score."""
    from sklearn.isotonic import IsotonicRegression

    if len(identified) < 2:
        x[weak] = avg[weak]
        return x
    iso = IsotonicRegression(out_of_bounds="clip")
    iso.fit(avg[identified], x[identified])
    x[weak] = iso.predict(avg[weak])
    return x


def calibrate(instance: Instance, hypothesis: HypothesisClass | str = Kind.LINEAR,
              solver_tol: float = DEFAULT_TOL, max_iter: int = None,
              reconstruct: bool = True) -> CalibrationResult:
    """Solve the least-squares calibration program for ``instance``.

    Raises ``Infeasible`` when the noiseless-linear program has no solution
    (the scores are not consistent with noiseless linear reviewers) and
    ``SolverFailure`` when the solver stops without a certificate.
    """
    from .reviewgraph import build_review_graph, is_recovery_robust

    if not isinstance(hypothesis, HypothesisClass):
        hypothesis = HypothesisClass(hypothesis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingleReviewWarning)
        program = build_program(instance, hypothesis)
    kwargs = {} if max_iter is None else {"max_iter": max_iter}
    sol = solve_qp(program.problem, tol=solver_tol, **kwargs)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible(
            f"calibration program is infeasible (L1 violation {sol.infeasibility:.3g})")
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(f"solver stopped with status {sol.status.value}")

    x, noise = program.split(sol.z)
    x = x.copy()
    counts = instance.reviews_per_item()
    unreviewed = tuple(int(i) for i in np.flatnonzero(counts == 0))
    constrained = np.zeros(instance.num_items, dtype=bool)
    single = set(program.single_review)
    for view in program.views:
        if view.reviewer_id not in single:
            constrained[view.items] = True
    weak = np.flatnonzero((counts > 0) & ~constrained)
    if weak.size:
        avg = _average_scores(instance)
        x = _insert_by_average(x, avg, weak, np.flatnonzero(constrained))
    x[list(unreviewed)] = np.nan

    graph = build_review_graph(instance)
    robust, _ = is_recovery_robust(graph, instance.num_items)
    result = CalibrationResult(
        qualities=x,
        noise=noise,
        objective=float(sum(e * e for e in noise.values())),
        status=sol.status.value,
        normalized_qualities=normalize(x),
        hypothesis=hypothesis,
        weakly_identified=tuple(int(i) for i in weak),
        unreviewed=unreviewed,
        recovery_robust=bool(robust),
        solution=sol,
        program=program,
    )
    if reconstruct:
        linear_like = (Kind.LINEAR, Kind.NOISELESS_LINEAR)
        wanted = [j for j in range(instance.num_reviewers) if hypothesis.kind_of(j) in linear_like]
        fns = {}
        for j in wanted:
            try:
                fns[j] = _reconstruct_one(program, sol.z, j, math.inf, 1e-6)
            except (DegenerateReviewer, SlopeBoundViolated):
                continue
        result.reviewer_functions = fns
    return result


@dataclass(frozen=True)
class PerfectRecoveryReport:
    is_perfect: bool
    a: float
    b: float
    max_residual: float


def check_perfect_recovery(x, x_star, tol: float = 1e-6) -> PerfectRecoveryReport:
    """Least-squares fit ``x ~ a * x_star + b``; perfect iff ``a > 0`` and the
    largest residual is at most ``tol`` times the range of ``x``."""
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise DimensionMismatch(f"length mismatch {x.shape} vs {x_star.shape}")
    ok = np.isfinite(x)
    x, x_star = x[ok], x_star[ok]
    if x.size < 2:
        raise DegenerateTruth("need at least two items")
    if np.ptp(x_star) == 0:
        raise DegenerateTruth("ground truth is constant")
    design = np.column_stack([x_star, np.ones_like(x_star)])
    (a, b), *_ = np.linalg.lstsq(design, x, rcond=None)
    resid = float(np.max(np.abs(design @ np.array([a, b]) - x)))
    spread = float(np.ptp(x))
    perfect = bool(a > 0 and spread > 0 and resid <= tol * spread)
    return PerfectRecoveryReport(perfect, float(a), float(b), resid)


def interpolate_linear(xt, y, C: float = math.inf, tol: float = 1e-6, reviewer=None):
    """Slope and intercept of the line through score-sorted points ``(xt, y)``.

    The slope comes from the two end points; the intercept is the mean
    offset.  Raises ``DegenerateReviewer`` if the points are not collinear
    within ``tol`` or span no range, and ``SlopeBoundViolated`` if the slope
    exceeds ``C`` by more than ``tol``.
    """
    xt = np.asarray(xt, dtype=float)
    y = np.asarray(y, dtype=float)
    who = "" if reviewer is None else f"reviewer {reviewer}: "
    if xt.size == 1:
        slope = min(1.0, C)
        return slope, float(y[0] - slope * xt[0])
    span_x = xt[-1] - xt[0]
    span_y = y[-1] - y[0]
    if not span_x > 0 or not span_y > 0:
        raise DegenerateReviewer(f"{who}perceived qualities or scores coincide")
    slope = span_y / span_x
    intercept = float(np.mean(y - slope * xt))
    misfit = float(np.max(np.abs(slope * xt + intercept - y)))
    if misfit > tol:
        raise DegenerateReviewer(f"{who}points are not collinear (misfit {misfit:.3g})")
    if not slope <= C + tol:
        raise SlopeBoundViolated(f"{who}slope {slope!r} exceeds {C}")
    return float(slope), intercept


def _reconstruct_one(program: LSCProgram, z, j: int, C: float, tol: float):
    view = program.views[j]
    return interpolate_linear(program.perception_of(z, j), view.scores, C, tol, reviewer=j)


def reconstruct_scoring_functions(instance: Instance, result: CalibrationResult,
                                  C: float = None, tol: float = 1e-6) -> dict:
    """Linear scoring functions that reproduce every score from the solution.

    For each reviewer, interpolates ``(x + eps, y)``; returns
    ``{reviewer: (slope, intercept)}`` with ``0 < slope <= C`` and
    ``slope * (x + eps) + intercept == y`` within ``tol``.
    """
    if C is None:
        C = result.hypothesis.C
    return {j: _reconstruct_one(result.program, result.solution.z, j, C, tol)
            for j in range(instance.num_reviewers)}


def _average_scores(instance: Instance) -> np.ndarray:
    totals = np.bincount(instance.item_ids, weights=instance.scores, minlength=instance.num_items)
    counts = instance.reviews_per_item()
    with np.errstate(invalid="ignore", divide="ignore"):
        return totals / counts


def average_baseline(instance: Instance) -> np.ndarray:
    """Mean score received by every item."""
    counts = instance.reviews_per_item()
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0)[:10].tolist()
        raise UnreviewedItem(f"items without reviews: {missing}")
    sums = defaultdict(list)
    for r in instance.reviews:
        sums[r.item_id].append(r.score)
    return np.array([math.fsum(sums[i]) / len(sums[i]) for i in range(instance.num_items)])
