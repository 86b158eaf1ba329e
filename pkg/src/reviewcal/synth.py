"""Synthetic benchmark generation.

Scores follow ``y = f_j(x*(i) + eps)`` with Gaussian perception noise ``eps``.
Convex and concave scoring functions only make sense on ``[0, 10]`` (they use
fractional powers), so they are applied to the perception clamped to that
interval; the clamped value is what the generator reports as the perception.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DimensionMismatch, InvalidDistribution, UnknownKind
from .model import Instance, from_reviews

KINDS = ("linear", "concave", "convex", "monotone")
LOW, HIGH = 0.0, 10.0

CONCAVE_POWERS = (2, 3, 4)  # c_p * x ** (1 / p)
CONVEX_POWERS = (2.0, 2.5, 3.0)


@dataclass(frozen=True)
class QualityDistribution:
    mean: float = 5.0
    std: float = 1.6
    low: float = LOW
    high: float = HIGH

    def validate(self):
        if not self.std > 0:
            raise InvalidDistribution(f"std must be positive, got {self.std}")
        if not self.low < self.high:
            raise InvalidDistribution(f"need low < high, got [{self.low}, {self.high}]")
        return self


# Estimated from ICLR 2019 scores; the appendix default above is used otherwise.
ICLR_DISTRIBUTION = QualityDistribution(mean=5.32, std=1.2)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class ScoringFunction:
    """A monotone nondecreasing reviewer scoring function.

    ``params`` holds ``(a, b)`` for linear, the three basis weights for
    concave/convex, and the sorted output values for a tabulated monotone
    function.  The tabulated kind has no closed form: it maps the ``m``
    perceptions it is given, in sorted order, onto its ``m`` values.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown scoring function kind {self.kind!r}")
        if self.kind == "linear" and self.params[0] < 0:
            raise ValueError("linear scoring functions need a nonnegative slope")
        if self.kind == "monotone" and np.any(np.diff(self.params) <= 0):
            raise ValueError("tabulated values must be strictly increasing")

    @property
    def clamps(self) -> bool:
        return self.kind in ("concave", "convex")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            a, b = self.params
            return a * x + b
        if self.kind == "concave":
            x = np.clip(x, LOW, HIGH)
            return sum(c * x ** (1.0 / p) for c, p in zip(self.params, CONCAVE_POWERS))
        if self.kind == "convex":
            x = np.clip(x, LOW, HIGH)
            return sum(c * x ** p for c, p in zip(self.params, CONVEX_POWERS))
        raise TypeError("tabulated monotone functions are evaluated with score()")

    def perceive(self, x):
        """Argument actually fed to the function for raw perception ``x``."""
        x = np.asarray(x, dtype=float)
        return np.clip(x, LOW, HIGH) if self.clamps else x

    def score(self, perceptions) -> np.ndarray:
        """Scores for one reviewer's perceptions (handles every kind)."""
        perceptions = np.asarray(perceptions, dtype=float)
        if self.kind != "monotone":
            return np.asarray(self(perceptions), dtype=float)
        values = np.asarray(self.params, dtype=float)
        if perceptions.shape[0] != values.shape[0]:
            raise DimensionMismatch(
                f"tabulated function holds {values.shape[0]} values, "
                f"asked to score {perceptions.shape[0]} items")
        order = np.argsort(perceptions, kind="stable")
        out = np.empty_like(values)
        out[order] = values
        # equal perceptions must map to equal scores
        sorted_p = perceptions[order]
        for r in range(1, len(order)):
            if sorted_p[r] == sorted_p[r - 1]:
                out[order[r]] = out[order[r - 1]]
        return out

    def slope_bound(self) -> float:
        """Largest derivative on ``[0, 10]`` (infinite for concave kinds)."""
        if self.kind == "linear":
            return float(self.params[0])
        if self.kind == "convex":
            return float(sum(c * p * HIGH ** (p - 1) for c, p in zip(self.params, CONVEX_POWERS)))
        return float("inf")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": [float(p) for p in self.params]}

    @classmethod
    def from_dict(cls, d) -> "ScoringFunction":
        return cls(d["kind"], tuple(float(p) for p in d["params"]))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_qualities(N: int, dist: QualityDistribution = QualityDistribution(), seed=0) -> np.ndarray:
    dist.validate()
    rng = _rng(seed)
    return np.clip(rng.normal(dist.mean, dist.std, size=int(N)), dist.low, dist.high)


def sample_scoring_function(kind: str, seed=0, n_points: int = None) -> ScoringFunction:
    """Draw a random scoring function of the given kind.

    ``n_points`` is required for ``"monotone"``: the number of items the
    function will have to score.
    """
    rng = _rng(seed)
    if kind == "linear":
        return ScoringFunction("linear", (float(rng.uniform(0.0, 2.0)), float(rng.normal(0.0, 2.0))))
    if kind == "concave":
        weights = tuple(float(rng.uniform(1.0, 10.0 / 10.0 ** (1.0 / p))) for p in CONCAVE_POWERS)
        return ScoringFunction("concave", weights)
    if kind == "convex":
        return ScoringFunction("convex", tuple(float(w) for w in rng.uniform(0.0, 1.0, size=3)))
    if kind == "monotone":
        if n_points is None or n_points < 1:
            raise ValueError("a tabulated monotone function needs n_points >= 1")
        while True:
            values = np.sort(rng.uniform(LOW, HIGH, size=int(n_points)))
            if np.all(np.diff(values) > 0):
                return ScoringFunction("monotone", tuple(float(v) for v in values))
    raise UnknownKind(f"unknown scoring function kind {kind!r}")


def generate_scores(qualities, assignment: Sequence, functions: Sequence[ScoringFunction],
                    noise: NoiseModel = NoiseModel(), return_perceptions: bool = False):
    """Score every (reviewer, item) pair of ``assignment``.

    Noise is drawn reviewer by reviewer, items in the order listed.  With
    ``return_perceptions`` the array of arguments actually passed to each
    ``f_j`` (aligned with ``instance.reviews``) is returned as well;
    ``perception - x*`` is the effective planted noise.
    """
    x_star = np.asarray(qualities, dtype=float)
    if len(assignment) != len(functions):
        raise DimensionMismatch(
            f"{len(assignment)} reviewers but {len(functions)} scoring functions")
    rng = np.random.default_rng(noise.seed)
    triples = []
    perceived_all = []
    for j, (items, f) in enumerate(zip(assignment, functions)):
        items = np.asarray(list(items), dtype=np.int64)
        if items.size and (items.min() < 0 or items.max() >= x_star.shape[0]):
            raise DimensionMismatch(f"reviewer {j} references an item outside [0, {x_star.shape[0]})")
        eps = rng.normal(0.0, noise.sigma, size=items.size) if noise.sigma > 0 else np.zeros(items.size)
        perceived = f.perceive(x_star[items] + eps)
        ys = f.score(perceived)
        triples.extend((j, int(i), float(y)) for i, y in zip(items, ys))
        perceived_all.append(perceived)
    instance = from_reviews(triples, x_star.shape[0], len(assignment), ground_truth=x_star)
    if return_perceptions:
        return instance, np.concatenate(perceived_all) if perceived_all else np.zeros(0)
    return instance


def mixture_kinds(M: int, proportions: dict, seed=0) -> list[str]:
    """Per-reviewer kinds in the given proportions, shuffled reproducibly."""
    rng = _rng(seed)
    kinds = sorted(proportions)
    for k in kinds:
        if k not in KINDS:
            raise UnknownKind(f"unknown scoring function kind {k!r}")
    total = sum(proportions.values())
    if total <= 0 or abs(total - 1.0) > 1e-9:
        raise ValueError(f"mixture proportions must sum to 1, got {total}")
    raw = np.array([proportions[k] * M for k in kinds])
    counts = np.floor(raw).astype(int)
    # largest remainders get the leftover reviewers
    for idx in np.argsort(-(raw - counts), kind="stable")[: M - counts.sum()]:
        counts[idx] += 1
    out = [k for k, c in zip(kinds, counts) for _ in range(c)]
    rng.shuffle(out)
    return out


@dataclass
class SyntheticData:
    instance: Instance
    functions: list
    kinds: list
    perceptions: np.ndarray
    assignment: list = field(default_factory=list)

    @property
    def planted_noise(self) -> np.ndarray:
        return self.perceptions - self.instance.ground_truth[self.instance.item_ids]
