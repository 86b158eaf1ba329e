"""Core review data types and CSV round-tripping.

An :class:`Instance` holds ``N`` items, ``M`` reviewers and the list of
(reviewer, item, score) triples.  Reviewer and item ids are dense integer
indices.  Ground-truth qualities may ride along for evaluation but nothing in
the calibration path reads them.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import (
    DuplicateReview,
    EmptyReviewer,
    IndexOutOfRange,
    ParseError,
    UnknownReviewer,
)

REVIEW_HEADER = ("reviewer_id", "item_id", "score")
TRUTH_HEADER = ("item_id", "quality")


class Review(NamedTuple):
    reviewer_id: int
    item_id: int
    score: float


@dataclass(frozen=True)
class ReviewerView:
    """One reviewer's reviews sorted by (score, item_id) ascending."""

    reviewer_id: int
    entries: tuple[tuple[int, float], ...]

    @property
    def items(self) -> np.ndarray:
        return np.array([i for i, _ in self.entries], dtype=np.int64)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=float)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class Instance:
    num_items: int
    num_reviewers: int
    reviews: tuple[Review, ...]
    ground_truth: np.ndarray | None = None
    _by_reviewer: dict = field(default=None, repr=False, compare=False)

    @property
    def reviewer_ids(self) -> np.ndarray:
        return np.array([r.reviewer_id for r in self.reviews], dtype=np.int64)

    @property
    def item_ids(self) -> np.ndarray:
        return np.array([r.item_id for r in self.reviews], dtype=np.int64)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.reviews], dtype=float)

    def assignment(self) -> list[frozenset]:
        """Item set ``I_j`` of every reviewer, indexed by reviewer id."""
        return [frozenset(i for i, _ in self._by_reviewer[j])
                for j in range(self.num_reviewers)]

    def reviews_per_item(self) -> np.ndarray:
        return np.bincount(self.item_ids, minlength=self.num_items)

    def with_ground_truth(self, ground_truth) -> "Instance":
        return from_reviews(self.reviews, self.num_items, self.num_reviewers,
                            ground_truth)

    def __len__(self):
        return len(self.reviews)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        same_truth = (
            (self.ground_truth is None and other.ground_truth is None)
            or (self.ground_truth is not None and other.ground_truth is not None
                and np.array_equal(self.ground_truth, other.ground_truth))
        )
        return (self.num_items == other.num_items
                and self.num_reviewers == other.num_reviewers
                and self.reviews == other.reviews and same_truth)

    __hash__ = None


def from_reviews(reviews: Iterable, N: int, M: int, ground_truth=None) -> Instance:
    """Validate raw review triples and build an :class:`Instance`.

    Raises ``IndexOutOfRange`` for ids outside ``[0, N)`` / ``[0, M)``,
    ``DuplicateReview`` when a reviewer scores the same item twice and
    ``EmptyReviewer`` when some reviewer in ``[0, M)`` has no review at all.
    """
    N = int(N)
    M = int(M)
    if N < 1 or M < 1:
        raise IndexOutOfRange(f"need N >= 1 and M >= 1, got N={N}, M={M}")
    checked = []
    seen = set()
    by_reviewer: dict[int, list] = {j: [] for j in range(M)}
    for raw in reviews:
        j, i, s = int(raw[0]), int(raw[1]), float(raw[2])
        if not 0 <= j < M:
            raise IndexOutOfRange(f"reviewer_id {j} outside [0, {M})")
        if not 0 <= i < N:
            raise IndexOutOfRange(f"item_id {i} outside [0, {N})")
        if not math.isfinite(s):
            raise ValueError(f"non-finite score {s!r} for reviewer {j}, item {i}")
        if (j, i) in seen:
            raise DuplicateReview(f"reviewer {j} reviewed item {i} more than once")
        seen.add((j, i))
        checked.append(Review(j, i, s))
        by_reviewer[j].append((i, s))
    empty = [j for j, lst in by_reviewer.items() if not lst]
    if empty:
        raise EmptyReviewer(f"reviewers without reviews: {empty[:10]}")
    for j in by_reviewer:
        by_reviewer[j] = tuple(sorted(by_reviewer[j], key=lambda e: (e[1], e[0])))

    truth = None
    if ground_truth is not None:
        truth = np.array(ground_truth, dtype=float).reshape(-1)
        if truth.shape[0] != N:
            raise IndexOutOfRange(
                f"ground truth has {truth.shape[0]} entries, expected {N}")
        truth.setflags(write=False)
    return Instance(N, M, tuple(checked), truth, by_reviewer)


def reviewer_view(instance: Instance, j: int) -> ReviewerView:
    """Reviewer ``j``'s reviews ordered by score, ties broken by item id."""
    try:
        entries = instance._by_reviewer[int(j)]
    except KeyError:
        raise UnknownReviewer(f"no reviewer {j}") from None
    return ReviewerView(int(j), entries)


def reviewer_views(instance: Instance) -> list[ReviewerView]:
    return [reviewer_view(instance, j) for j in range(instance.num_reviewers)]


def from_assignment(assignment: Sequence[Iterable[int]], scores, N: int,
                    ground_truth=None) -> Instance:
    """Build an instance from per-reviewer item lists and matching score lists."""
    triples = []
    for j, (items, ys) in enumerate(zip(assignment, scores)):
        triples.extend((j, i, y) for i, y in zip(items, ys))
    return from_reviews(triples, N, len(assignment), ground_truth)


# ---------------------------------------------------------------------------
# CSV formats


def write_reviews_csv(instance: Instance, path_or_buf) -> None:
    rows = [(r.reviewer_id, r.item_id, repr(float(r.score))) for r in instance.reviews]
    _write_csv(path_or_buf, REVIEW_HEADER, rows)


def write_ground_truth_csv(instance: Instance, path_or_buf) -> None:
    if instance.ground_truth is None:
        raise ValueError("instance carries no ground truth")
    rows = [(i, repr(float(q))) for i, q in enumerate(instance.ground_truth)]
    _write_csv(path_or_buf, TRUTH_HEADER, rows)


def _write_csv(path_or_buf, header, rows):
    if isinstance(path_or_buf, io.TextIOBase) or hasattr(path_or_buf, "write"):
        writer = csv.writer(path_or_buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(path_or_buf, "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, header, rows)


def _read_rows(path_or_buf, header):
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if tuple(c.strip() for c in first) != header:
        raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}",
                         line=1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        yield lineno, [c.strip() for c in row]


def read_review_rows(path_or_buf) -> list[tuple[str, str, float]]:
    """Parse a review CSV keeping raw (string) ids; scores become floats."""
    out = []
    for lineno, (j, i, s) in _read_rows(path_or_buf, REVIEW_HEADER):
        if not j or not i:
            raise ParseError("empty id field", line=lineno)
        try:
            score = float(s)
        except ValueError:
            raise ParseError(f"score {s!r} is not a number", line=lineno) from None
        if not math.isfinite(score):
            raise ParseError(f"score {s!r} is not finite", line=lineno)
        out.append((j, i, score))
    return out


def read_truth_rows(path_or_buf) -> list[tuple[str, float]]:
    out = []
    for lineno, (i, q) in _read_rows(path_or_buf, TRUTH_HEADER):
        try:
            out.append((i, float(q)))
        except ValueError:
            raise ParseError(f"quality {q!r} is not a number", line=lineno) from None
    return out


def _sort_ids(ids):
    # numeric ids keep numeric order; anything else sorts as text
    try:
        return sorted(ids, key=lambda s: (0, int(s), s))
    except ValueError:
        return sorted(ids)


def read_reviews_csv(path_or_buf, truth_path_or_buf=None):
    """Load reviews (and optional ground truth) re-indexed to dense ids.

    Returns ``(instance, reviewer_labels, item_labels)`` where the label lists
    map dense indices back to the ids found in the files.
    """
    rows = read_review_rows(path_or_buf)
    truth_rows = read_truth_rows(truth_path_or_buf) if truth_path_or_buf is not None else []
    reviewer_labels = _sort_ids({j for j, _, _ in rows})
    item_labels = _sort_ids({i for _, i, _ in rows} | {i for i, _ in truth_rows})
    rmap = {lab: k for k, lab in enumerate(reviewer_labels)}
    imap = {lab: k for k, lab in enumerate(item_labels)}
    triples = [(rmap[j], imap[i], s) for j, i, s in rows]
    truth = None
    if truth_path_or_buf is not None:
        truth = np.full(len(item_labels), np.nan)
        for i, q in truth_rows:
            truth[imap[i]] = q
        if np.isnan(truth).any():
            missing = [item_labels[k] for k in np.flatnonzero(np.isnan(truth))[:5]]
            raise ParseError(f"ground truth missing for items {missing}")
    inst = from_reviews(triples, len(item_labels), len(reviewer_labels), truth)
    return inst, reviewer_labels, item_labels
