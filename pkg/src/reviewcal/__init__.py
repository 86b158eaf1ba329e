"""Least-squares calibration of miscalibrated peer-review scores."""
from .calibrate import (
    CalibrationResult,
    HypothesisClass,
    Kind,
    average_baseline,
    build_program,
    calibrate,
    check_perfect_recovery,
    reconstruct_scoring_functions,
)
from .estimator import AverageCalibrator, LeastSquaresCalibrator
from .metrics import average_gap, average_l1, average_precision, ndcg, precision, rank, select_top
from .model import Instance, Review, from_reviews, read_reviews_csv
from .reviewgraph import build_review_graph, is_recovery_robust, prime_counterexample, repeat_union2

__version__ = "0.1.0"

__all__ = [
    "AverageCalibrator", "CalibrationResult", "HypothesisClass", "Instance", "Kind",
    "LeastSquaresCalibrator", "Review", "average_baseline", "average_gap", "average_l1",
    "average_precision", "build_program", "build_review_graph", "calibrate",
    "check_perfect_recovery", "from_reviews", "is_recovery_robust", "ndcg", "precision",
    "prime_counterexample", "rank", "read_reviews_csv", "reconstruct_scoring_functions",
    "repeat_union2", "select_top",
]
