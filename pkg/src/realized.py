"""
Realized (ground-truth) metrics and calibration diagnostics
Computes confusion matrices, counting metrics, AUC, RBS and ACE on labelled score sets
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from sklearn.metrics import roc_auc_score

from src.scores import ScoreSet
from src.utils import UNDEFINED

logger = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "balanced_accuracy", "recall", "specificity", "ppv", "npv", "f1", "auc")
COUNTING_METRICS = METRIC_NAMES[:-1]
CM_SOURCES = ("realized", "cbpe", "cm_atc", "cm_doc", "naive_atc", "naive_doc")
AUC_METHODS = ("rank_exact", "quantile_100")
DEFAULT_ACE_BINS = 15
ROC_THRESHOLD_COUNT = 100
# slack for float round-off when checking [0, 1] ranges
_RANGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ConfusionMatrix:
    """Confusion matrix; integral when realized, fractional when estimated"""

    tp: float
    fp: float
    tn: float
    fn: float
    source: str = "realized"

    def __post_init__(self):
        if self.source not in CM_SOURCES:
            raise ValueError(f"Unknown confusion matrix source: {self.source}")
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"Confusion matrix entry {name}={value!r} must be a non-negative number")

    @property
    def n(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def n_pos(self) -> float:
        """Number of positive predictions"""
        return self.tp + self.fp

    @property
    def n_neg(self) -> float:
        """Number of negative predictions"""
        return self.tn + self.fn

    def to_dict(self) -> Dict[str, float]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class MetricReport:
    """
    Metric name to value map; None marks an undefined metric

    Only metrics that were computed are present. Every defined value lies in [0, 1].
    """

    values: Mapping[str, Optional[float]] = field(default_factory=dict)
    source: str = "realized"

    def __post_init__(self):
        for name, value in self.values.items():
            if name not in METRIC_NAMES:
                raise ValueError(f"Unknown metric: {name}")
            if value is not None and not (-_RANGE_TOLERANCE <= value <= 1.0 + _RANGE_TOLERANCE):
                raise ValueError(f"Metric {name}={value!r} outside [0, 1]")

    def __getitem__(self, name: str) -> Optional[float]:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def get(self, name: str) -> Optional[float]:
        return self.values.get(name)

    def is_defined(self, name: str) -> bool:
        return self.values.get(name) is not None

    @property
    def undefined_metrics(self) -> List[str]:
        return [name for name in METRIC_NAMES if name in self.values and self.values[name] is None]

    def with_metric(self, name: str, value: Optional[float]) -> "MetricReport":
        """Copy with one metric added or replaced"""
        values = dict(self.values)
        values[name] = value
        return MetricReport(values, self.source)

    def to_dict(self) -> Dict[str, object]:
        """JSON object; undefined values become the literal 'undefined'"""
        return {name: (UNDEFINED if self.values[name] is None else self.values[name])
                for name in METRIC_NAMES if name in self.values}

    def to_row(self) -> Dict[str, object]:
        """Flat CSV row with the source tag first"""
        row: Dict[str, object] = {"source": self.source}
        row.update(self.to_dict())
        return row

    @classmethod
    def average(cls, reports: Sequence["MetricReport"], source: Optional[str] = None) -> "MetricReport":
        """
        Per-metric mean over defined values

        Args:
            reports: Reports to average (fixed order gives a fixed result)
            source: Source tag of the result, defaults to the first report's

        Returns:
            MetricReport whose metrics are undefined where no report defined them
        """
        if not reports:
            raise ValueError("Cannot average an empty collection of reports")
        names = [name for name in METRIC_NAMES if any(name in report for report in reports)]
        values: Dict[str, Optional[float]] = {}
        for name in names:
            defined = [report.values[name] for report in reports if report.get(name) is not None]
            values[name] = float(np.mean(defined)) if defined else None
        return cls(values, source or reports[0].source)


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    if denominator == 0:
        return None
    return min(1.0, max(0.0, numerator / denominator))


def realized_confusion_matrix(score_set: ScoreSet) -> ConfusionMatrix:
    """
    Count outcomes of thresholding s >= t against the labels

    Args:
        score_set: Fully labelled score set

    Returns:
        Integral ConfusionMatrix with source 'realized'

    Raises:
        ValueError: If the set is empty or not fully labelled
    """
    score_set.require_labels("a realized confusion matrix")
    predicted = score_set.scores >= score_set.threshold
    actual = score_set.labels == 1
    return ConfusionMatrix(
        tp=float(np.sum(predicted & actual)),
        fp=float(np.sum(predicted & ~actual)),
        tn=float(np.sum(~predicted & ~actual)),
        fn=float(np.sum(~predicted & actual)),
        source="realized",
    )


def counting_metrics(cm: ConfusionMatrix) -> MetricReport:
    """
    Derive counting metrics from a confusion matrix

    Zero denominators give undefined (None) metrics, never 0.

    Args:
        cm: Realized or estimated confusion matrix

    Returns:
        MetricReport with accuracy, balanced_accuracy, recall, specificity, ppv, npv and f1
    """
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    ppv = _ratio(cm.tp, cm.tp + cm.fp)
    npv = _ratio(cm.tn, cm.tn + cm.fn)

    balanced_accuracy = None
    if recall is not None and specificity is not None:
        balanced_accuracy = (recall + specificity) / 2.0

    f1 = None
    if ppv is not None and recall is not None and ppv + recall > 0:
        f1 = min(1.0, 2.0 * ppv * recall / (ppv + recall))

    return MetricReport(
        {
            "accuracy": _ratio(cm.tp + cm.tn, cm.n),
            "balanced_accuracy": balanced_accuracy,
            "recall": recall,
            "specificity": specificity,
            "ppv": ppv,
            "npv": npv,
            "f1": f1,
        },
        source=cm.source,
    )


def quantile_thresholds(scores: np.ndarray, count: int = ROC_THRESHOLD_COUNT) -> np.ndarray:
    """Decision thresholds at the j/(count+1) quantiles of the scores, j = 1..count"""
    levels = np.arange(1, count + 1) / (count + 1)
    return np.quantile(np.asarray(scores, dtype=float), levels)


def integrate_roc(fpr: Sequence[float], tpr: Sequence[float]) -> float:
    """
    Area under ROC points

    Appends (0, 0) and (1, 1), sorts by FPR with ties broken by TPR and applies the
    trapezoidal rule. Monotonicity is not enforced.

    Args:
        fpr: False-positive rates
        tpr: True-positive rates aligned with fpr

    Returns:
        Area in [0, 1]
    """
    x = np.concatenate([[0.0], np.asarray(fpr, dtype=float), [1.0]])
    y = np.concatenate([[0.0], np.asarray(tpr, dtype=float), [1.0]])
    order = np.lexsort((y, x))
    area = float(trapezoid(y[order], x[order]))
    return min(1.0, max(0.0, area))


def roc_points(scores: np.ndarray, labels: np.ndarray, thresholds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Realized (FPR, TPR) at each threshold, predicting positive when s >= threshold

    Args:
        scores: Raw scores
        labels: Binary labels with both classes present
        thresholds: Decision thresholds

    Returns:
        Tuple of FPR and TPR arrays aligned with thresholds
    """
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(labels) == 1
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    pos_sorted = np.sort(scores[positive])
    neg_sorted = np.sort(scores[~positive])
    # counts of scores >= threshold via binary search
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    return fp / n_neg, tp / n_pos


def realized_auc(score_set: ScoreSet, method: str = "rank_exact") -> float:
    """
    Area under the ROC curve on a labelled set

    Args:
        score_set: Fully labelled score set
        method: 'rank_exact' (Mann-Whitney, ties count half) or 'quantile_100'
            (trapezoid over 100 score-quantile thresholds)

    Returns:
        AUC in [0, 1]

    Raises:
        ValueError: If only one class is present or the method is unknown
    """
    if method not in AUC_METHODS:
        raise ValueError(f"Unknown AUC method: {method}")
    score_set.require_labels("AUC")
    labels = score_set.labels
    if np.all(labels == 1) or np.all(labels == 0):
        raise ValueError("AUC undefined: score set contains a single class")

    if method == "rank_exact":
        return float(roc_auc_score(labels, score_set.scores))

    thresholds = quantile_thresholds(score_set.scores)
    fpr, tpr = roc_points(score_set.scores, labels, thresholds)
    return integrate_roc(fpr, tpr)


def root_brier_score(score_set: ScoreSet) -> float:
    """
    Root Brier Score: square root of the mean squared gap between score and label

    Args:
        score_set: Fully labelled score set

    Returns:
        RBS in [0, 1]
    """
    score_set.require_labels("the root Brier score")
    return float(np.sqrt(np.mean((score_set.scores - score_set.labels) ** 2)))


def adaptive_calibration_error(score_set: ScoreSet, bins: int = DEFAULT_ACE_BINS) -> float:
    """
    Adaptive Calibration Error over equal-frequency bins of the raw score

    Records are sorted by raw score and split into `bins` groups whose sizes differ by
    at most one, the larger groups being the lowest-score bins.

    Args:
        score_set: Fully labelled score set
        bins: Number of bins

    Returns:
        Mean absolute gap between mean score and positive fraction per bin

    Raises:
        ValueError: If bins < 1 or the set has fewer records than bins
    """
    score_set.require_labels("the adaptive calibration error")
    if bins < 1:
        raise ValueError(f"ACE needs at least one bin, got {bins}")
    if len(score_set) < bins:
        raise ValueError(f"ACE needs at least {bins} records, got {len(score_set)}")

    order = np.argsort(score_set.scores, kind="stable")
    gaps = [
        abs(float(np.mean(score_set.scores[chunk])) - float(np.mean(score_set.labels[chunk] == 1)))
        for chunk in np.array_split(order, bins)
    ]
    return float(np.mean(gaps))


def calibration_by_group(score_set: ScoreSet, bins: int = DEFAULT_ACE_BINS) -> Dict[str, Dict[str, Optional[float]]]:
    """
    RBS and ACE per group tag

    Args:
        score_set: Fully labelled score set with group tags
        bins: ACE bin count; groups with fewer records report ACE undefined

    Returns:
        Mapping group -> {'n', 'rbs', 'ace'}, sorted by group name
    """
    score_set.require_labels("group calibration")
    result: Dict[str, Dict[str, Optional[float]]] = {}
    tags = sorted({str(tag) for tag in score_set.groups if tag is not None})
    for tag in tags:
        members = score_set.select_group(tag)
        ace = adaptive_calibration_error(members, bins) if len(members) >= bins else None
        result[tag] = {"n": float(len(members)), "rbs": root_brier_score(members), "ace": ace}
    return result
