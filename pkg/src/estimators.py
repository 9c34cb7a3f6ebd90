"""
Label-free performance estimators
CBPE, ATC and DoC, their confusion-matrix variants CM-ATC and CM-DoC, the naive
metric-substitution baselines and ROC-based AUC estimation
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.realized import (
    COUNTING_METRICS,
    METRIC_NAMES,
    ConfusionMatrix,
    ROC_THRESHOLD_COUNT,
    MetricReport,
    counting_metrics,
    integrate_roc,
    quantile_thresholds,
    realized_confusion_matrix,
)
from src.scores import PredictionSplit, ScoreSet, split_predictions, stable_mean
from src.utils import ESTIMATION_METHODS, METHOD_ALIASES, round_half_up

logger = logging.getLogger(__name__)

AUC_METHODS = ("cbpe", "cm_atc", "cm_doc")
NAIVE_METHODS = ("naive_atc", "naive_doc")
ATC_SENTINEL = -1.0
AUC_SKIPPED = "auc_thresholds_skipped"
# key of EstimationResult.errors for failures that affect the whole method
METHOD_ERROR = "*"


class EstimationError(ValueError):
    """An estimator precondition does not hold"""


@dataclass(frozen=True)
class AtcThreshold:
    """
    Learned ATC threshold

    Attributes:
        value: Confidence threshold; -1 means every confidence passes
        side: Which prediction set it was learned on (global, positive, negative)
        target: Validation metric the fraction-above was matched to
        n: Size of the learning set
        ties: Learning-set values equal to the threshold besides the order statistic itself
        achieved: Fraction of the learning set strictly above the threshold
    """

    value: float
    side: str = "global"
    target: float = 0.0
    n: int = 0
    ties: int = 0
    achieved: float = 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "value": self.value,
            "side": self.side,
            "target": self.target,
            "n": self.n,
            "ties": self.ties,
            "achieved": self.achieved,
        }


@dataclass(frozen=True)
class DocOffset:
    """Difference of average confidences between validation and test"""

    delta: float
    side: str
    base_metric: float

    @property
    def raw(self) -> float:
        """Re-centred metric before clipping"""
        return self.base_metric - self.delta

    @property
    def estimate(self) -> float:
        return min(1.0, max(0.0, self.raw))

    @property
    def clipped(self) -> bool:
        return not 0.0 <= self.raw <= 1.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "delta": self.delta,
            "side": self.side,
            "base_metric": self.base_metric,
            "estimate": self.estimate,
            "clipped": self.clipped,
        }


@dataclass(frozen=True)
class EstimationResult:
    """
    Output of one estimation method on one validation/test pair

    When `cm` is present, every counting metric in `metrics` equals counting_metrics(cm).
    """

    method: str
    cm: Optional[ConfusionMatrix]
    metrics: MetricReport
    clipped: Mapping[str, bool] = field(default_factory=dict)
    unsupported: Tuple[str, ...] = ()
    errors: Mapping[str, str] = field(default_factory=dict)
    details: Mapping[str, object] = field(default_factory=dict)

    def estimate(self, metric: str) -> Optional[float]:
        return self.metrics.get(metric)

    def status(self, metric: str) -> str:
        """ok, undefined, unsupported or error"""
        if metric in self.unsupported:
            return "unsupported"
        if (metric in self.errors or METHOD_ERROR in self.errors) and not self.metrics.is_defined(metric):
            return "error"
        return "ok" if self.metrics.is_defined(metric) else "undefined"

    def message(self, metric: str) -> str:
        if metric in self.unsupported:
            return f"{self.method} does not estimate {metric}"
        message = self.errors.get(metric) or self.errors.get(METHOD_ERROR, "")
        skipped = self.details.get(AUC_SKIPPED) if metric == "auc" else None
        if not message and skipped:
            message = f"{skipped} of {ROC_THRESHOLD_COUNT} ROC thresholds skipped"
        return message

    def to_rows(self, metrics: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
        """One row per metric: method, metric, estimate, status, clipped, message"""
        names = metrics or [name for name in METRIC_NAMES if name in self.metrics or name in self.unsupported]
        return [
            {
                "method": self.method,
                "metric": name,
                "estimate": self.metrics.get(name),
                "status": self.status(name),
                "clipped": bool(self.clipped.get(name, False)),
                "message": self.message(name),
            }
            for name in names
        ]

    def to_dict(self) -> Dict[str, object]:
        return {
            "method": self.method,
            "confusion_matrix": self.cm.to_dict() if self.cm is not None else None,
            "metrics": self.metrics.to_dict(),
            "clipped": {name: flag for name, flag in sorted(self.clipped.items()) if flag},
            "unsupported": list(self.unsupported),
            "errors": dict(sorted(self.errors.items())),
            "details": dict(self.details),
        }


def _require_non_empty(values: Iterable[float], what: str) -> np.ndarray:
    values = np.asarray(values if isinstance(values, np.ndarray) else list(values), dtype=float)
    if values.size == 0:
        raise EstimationError(f"{what} is empty")
    return values


def cbpe_accuracy(test_split: PredictionSplit) -> float:
    """
    CBPE accuracy: the average predicted-class confidence

    Args:
        test_split: Test predictions

    Returns:
        Mean confidence over positive and negative predictions pooled

    Raises:
        EstimationError: If the split is empty
    """
    return stable_mean(_require_non_empty(test_split.confidences, "test set"))


def cbpe_pv(test_split: PredictionSplit) -> Tuple[Optional[float], Optional[float]]:
    """
    CBPE predictive values: the average confidence of each prediction set

    Args:
        test_split: Test predictions

    Returns:
        Tuple (ppv_hat, npv_hat); a side without predictions gives None
    """
    ppv = stable_mean(test_split.positives) if test_split.n_pos else None
    npv = stable_mean(test_split.negatives) if test_split.n_neg else None
    return ppv, npv


def cm_from_pv(
    n_pos: int, n_neg: int, ppv_hat: Optional[float], npv_hat: Optional[float], source: str
) -> ConfusionMatrix:
    """
    Confusion matrix from prediction counts and estimated predictive values

    tp = n_pos * ppv, fp = n_pos - tp, tn = n_neg * npv, fn = n_neg - tn. A predictive value
    may be None only when its prediction count is zero.

    Args:
        n_pos: Number of positive predictions
        n_neg: Number of negative predictions
        ppv_hat: Estimated PPV in [0, 1]
        npv_hat: Estimated NPV in [0, 1]
        source: Method tag

    Returns:
        Fractional ConfusionMatrix

    Raises:
        EstimationError: If a predictive value is outside [0, 1] or missing for a non-empty side
    """

    def _side(count: int, value: Optional[float], name: str) -> Tuple[float, float]:
        if count == 0:
            return 0.0, 0.0
        if value is None:
            raise EstimationError(f"{name} estimate undefined with {count} predictions on that side")
        if not 0.0 <= value <= 1.0:
            raise EstimationError(f"{name} estimate {value!r} outside [0, 1]; clip before building the matrix")
        correct = count * value
        return correct, count - correct

    tp, fp = _side(n_pos, ppv_hat, "PPV")
    tn, fn = _side(n_neg, npv_hat, "NPV")
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn, source=source)


def learn_atc_threshold(confidences: Iterable[float], target: float, side: str = "global") -> AtcThreshold:
    """
    Learn the threshold whose fraction-above matches a target value

    With the values sorted ascending and k = round(n * (1 - target)), the threshold is the
    k-th smallest value, or -1 when k = 0. Membership downstream is strict (s > value).

    Args:
        confidences: Learning-set confidences
        target: Validation metric to match, in [0, 1]
        side: Prediction set the threshold belongs to

    Returns:
        AtcThreshold with the achieved fraction and tie count

    Raises:
        EstimationError: If confidences are empty or target is outside [0, 1]
    """
    values = np.sort(_require_non_empty(confidences, f"{side} learning set"))
    if not 0.0 <= target <= 1.0:
        raise EstimationError(f"ATC target {target!r} outside [0, 1]")
    n = values.size
    k = min(n, max(0, round_half_up(n * (1.0 - target))))
    if k == 0:
        value, ties = ATC_SENTINEL, 0
    else:
        value = float(values[k - 1])
        ties = int(np.sum(values == value)) - 1
    achieved = float(np.mean(values > value))
    if ties:
        logger.debug(f"ATC threshold {value:.6g} ({side}) has {ties} tied values; achieved {achieved:.6g} vs {target:.6g}")
    return AtcThreshold(value=value, side=side, target=float(target), n=n, ties=ties, achieved=achieved)


def atc_estimate(test_confidences: Iterable[float], th: AtcThreshold) -> float:
    """
    Fraction of test confidences strictly above the learned threshold

    Raises:
        EstimationError: If the test collection is empty
    """
    values = _require_non_empty(test_confidences, f"{th.side} test set")
    return float(np.mean(values > th.value))


def doc_offset(
    base_metric: float, val_confidences: Iterable[float], test_confidences: Iterable[float], side: str = "global"
) -> DocOffset:
    """
    Offset between mean validation and mean test confidence

    Args:
        base_metric: Validation value of the metric being re-centred
        val_confidences: Validation confidences
        test_confidences: Test confidences
        side: Prediction set the offset belongs to

    Returns:
        DocOffset exposing the clipped estimate and its clipping flag

    Raises:
        EstimationError: If either collection is empty or base_metric is outside [0, 1]
    """
    if not 0.0 <= base_metric <= 1.0:
        raise EstimationError(f"DoC base metric {base_metric!r} outside [0, 1]")
    val = _require_non_empty(val_confidences, f"{side} validation set")
    test = _require_non_empty(test_confidences, f"{side} test set")
    return DocOffset(delta=stable_mean(val) - stable_mean(test), side=side, base_metric=float(base_metric))


def doc_estimate(base_metric: float, val_confidences: Iterable[float], test_confidences: Iterable[float]) -> float:
    """DoC estimate: base metric minus the confidence offset, clipped to [0, 1]"""
    return doc_offset(base_metric, val_confidences, test_confidences).estimate


def _validation_pv(val_split: PredictionSplit) -> Tuple[float, float]:
    if not val_split.labelled:
        raise EstimationError("Validation set must be labelled")
    ppv, npv = val_split.realized_ppv(), val_split.realized_npv()
    if ppv is None:
        raise EstimationError("Validation PPV undefined: no positive predictions on the validation set")
    if npv is None:
        raise EstimationError("Validation NPV undefined: no negative predictions on the validation set")
    return ppv, npv


# Each builder returns (confusion matrix, clipped flags, details)
_CmParts = Tuple[ConfusionMatrix, Dict[str, bool], Dict[str, object]]


def _cbpe_parts(val_split: Optional[PredictionSplit], test_split: PredictionSplit) -> _CmParts:
    if test_split.n == 0:
        raise EstimationError("test set is empty")
    ppv, npv = cbpe_pv(test_split)
    cm = cm_from_pv(test_split.n_pos, test_split.n_neg, ppv, npv, "cbpe")
    return cm, {}, {"ppv_hat": ppv, "npv_hat": npv}


def _cm_atc_parts(val_split: PredictionSplit, test_split: PredictionSplit) -> _CmParts:
    ppv_val, npv_val = _validation_pv(val_split)
    t_pos = learn_atc_threshold(val_split.positives, ppv_val, side="positive")
    t_neg = learn_atc_threshold(val_split.negatives, npv_val, side="negative")
    ppv = atc_estimate(test_split.positives, t_pos) if test_split.n_pos else None
    npv = atc_estimate(test_split.negatives, t_neg) if test_split.n_neg else None
    cm = cm_from_pv(test_split.n_pos, test_split.n_neg, ppv, npv, "cm_atc")
    return cm, {}, {"threshold_positive": t_pos.to_dict(), "threshold_negative": t_neg.to_dict()}


def _cm_doc_parts(val_split: PredictionSplit, test_split: PredictionSplit) -> _CmParts:
    ppv_val, npv_val = _validation_pv(val_split)
    if test_split.n_pos == 0:
        raise EstimationError("CM-DoC needs positive predictions on the test set")
    if test_split.n_neg == 0:
        raise EstimationError("CM-DoC needs negative predictions on the test set")
    pos = doc_offset(ppv_val, val_split.positives, test_split.positives, side="positive")
    neg = doc_offset(npv_val, val_split.negatives, test_split.negatives, side="negative")
    cm = cm_from_pv(test_split.n_pos, test_split.n_neg, pos.estimate, neg.estimate, "cm_doc")
    clipped = {"ppv": pos.clipped, "npv": neg.clipped}
    return cm, clipped, {"offset_positive": pos.to_dict(), "offset_negative": neg.to_dict()}


_CM_BUILDERS: Dict[str, Callable[[Optional[PredictionSplit], PredictionSplit], _CmParts]] = {
    "cbpe": _cbpe_parts,
    "cm_atc": _cm_atc_parts,
    "cm_doc": _cm_doc_parts,
}


def _cm_result(method: str, val_split: Optional[PredictionSplit], test_split: PredictionSplit) -> EstimationResult:
    cm, clipped, details = _CM_BUILDERS[method](val_split, test_split)
    for name, flag in clipped.items():
        if flag:
            logger.warning(f"{method} {name} estimate clipped to [0, 1]")
    return EstimationResult(method=method, cm=cm, metrics=counting_metrics(cm), clipped=clipped, details=details)


def cbpe(test_split: PredictionSplit) -> EstimationResult:
    """CBPE confusion matrix and counting metrics from the test confidences alone"""
    return _cm_result("cbpe", None, test_split)


def cm_atc(val_split: PredictionSplit, test_split: PredictionSplit) -> EstimationResult:
    """
    CM-ATC: per-side ATC thresholds matched to validation PPV and NPV

    Args:
        val_split: Labelled validation predictions
        test_split: Test predictions

    Returns:
        EstimationResult with the estimated confusion matrix and its counting metrics

    Raises:
        EstimationError: If the validation set has an empty prediction side
    """
    return _cm_result("cm_atc", val_split, test_split)


def cm_doc(val_split: PredictionSplit, test_split: PredictionSplit) -> EstimationResult:
    """
    CM-DoC: validation PPV and NPV shifted by the per-side confidence offsets

    Args:
        val_split: Labelled validation predictions
        test_split: Test predictions

    Returns:
        EstimationResult; clipped flags mark PPV/NPV estimates that left [0, 1]

    Raises:
        EstimationError: If any of the four prediction sets is empty
    """
    return _cm_result("cm_doc", val_split, test_split)


def _canonical_method(method: str) -> str:
    method = METHOD_ALIASES.get(method, method)
    if method not in ESTIMATION_METHODS:
        raise EstimationError(f"Unknown estimation method: {method}")
    return method


def _naive_value(
    method: str, val_value: float, val_split: PredictionSplit, test_split: PredictionSplit
) -> Tuple[float, bool, Dict[str, object]]:
    if method == "naive_atc":
        th = learn_atc_threshold(val_split.confidences, val_value)
        return atc_estimate(test_split.confidences, th), False, th.to_dict()
    offset = doc_offset(val_value, val_split.confidences, test_split.confidences)
    if offset.clipped:
        logger.warning(f"{method} estimate {offset.raw:.6g} clipped to [0, 1]")
    return offset.estimate, offset.clipped, offset.to_dict()


def naive_estimate(method: str, metric: str, val: ScoreSet, test: ScoreSet) -> float:
    """
    Naive baseline: ATC or DoC with accuracy replaced by another counting metric

    Args:
        method: 'atc', 'doc', 'naive_atc' or 'naive_doc'
        metric: Counting metric name
        val: Labelled validation set
        test: Test set

    Returns:
        Estimated metric value

    Raises:
        EstimationError: If the metric is not a counting metric or undefined on validation
    """
    method = _canonical_method(method)
    if method not in NAIVE_METHODS:
        raise EstimationError(f"{method} is not a naive baseline")
    if metric not in COUNTING_METRICS:
        raise EstimationError(f"Naive baselines estimate counting metrics only, not {metric}")
    val_value = counting_metrics(realized_confusion_matrix(val)).get(metric)
    if val_value is None:
        raise EstimationError(f"Validation {metric} is undefined")
    value, _, _ = _naive_value(method, val_value, split_predictions(val), split_predictions(test))
    return value


def _naive_result(method: str, val: ScoreSet, test: ScoreSet, metrics: Sequence[str]) -> EstimationResult:
    val_report = counting_metrics(realized_confusion_matrix(val))
    val_split, test_split = split_predictions(val), split_predictions(test)
    values: Dict[str, Optional[float]] = {}
    clipped: Dict[str, bool] = {}
    errors: Dict[str, str] = {}
    details: Dict[str, object] = {}
    for metric in metrics:
        if metric not in COUNTING_METRICS:
            continue
        val_value = val_report.get(metric)
        if val_value is None:
            values[metric] = None
            errors[metric] = f"Validation {metric} is undefined"
            continue
        values[metric], clipped[metric], details[metric] = _naive_value(method, val_value, val_split, test_split)
    unsupported = tuple(metric for metric in metrics if metric not in COUNTING_METRICS)
    return EstimationResult(
        method=method,
        cm=None,
        metrics=MetricReport(values, source=method),
        clipped=clipped,
        unsupported=unsupported,
        errors=errors,
        details=details,
    )


class _ThresholdSplitter:
    """Scores sorted once, so the split at any threshold is a pair of slices"""

    def __init__(self, score_set: ScoreSet):
        order = np.argsort(score_set.scores, kind="stable")
        self.scores = score_set.scores[order]
        self.labels = score_set.labels[order] if score_set.labelled else None

    def split(self, threshold: float) -> PredictionSplit:
        # s >= t is a positive prediction; both sides come out ascending
        cut = int(np.searchsorted(self.scores, threshold, side="left"))
        labels = self.labels
        return PredictionSplit(
            positives=self.scores[cut:],
            negatives=1.0 - self.scores[:cut][::-1],
            threshold=float(threshold),
            labels_pos=None if labels is None else labels[cut:],
            labels_neg=None if labels is None else labels[:cut][::-1],
        )


def _roc_auc(method: str, val: ScoreSet, test: ScoreSet) -> Tuple[float, int]:
    method = _canonical_method(method)
    if method not in AUC_METHODS:
        raise EstimationError(f"AUC estimate unsupported for {method}")
    if len(test) == 0:
        raise EstimationError("test set is empty")

    builder = _CM_BUILDERS[method]
    test_sorted = _ThresholdSplitter(test)
    val_sorted = _ThresholdSplitter(val) if method != "cbpe" else None
    fpr: List[float] = []
    tpr: List[float] = []
    skipped = 0
    for threshold in quantile_thresholds(test.scores):
        val_split = val_sorted.split(threshold) if val_sorted is not None else None
        try:
            cm, _, _ = builder(val_split, test_sorted.split(threshold))
        except EstimationError as e:
            logger.debug(f"{method}: ROC threshold {threshold:.6g} skipped ({e})")
            skipped += 1
            continue
        if cm.tp + cm.fn == 0 or cm.fp + cm.tn == 0:
            logger.debug(f"{method}: ROC threshold {threshold:.6g} skipped (rate undefined)")
            skipped += 1
            continue
        tpr.append(cm.tp / (cm.tp + cm.fn))
        fpr.append(cm.fp / (cm.fp + cm.tn))

    if len(fpr) < 2:
        raise EstimationError(f"AUC estimate unsupported: only {len(fpr)} valid ROC points for {method}")
    if skipped:
        logger.warning(f"{method}: {skipped} of {skipped + len(fpr)} ROC thresholds skipped")
    return integrate_roc(fpr, tpr), skipped


def estimate_auc(method: str, val: ScoreSet, test: ScoreSet) -> float:
    """
    Estimate AUC by integrating an estimated ROC curve

    Thresholds are the j/101 quantiles (j = 1..100) of the test raw scores. At each threshold
    both sets are re-split and the method re-run; TPR = tp/(tp+fn) and FPR = fp/(fp+tn) come from
    the estimated confusion matrix. Thresholds where the method fails or a rate is undefined
    are skipped.

    Args:
        method: cbpe, cm_atc or cm_doc
        val: Labelled validation set
        test: Test set

    Returns:
        Estimated AUC in [0, 1]

    Raises:
        EstimationError: If the method has no AUC estimate or fewer than 2 ROC points are valid
    """
    return _roc_auc(method, val, test)[0]


def estimate_all(
    methods: Iterable[str],
    val: ScoreSet,
    test: ScoreSet,
    metrics: Optional[Sequence[str]] = None,
    include_auc: bool = True,
) -> List[EstimationResult]:
    """
    Run every requested method for every requested metric

    Failures never abort the run; they are recorded per method (key '*') or per metric in
    EstimationResult.errors.

    Args:
        methods: Method tags (aliases atc/doc accepted), run in canonical order
        val: Labelled validation set
        test: Test set
        metrics: Metric names, all of them by default
        include_auc: Whether to estimate AUC for the methods that support it

    Returns:
        One EstimationResult per method
    """
    val.require_labels("label-free estimation (validation set)")
    requested = {_canonical_method(method) for method in methods}
    names = [name for name in METRIC_NAMES if metrics is None or name in metrics]
    if not include_auc and "auc" in names:
        names.remove("auc")
    counting = [name for name in names if name in COUNTING_METRICS]

    results = []
    for method in (m for m in ESTIMATION_METHODS if m in requested):
        logger.debug(f"Running {method} on {len(val)} validation / {len(test)} test records")
        try:
            if method in NAIVE_METHODS:
                result = _naive_result(method, val, test, names)
            else:
                val_split = split_predictions(val) if method != "cbpe" else None
                result = _cm_result(method, val_split, split_predictions(test))
        except (EstimationError, ValueError) as e:
            logger.warning(f"{method} failed: {e}")
            unsupported = tuple(name for name in names if name == "auc" and method in NAIVE_METHODS)
            results.append(
                EstimationResult(
                    method=method,
                    cm=None,
                    metrics=MetricReport({name: None for name in names if name not in unsupported}, source=method),
                    unsupported=unsupported,
                    errors={METHOD_ERROR: str(e)},
                )
            )
            continue

        if result.cm is not None:
            values = {name: result.metrics.get(name) for name in counting}
            errors = dict(result.errors)
            details = dict(result.details)
            if "auc" in names:
                try:
                    values["auc"], details[AUC_SKIPPED] = _roc_auc(method, val, test)
                except EstimationError as e:
                    logger.warning(f"{method}: {e}")
                    values["auc"] = None
                    errors["auc"] = str(e)
            result = EstimationResult(
                method=method,
                cm=result.cm,
                metrics=MetricReport(values, source=method),
                clipped=result.clipped,
                errors=errors,
                details=details,
            )
        results.append(result)
    return results
