"""
Temperature scaling of raw scores
Global (ts) and class-wise (csts) temperature scaling, fitted by NLL minimisation
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.special import expit, log_expit, logit

from src.realized import DEFAULT_ACE_BINS, adaptive_calibration_error, root_brier_score
from src.scores import ScoreSet
from src.utils import write_json

logger = logging.getLogger(__name__)

FIT_MODES = ("global", "classwise")
MODE_ALIASES = {"ts": "global", "csts": "classwise"}
SCORE_EPSILON = 1e-7
TEMPERATURE_BOUNDS = (0.05, 20.0)
TEMPERATURE_TOLERANCE = 1e-4


def _clamped_logits(scores: np.ndarray) -> np.ndarray:
    return logit(np.clip(np.asarray(scores, dtype=float), SCORE_EPSILON, 1.0 - SCORE_EPSILON))


def _logit_nll(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    scaled = logits / temperature
    positive = labels == 1
    # log-sigmoid keeps the loss finite for saturated logits
    return float(-np.mean(np.where(positive, log_expit(scaled), log_expit(-scaled))))


def binary_nll(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Mean binary negative log-likelihood of scores against labels

    Scores are clamped to [1e-7, 1 - 1e-7] first.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("Cannot compute NLL of an empty set")
    return _logit_nll(_clamped_logits(scores), labels, 1.0)


def scale_scores(scores: np.ndarray, temperature: float) -> np.ndarray:
    """
    Temperature-scale scores: sigma(logit(s) / T)

    Args:
        scores: Raw scores in [0, 1]
        temperature: Positive temperature; T = 1 returns the scores unchanged

    Returns:
        Scaled scores
    """
    if temperature <= 0 or not math.isfinite(temperature):
        raise ValueError(f"Temperature must be a positive number, got {temperature!r}")
    scores = np.asarray(scores, dtype=float)
    if temperature == 1.0:
        return scores.copy()
    return expit(_clamped_logits(scores) / temperature)


@dataclass(frozen=True)
class TemperatureFit:
    """
    Fitted temperature scaling

    Global fits carry `temperature`; class-wise fits carry `temperature_pos` (records with
    s >= threshold) and `temperature_neg` (records below it).
    """

    mode: str
    temperature: Optional[float] = None
    temperature_pos: Optional[float] = None
    temperature_neg: Optional[float] = None
    threshold: float = 0.5
    nll_before: float = 0.0
    nll_after: float = 0.0
    n: int = 0

    def __post_init__(self):
        if self.mode not in FIT_MODES:
            raise ValueError(f"Unknown temperature scaling mode: {self.mode}")
        required = ("temperature",) if self.mode == "global" else ("temperature_pos", "temperature_neg")
        for name in required:
            value = getattr(self, name)
            if value is None or not value > 0:
                raise ValueError(f"{name} must be positive for {self.mode} scaling, got {value!r}")

    def temperature_for(self, side: str) -> float:
        """Temperature for records on a predicted side (positive or negative)"""
        if self.mode == "global":
            return self.temperature
        return self.temperature_pos if side == "positive" else self.temperature_neg

    def to_dict(self) -> Dict[str, object]:
        return {
            "mode": self.mode,
            "temperature": self.temperature,
            "temperature_pos": self.temperature_pos,
            "temperature_neg": self.temperature_neg,
            "threshold": self.threshold,
            "nll_before": self.nll_before,
            "nll_after": self.nll_after,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "TemperatureFit":
        try:
            return cls(
                mode=MODE_ALIASES.get(data["mode"], data["mode"]),
                temperature=data.get("temperature"),
                temperature_pos=data.get("temperature_pos"),
                temperature_neg=data.get("temperature_neg"),
                threshold=float(data.get("threshold", 0.5)),
                nll_before=float(data.get("nll_before", 0.0)),
                nll_after=float(data.get("nll_after", 0.0)),
                n=int(data.get("n", 0)),
            )
        except KeyError as e:
            raise ValueError(f"Calibration file is missing key {e}")

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TemperatureFit":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError:
            raise FileNotFoundError(f"Calibration file not found: {path}")
        except json.JSONDecodeError as e:
            raise ValueError(f"Error parsing calibration file {path}: {e}")
        return cls.from_dict(data)


def _fit_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Temperature minimising the NLL; falls back to 1 if the search result is worse"""
    result = minimize_scalar(
        lambda t: _logit_nll(logits, labels, t),
        bounds=TEMPERATURE_BOUNDS,
        method="bounded",
        options={"xatol": TEMPERATURE_TOLERANCE},
    )
    temperature = float(result.x)
    if _logit_nll(logits, labels, temperature) > _logit_nll(logits, labels, 1.0):
        logger.debug(f"Temperature search ended at {temperature:.6g} with higher NLL than T=1; keeping T=1")
        return 1.0
    return temperature


def fit_temperature(val: ScoreSet, mode: str = "global") -> TemperatureFit:
    """
    Fit temperature scaling on a labelled validation set

    Args:
        val: Labelled validation set with both classes
        mode: 'global' (or 'ts') for one temperature, 'classwise' (or 'csts') for one
            temperature per predicted side at the set's threshold

    Returns:
        TemperatureFit with NLL before and after scaling

    Raises:
        ValueError: If the set has one class, degenerate logits or an empty predicted side
    """
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in FIT_MODES:
        raise ValueError(f"Unknown temperature scaling mode: {mode}")
    val.require_labels("temperature scaling")
    labels = val.labels
    if np.all(labels == 1) or np.all(labels == 0):
        raise ValueError("Temperature scaling needs both classes in the fitting set")
    logits = _clamped_logits(val.scores)
    if np.ptp(logits) == 0:
        raise ValueError("Temperature scaling impossible: degenerate logits (all scores identical)")

    nll_before = _logit_nll(logits, labels, 1.0)
    if mode == "global":
        temperature = _fit_logits(logits, labels)
        fit_kwargs = {"temperature": temperature}
        nll_after = _logit_nll(logits, labels, temperature)
    else:
        positive = val.scores >= val.threshold
        if not positive.any():
            raise ValueError("Class-wise scaling needs records on the positive side of the threshold")
        if positive.all():
            raise ValueError("Class-wise scaling needs records on the negative side of the threshold")
        t_pos = _fit_logits(logits[positive], labels[positive])
        t_neg = _fit_logits(logits[~positive], labels[~positive])
        fit_kwargs = {"temperature_pos": t_pos, "temperature_neg": t_neg}
        scaled = np.where(positive, logits / t_pos, logits / t_neg)
        nll_after = _logit_nll(scaled, labels, 1.0)

    fit = TemperatureFit(
        mode=mode, threshold=val.threshold, nll_before=nll_before, nll_after=nll_after, n=len(val), **fit_kwargs
    )
    logger.info(f"Fitted {mode} temperature scaling: {fit_kwargs}, NLL {nll_before:.6f} -> {nll_after:.6f}")
    return fit


def apply_temperature(score_set: ScoreSet, fit: TemperatureFit) -> ScoreSet:
    """
    Rescale a score set's raw scores with a fitted temperature

    Class-wise fits split the records at the set's own threshold. Labels, groups and the
    threshold are preserved.

    Args:
        score_set: Scores to rescale
        fit: Temperature fit to apply

    Returns:
        New ScoreSet with scaled scores
    """
    if score_set.threshold != fit.threshold:
        logger.warning(
            f"Applying a fit made at threshold {fit.threshold} to a set with threshold {score_set.threshold}"
        )
    scores = score_set.scores
    positive = scores >= score_set.threshold
    scaled = np.empty_like(scores)
    for side, mask in (("positive", positive), ("negative", ~positive)):
        scaled[mask] = scale_scores(scores[mask], fit.temperature_for(side))
    return score_set.with_scores(scaled)


def calibration_report(
    sets: Mapping[str, ScoreSet], fit: TemperatureFit, bins: int = DEFAULT_ACE_BINS
) -> pd.DataFrame:
    """
    RBS and ACE before and after scaling for each labelled set

    Args:
        sets: Dataset name to labelled score set
        fit: Temperature fit to evaluate
        bins: ACE bin count

    Returns:
        DataFrame with columns dataset, stage, rbs, ace
    """
    rows: List[Dict[str, object]] = []
    for name, score_set in sets.items():
        for stage, candidate in (("before", score_set), ("after", apply_temperature(score_set, fit))):
            ace = adaptive_calibration_error(candidate, bins) if len(candidate) >= bins else None
            rows.append({"dataset": name, "stage": stage, "rbs": root_brier_score(candidate), "ace": ace})
    return pd.DataFrame(rows, columns=["dataset", "stage", "rbs", "ace"])
