"""
Score data model and ingestion
Loads classifier scores and splits them into positive and negative prediction sets
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd


logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
MISSING_LABEL = -1
REQUIRED_COLUMNS = ("id", "score")
SUPPORTED_FORMATS = ("csv", "jsonl")


class ScoreValidationError(ValueError):
    """Invalid score input; carries the 1-based file line when known"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def stable_mean(values: np.ndarray) -> float:
    """Mean over a sorted copy, so the result does not depend on record order"""
    return float(np.mean(np.sort(np.asarray(values, dtype=float))))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ScoreRecord:
    """A single classifier output with optional ground truth and group tag"""

    id: str
    raw_score: float
    label: Optional[int] = None
    group: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.raw_score <= 1.0:
            raise ScoreValidationError(f"score {float(self.raw_score):g} for id {self.id!r} outside [0, 1]")
        if self.label is not None and self.label not in (0, 1):
            raise ScoreValidationError(f"label {self.label!r} for id {self.id!r} is not 0 or 1")


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """
    Ordered, immutable collection of scores with the decision threshold

    Labels are stored as an int array where -1 marks a missing label; groups as
    an object array where None marks a missing tag.
    """

    ids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        n = len(self.scores)
        if not (len(self.ids) == len(self.labels) == len(self.groups) == n):
            raise ScoreValidationError("ids, scores, labels and groups must have equal length")
        if not 0.0 <= self.threshold <= 1.0:
            raise ScoreValidationError(f"threshold {float(self.threshold):g} outside [0, 1]")
        if n and (np.any(~np.isfinite(self.scores)) or np.any(self.scores < 0.0) or np.any(self.scores > 1.0)):
            bad = int(np.flatnonzero(~((self.scores >= 0.0) & (self.scores <= 1.0)))[0])
            raise ScoreValidationError(f"score {float(self.scores[bad]):g} for id {str(self.ids[bad])!r} outside [0, 1]")
        if n and np.any(~np.isin(self.labels, (MISSING_LABEL, 0, 1))):
            raise ScoreValidationError("labels must be 0, 1 or missing")
        for name in ("ids", "scores", "labels", "groups"):
            _frozen(getattr(self, name))

    @classmethod
    def from_arrays(
        cls,
        scores: Sequence[float],
        labels: Optional[Sequence[Optional[int]]] = None,
        ids: Optional[Sequence[str]] = None,
        groups: Optional[Sequence[Optional[str]]] = None,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> "ScoreSet":
        """
        Build a ScoreSet from plain sequences

        Args:
            scores: Raw positive-class scores
            labels: Optional labels (None entries are missing)
            ids: Optional record ids (defaults to running numbers)
            groups: Optional group tags
            threshold: Decision threshold t

        Returns:
            New ScoreSet
        """
        score_array = np.array(scores, dtype=float)
        n = score_array.size
        if labels is None:
            label_array = np.full(n, MISSING_LABEL, dtype=np.int8)
        else:
            label_array = np.array(
                [MISSING_LABEL if label is None else int(label) for label in labels], dtype=np.int8
            )
        id_array = np.array([str(i) for i in (range(n) if ids is None else ids)], dtype=object)
        group_array = np.array([None] * n if groups is None else list(groups), dtype=object)
        return cls(id_array, score_array, label_array, group_array, float(threshold))

    @classmethod
    def from_records(cls, records: Iterable[ScoreRecord], threshold: float = DEFAULT_THRESHOLD) -> "ScoreSet":
        """Build a ScoreSet from ScoreRecord objects, preserving order"""
        records = list(records)
        return cls.from_arrays(
            [r.raw_score for r in records],
            [r.label for r in records],
            [r.id for r in records],
            [r.group for r in records],
            threshold,
        )

    def __len__(self) -> int:
        return int(self.scores.size)

    @property
    def records(self) -> List[ScoreRecord]:
        """Records in input order"""
        return [
            ScoreRecord(
                str(self.ids[i]),
                float(self.scores[i]),
                None if self.labels[i] == MISSING_LABEL else int(self.labels[i]),
                self.groups[i],
            )
            for i in range(len(self))
        ]

    @property
    def labelled(self) -> bool:
        """True iff every record carries a label"""
        return len(self) > 0 and bool(np.all(self.labels != MISSING_LABEL))

    @property
    def has_groups(self) -> bool:
        return any(group is not None for group in self.groups)

    def require_labels(self, purpose: str = "realized metrics") -> None:
        """
        Reject sets that are not fully labelled

        Raises:
            ValueError: If any record lacks a label
        """
        if len(self) == 0:
            raise ValueError(f"Empty score set: cannot compute {purpose}")
        if not self.labelled:
            missing = int(np.sum(self.labels == MISSING_LABEL))
            raise ValueError(f"Score set is not fully labelled ({missing} of {len(self)} missing): cannot compute {purpose}")

    def prevalence(self) -> float:
        """Fraction of positive labels (labelled sets only)"""
        self.require_labels("prevalence")
        return float(np.mean(self.labels == 1))

    def with_threshold(self, threshold: float) -> "ScoreSet":
        """Same records under a different decision threshold; the records are not re-validated"""
        threshold = float(threshold)
        if not 0.0 <= threshold <= 1.0:
            raise ScoreValidationError(f"threshold {threshold:g} outside [0, 1]")
        derived = object.__new__(ScoreSet)
        for name in ("ids", "scores", "labels", "groups"):
            object.__setattr__(derived, name, getattr(self, name))
        object.__setattr__(derived, "threshold", threshold)
        return derived

    def with_scores(self, scores: np.ndarray) -> "ScoreSet":
        """Same records with replaced raw scores"""
        return ScoreSet(self.ids, np.array(scores, dtype=float), self.labels, self.groups, self.threshold)

    def with_groups(self, group: Optional[str]) -> "ScoreSet":
        """Same records, all tagged with one group"""
        return ScoreSet(self.ids, self.scores, self.labels, np.array([group] * len(self), dtype=object), self.threshold)

    def subset(self, indices: Sequence[int]) -> "ScoreSet":
        """Records at the given positions (repeats allowed), in the given order"""
        idx = np.asarray(indices, dtype=np.intp)
        return ScoreSet(
            self.ids[idx].copy(), self.scores[idx].copy(), self.labels[idx].copy(), self.groups[idx].copy(), self.threshold
        )

    def select_group(self, tag: str) -> "ScoreSet":
        """Records whose group equals tag"""
        return self.subset(np.flatnonzero(self.groups == tag))

    @classmethod
    def concat(cls, parts: Sequence["ScoreSet"]) -> "ScoreSet":
        """Concatenate score sets; the threshold of the first part is kept"""
        if not parts:
            raise ValueError("Nothing to concatenate")
        return cls(
            np.concatenate([p.ids for p in parts]),
            np.concatenate([p.scores for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.groups for p in parts]),
            parts[0].threshold,
        )

    def to_frame(self) -> pd.DataFrame:
        """Tabular view in the module file format (id, score[, label][, group])"""
        frame = pd.DataFrame({"id": self.ids, "score": self.scores})
        if np.any(self.labels != MISSING_LABEL):
            frame["label"] = pd.array(
                [None if label == MISSING_LABEL else int(label) for label in self.labels], dtype="Int64"
            )
        if self.has_groups:
            frame["group"] = self.groups
        return frame


@dataclass(frozen=True, eq=False)
class PredictionSplit:
    """Predicted-class confidences partitioned by predicted class"""

    positives: np.ndarray
    negatives: np.ndarray
    threshold: float
    labels_pos: Optional[np.ndarray] = None
    labels_neg: Optional[np.ndarray] = None

    @property
    def n_pos(self) -> int:
        return int(self.positives.size)

    @property
    def n_neg(self) -> int:
        return int(self.negatives.size)

    @property
    def n(self) -> int:
        return self.n_pos + self.n_neg

    @property
    def labelled(self) -> bool:
        return self.labels_pos is not None and self.labels_neg is not None

    @property
    def confidences(self) -> np.ndarray:
        """Pooled predicted-class confidences, positives first"""
        return np.concatenate([self.positives, self.negatives])

    def realized_ppv(self) -> Optional[float]:
        """Fraction of positive predictions that are correct, None on an empty side"""
        if not self.labelled:
            raise ValueError("Prediction split carries no labels")
        return float(np.mean(self.labels_pos == 1)) if self.n_pos else None

    def realized_npv(self) -> Optional[float]:
        """Fraction of negative predictions that are correct, None on an empty side"""
        if not self.labelled:
            raise ValueError("Prediction split carries no labels")
        return float(np.mean(self.labels_neg == 0)) if self.n_neg else None


def predicted_confidence(raw_score: float, t: float) -> float:
    """
    Confidence in the predicted class

    Args:
        raw_score: Positive-class score s
        t: Decision threshold

    Returns:
        s when s >= t (positive prediction), otherwise 1 - s
    """
    return raw_score if raw_score >= t else 1.0 - raw_score


def predicted_confidences(scores: np.ndarray, t: float) -> np.ndarray:
    """Vectorised predicted_confidence"""
    scores = np.asarray(scores, dtype=float)
    return np.where(scores >= t, scores, 1.0 - scores)


def split_predictions(score_set: ScoreSet) -> PredictionSplit:
    """
    Partition a score set into positive and negative prediction confidences

    Labels are carried along only when the set is fully labelled.

    Args:
        score_set: Scores with threshold

    Returns:
        PredictionSplit preserving input order within each side

    Raises:
        ValueError: If the set is empty
    """
    if len(score_set) == 0:
        raise ValueError("Cannot split an empty score set")
    scores = score_set.scores
    positive = scores >= score_set.threshold
    labels_pos = labels_neg = None
    if score_set.labelled:
        labels_pos = score_set.labels[positive]
        labels_neg = score_set.labels[~positive]
    return PredictionSplit(
        positives=scores[positive],
        negatives=1.0 - scores[~positive],
        threshold=score_set.threshold,
        labels_pos=labels_pos,
        labels_neg=labels_neg,
    )


def _read_csv_rows(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise ScoreValidationError(f"empty file: {path}")
    except pd.errors.ParserError as e:
        raise ScoreValidationError(f"malformed row in {path}: {e}")
    frame.columns = [str(column).strip() for column in frame.columns]
    # header is line 1; blank lines are kept as rows until numbered
    frame["_line"] = np.arange(len(frame)) + 2
    if frame.empty:
        return frame
    blank = frame.drop(columns="_line").fillna("").apply(lambda column: column.str.strip() == "").all(axis=1)
    return frame.loc[~blank].reset_index(drop=True)


def _read_jsonl_rows(path: Path) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ScoreValidationError(f"malformed JSON object: {e.msg}", line_number)
            if not isinstance(row, dict):
                raise ScoreValidationError("expected a JSON object", line_number)
            row = {key: ("" if value is None else str(value)) for key, value in row.items()}
            row["_line"] = line_number
            rows.append(row)
    return pd.DataFrame(rows)


def _frame_to_score_set(frame: pd.DataFrame, threshold: float, source: Path) -> ScoreSet:
    if frame.empty:
        raise ScoreValidationError(f"empty file: {source}")
    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise ScoreValidationError(f"missing required column '{column}' in {source}")

    lines = frame["_line"].to_numpy()
    ids = frame["id"].fillna("").astype(str).str.strip()
    empty_id = ids == ""
    if empty_id.any():
        raise ScoreValidationError("missing id", int(lines[np.flatnonzero(empty_id.to_numpy())[0]]))

    # float() is round-trip exact for repr-formatted values
    scores = np.empty(len(frame), dtype=float)
    for position, value in enumerate(frame["score"].fillna("").astype(str).str.strip()):
        try:
            scores[position] = float(value)
        except ValueError:
            raise ScoreValidationError(f"score {value!r} is not a number", int(lines[position]))
        if not np.isfinite(scores[position]):
            raise ScoreValidationError(f"score {value!r} is not a number", int(lines[position]))
        if not 0.0 <= scores[position] <= 1.0:
            raise ScoreValidationError(f"score {scores[position]:g} outside [0, 1]", int(lines[position]))

    labels = np.full(len(frame), MISSING_LABEL, dtype=np.int8)
    if "label" in frame.columns:
        raw_labels = frame["label"].fillna("").astype(str).str.strip()
        for position, value in enumerate(raw_labels):
            if value == "":
                continue
            try:
                number = float(value)
            except ValueError:
                number = float("nan")
            if number not in (0.0, 1.0):
                raise ScoreValidationError(f"label {value!r} is not 0 or 1", int(lines[position]))
            labels[position] = int(number)

    groups = np.array([None] * len(frame), dtype=object)
    if "group" in frame.columns:
        groups = np.array([value.strip() or None for value in frame["group"].fillna("").astype(str)], dtype=object)

    return ScoreSet(ids.to_numpy(dtype=object), scores, labels, groups, float(threshold))


def load_scores(
    path: Union[str, Path], format: Optional[str] = None, threshold: float = DEFAULT_THRESHOLD
) -> ScoreSet:
    """
    Load a score file

    Args:
        path: CSV (header required, columns id, score, optional label, group) or JSONL file
        format: 'csv' or 'jsonl'; inferred from the suffix when omitted
        threshold: Decision threshold attached to the set

    Returns:
        ScoreSet in file order

    Raises:
        FileNotFoundError: If the file does not exist
        ScoreValidationError: On empty files, malformed rows or invalid values
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Score file not found: {path}")
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv"
    if format not in SUPPORTED_FORMATS:
        raise ValueError(f"Unsupported score format: {format}")

    frame = _read_jsonl_rows(path) if format == "jsonl" else _read_csv_rows(path)
    score_set = _frame_to_score_set(frame, threshold, path)
    logger.debug(
        f"Loaded {len(score_set)} scores from {path} "
        f"({'labelled' if score_set.labelled else 'unlabelled or partially labelled'})"
    )
    return score_set


def write_scores(score_set: ScoreSet, path: Union[str, Path]) -> Path:
    """
    Write a score set in the CSV score format

    Args:
        score_set: Scores to write
        path: Destination file

    Returns:
        Path of the written file
    """
    frame = score_set.to_frame()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-precision floats; labels as integers, missing labels left blank
    frame.to_csv(path, index=False, lineterminator="\n", na_rep="")
    logger.info(f"Wrote {len(score_set)} scores to {path}")
    return path
