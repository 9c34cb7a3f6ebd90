"""
Controlled dataset-shift harness
Synthetic score generator, prevalence resampling, majority/minority mixing and
repeated shift sweeps with MAE reporting
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.calibration import scale_scores
from src.estimators import EstimationResult, estimate_all
from src.realized import (
    DEFAULT_ACE_BINS,
    METRIC_NAMES,
    MetricReport,
    adaptive_calibration_error,
    counting_metrics,
    realized_auc,
    realized_confusion_matrix,
    root_brier_score,
)
from src.scores import DEFAULT_THRESHOLD, ScoreSet
from src.utils import DEFAULT_SEED, ESTIMATION_METHODS, SWEEP_KINDS, round_half_up

logger = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 50
DEFAULT_SAMPLE_SIZE = 1000
DEFAULT_POOL_SIZE = 10000
DEFAULT_VAL_SIZE = 2000
DEFAULT_REFERENCE_PREVALENCE = 0.38
DEFAULT_VAL_MAJORITY_FRACTION = 0.8
MIN_RESAMPLE_SIZE = 20
# draw budget for hitting a target prevalence, in multiples of n
MAX_DRAW_FACTOR = 10
MAJORITY = "majority"
MINORITY = "minority"

_BETA_PATTERN = re.compile(r"^beta\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)$")


def default_levels(kind: str) -> List[float]:
    """Prevalence 0.05..0.95 in steps of 0.05, majority fraction 0.0..1.0 in steps of 0.1"""
    if kind == "prevalence":
        return [round(0.05 * i, 2) for i in range(1, 20)]
    if kind == "covariate":
        return [round(0.1 * i, 1) for i in range(11)]
    raise ValueError(f"Unknown sweep kind: {kind}")


def derive_seed(master: int, level_index: int, repetition: int) -> int:
    """
    Seed for one sweep repetition

    Derived as SeedSequence(master, spawn_key=(level_index, repetition)), so it does not
    depend on the order in which repetitions run.
    """
    sequence = np.random.SeedSequence(master, spawn_key=(level_index, repetition))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _stream_seed(master: int, stream: int) -> int:
    # one-element spawn keys never collide with the (level, repetition) keys above
    return int(np.random.SeedSequence(master, spawn_key=(stream,)).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class LatentLaw:
    """Distribution of the true conditional q = P(y=1 | x): uniform or beta(a, b)"""

    kind: str = "uniform"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "beta"):
            raise ValueError(f"Unknown latent law: {self.kind}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")

    @classmethod
    def parse(cls, text: Union[str, "LatentLaw"]) -> "LatentLaw":
        """Parse 'uniform' or 'beta(a,b)'"""
        if isinstance(text, LatentLaw):
            return text
        value = str(text).strip().lower()
        if value == "uniform":
            return cls("uniform")
        match = _BETA_PATTERN.match(value)
        if not match:
            raise ValueError(f"Cannot parse latent law {text!r}; expected 'uniform' or 'beta(a,b)'")
        return cls("beta", float(match.group(1)), float(match.group(2)))

    @property
    def mean(self) -> float:
        return 0.5 if self.kind == "uniform" else self.a / (self.a + self.b)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.random(size)
        return rng.beta(self.a, self.b, size)

    def __str__(self) -> str:
        return "uniform" if self.kind == "uniform" else f"beta({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class GroupSpec:
    """Latent law and score distortion of one population group"""

    latent: LatentLaw
    distortion: float = 1.0

    def __post_init__(self):
        if not self.distortion > 0:
            raise ValueError(f"Distortion must be positive, got {self.distortion}")


DEFAULT_GROUPS = (
    GroupSpec(LatentLaw("beta", 0.5, 0.5), 1.0),
    GroupSpec(LatentLaw("beta", 5.0, 5.0), 2.0),
)


@dataclass(frozen=True)
class GeneratorSpec:
    """
    Synthetic score generator settings

    Reported scores are sigma(distortion * logit(q)): distortion 1 gives calibrated scores,
    distortion > 1 overconfident ones. Without an explicit prevalence the class balance
    follows the latent law's mean.
    """

    n: int
    prevalence: Optional[float] = None
    latent: LatentLaw = field(default_factory=LatentLaw)
    distortion: float = 1.0
    groups: Optional[Tuple[GroupSpec, GroupSpec]] = None
    majority_fraction: float = DEFAULT_VAL_MAJORITY_FRACTION
    seed: int = DEFAULT_SEED
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Generator needs n >= 1, got {self.n}")
        if self.prevalence is not None and not 0.0 < self.prevalence < 1.0:
            raise ValueError(f"Generator prevalence must lie in (0, 1), got {self.prevalence}")
        if not self.distortion > 0:
            raise ValueError(f"Distortion must be positive, got {self.distortion}")
        if not 0.0 <= self.majority_fraction <= 1.0:
            raise ValueError(f"Majority fraction must lie in [0, 1], got {self.majority_fraction}")


def _draw_group(
    rng: np.random.Generator, n: int, latent: LatentLaw, distortion: float, prevalence: Optional[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """Scores and labels for n records of one group"""
    if n == 0:
        return np.empty(0), np.empty(0, dtype=np.int8)
    if prevalence is None:
        q = latent.sample(rng, n)
        labels = (rng.random(n) < q).astype(np.int8)
    else:
        # class-wise rejection: keep drawing until each class quota is filled
        need_pos = round_half_up(n * prevalence)
        need_neg = n - need_pos
        kept_q: List[np.ndarray] = []
        kept_y: List[np.ndarray] = []
        drawn = 0
        while (need_pos or need_neg) and drawn < MAX_DRAW_FACTOR * n:
            batch = min(n, MAX_DRAW_FACTOR * n - drawn)
            q = latent.sample(rng, batch)
            y = rng.random(batch) < q
            drawn += batch
            accept = np.zeros(batch, dtype=bool)
            accept[np.flatnonzero(y)[:need_pos]] = True
            accept[np.flatnonzero(~y)[:need_neg]] = True
            need_pos -= int(np.sum(accept & y))
            need_neg -= int(np.sum(accept & ~y))
            kept_q.append(q[accept])
            kept_y.append(y[accept])
        if need_pos or need_neg:
            raise ValueError(
                f"Prevalence {prevalence} unreachable with latent law {latent} within {MAX_DRAW_FACTOR * n} draws"
            )
        q = np.concatenate(kept_q)
        labels = np.concatenate(kept_y).astype(np.int8)
    # scale_scores divides logits by its temperature
    return scale_scores(q, 1.0 / distortion), labels


def generate_synthetic(spec: GeneratorSpec) -> ScoreSet:
    """
    Draw a synthetic labelled score set

    Args:
        spec: Generator settings

    Returns:
        ScoreSet with ids s000000..., labels and, when groups are configured, group tags

    Raises:
        ValueError: If the target prevalence cannot be reached
    """
    rng = np.random.default_rng(spec.seed)
    if spec.groups is None:
        scores, labels = _draw_group(rng, spec.n, spec.latent, spec.distortion, spec.prevalence)
        groups = None
    else:
        n_major = round_half_up(spec.n * spec.majority_fraction)
        parts = [
            _draw_group(rng, count, group.latent, group.distortion, spec.prevalence)
            for count, group in zip((n_major, spec.n - n_major), spec.groups)
        ]
        scores = np.concatenate([part[0] for part in parts])
        labels = np.concatenate([part[1] for part in parts])
        groups = [MAJORITY] * n_major + [MINORITY] * (spec.n - n_major)
    ids = [f"s{i:06d}" for i in range(spec.n)]
    logger.debug(f"Generated {spec.n} synthetic records (seed {spec.seed})")
    return ScoreSet.from_arrays(scores, labels=labels, ids=ids, groups=groups, threshold=spec.threshold)


def _class_indices(pool: ScoreSet, what: str) -> Tuple[np.ndarray, np.ndarray]:
    pool.require_labels(what)
    return np.flatnonzero(pool.labels == 1), np.flatnonzero(pool.labels == 0)


def _draw(rng: np.random.Generator, candidates: np.ndarray, count: int, what: str) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.intp)
    if candidates.size == 0:
        raise ValueError(f"Cannot draw {count} records: {what} pool is empty")
    return rng.choice(candidates, size=count, replace=True)


def resample_prevalence(pool: ScoreSet, target_prevalence: float, n: int, seed: int) -> ScoreSet:
    """
    Resample a labelled pool to an exact positive-class prevalence

    round(n * target) positives and the remaining negatives are drawn with replacement
    from the respective class pools, then shuffled.

    Args:
        pool: Labelled score pool
        target_prevalence: Target prevalence in [0, 1]
        n: Output size, at least 20
        seed: Random seed

    Returns:
        ScoreSet of exactly n records

    Raises:
        ValueError: If n < 20, the target is out of range or a needed class pool is empty
    """
    if n < MIN_RESAMPLE_SIZE:
        raise ValueError(f"Prevalence resampling needs n >= {MIN_RESAMPLE_SIZE}, got {n}")
    if not 0.0 <= target_prevalence <= 1.0:
        raise ValueError(f"Target prevalence must lie in [0, 1], got {target_prevalence}")
    positives, negatives = _class_indices(pool, "prevalence resampling")
    rng = np.random.default_rng(seed)
    n_pos = round_half_up(n * target_prevalence)
    indices = np.concatenate(
        [_draw(rng, positives, n_pos, "positive-class"), _draw(rng, negatives, n - n_pos, "negative-class")]
    )
    return pool.subset(rng.permutation(indices))


def mix_groups(
    majority: ScoreSet,
    minority: ScoreSet,
    majority_fraction: float,
    n: int,
    seed: int,
    reference_prevalence: Optional[float] = None,
) -> ScoreSet:
    """
    Mix majority and minority pools at a given proportion and a fixed prevalence

    round(n * majority_fraction) records come from the majority pool. The positive count
    round(n * prevalence) is split so each group gets round(n_group * prevalence) where
    possible; sampling is with replacement within each class of each group.

    Args:
        majority: Labelled majority pool
        minority: Labelled minority pool
        majority_fraction: Share of majority records in [0, 1]
        n: Output size
        seed: Random seed
        reference_prevalence: Prevalence to hold fixed; defaults to that of both pools combined

    Returns:
        ScoreSet tagged with 'majority' / 'minority' groups

    Raises:
        ValueError: If a needed class-within-group pool is empty
    """
    if n < 1:
        raise ValueError(f"Mixed set needs n >= 1, got {n}")
    if not 0.0 <= majority_fraction <= 1.0:
        raise ValueError(f"Majority fraction must lie in [0, 1], got {majority_fraction}")
    major_pos, major_neg = _class_indices(majority, "group mixing (majority)")
    minor_pos, minor_neg = _class_indices(minority, "group mixing (minority)")
    if reference_prevalence is None:
        reference_prevalence = (major_pos.size + minor_pos.size) / (len(majority) + len(minority))

    n_major = round_half_up(n * majority_fraction)
    n_minor = n - n_major
    total_pos = round_half_up(n * reference_prevalence)
    pos_major = min(round_half_up(n_major * reference_prevalence), n_major, total_pos)
    pos_minor = min(max(total_pos - pos_major, 0), n_minor)
    pos_major = total_pos - pos_minor

    rng = np.random.default_rng(seed)
    major_idx = np.concatenate(
        [_draw(rng, major_pos, pos_major, "majority positive"), _draw(rng, major_neg, n_major - pos_major, "majority negative")]
    )
    minor_idx = np.concatenate(
        [_draw(rng, minor_pos, pos_minor, "minority positive"), _draw(rng, minor_neg, n_minor - pos_minor, "minority negative")]
    )
    mixed = ScoreSet.concat(
        [majority.subset(major_idx).with_groups(MAJORITY), minority.subset(minor_idx).with_groups(MINORITY)]
    )
    return mixed.subset(rng.permutation(n))


@dataclass(frozen=True)
class SweepConfig:
    """Shift sweep settings"""

    kind: str
    levels: Tuple[float, ...] = ()
    repetitions: int = DEFAULT_REPETITIONS
    n: int = DEFAULT_SAMPLE_SIZE
    methods: Tuple[str, ...] = ESTIMATION_METHODS
    metrics: Tuple[str, ...] = METRIC_NAMES
    ace_bins: int = DEFAULT_ACE_BINS
    seed: int = DEFAULT_SEED
    reference_prevalence: Optional[float] = None
    include_auc: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"Unknown sweep kind: {self.kind}")
        if not self.levels:
            object.__setattr__(self, "levels", tuple(default_levels(self.kind)))
        levels = np.asarray(self.levels, dtype=float)
        if np.any(np.diff(levels) <= 0):
            raise ValueError("Sweep levels must be strictly increasing")
        if np.any((levels < 0) | (levels > 1)):
            raise ValueError("Sweep levels must lie in [0, 1]")
        if self.repetitions < 1 or self.n < 1 or self.workers < 1:
            raise ValueError("repetitions, n and workers must be positive")


@dataclass(frozen=True)
class ShiftPools:
    """Score pools the sweep draws test sets from"""

    pool: Optional[ScoreSet] = None
    majority: Optional[ScoreSet] = None
    minority: Optional[ScoreSet] = None

    def require(self, kind: str) -> None:
        if kind == "prevalence" and self.pool is None:
            raise ValueError("A prevalence sweep needs a labelled pool")
        if kind == "covariate" and (self.majority is None or self.minority is None):
            raise ValueError("A covariate sweep needs labelled majority and minority pools")


@dataclass(frozen=True)
class RepetitionOutcome:
    """Realized and estimated metrics of one constructed test set"""

    level_index: int
    repetition: int
    realized: MetricReport
    estimates: Mapping[str, MetricReport]
    rbs: float
    ace: Optional[float]


@dataclass(frozen=True)
class SweepLevel:
    """Repetition-averaged metrics at one shift level"""

    level: float
    repetitions: int
    realized: MetricReport
    estimated: Mapping[str, MetricReport]
    rbs: float
    ace: Optional[float]
    outcomes: Tuple[RepetitionOutcome, ...] = ()


@dataclass(frozen=True)
class SweepResult:
    """Outcome of a shift sweep, one entry per level in axis order"""

    kind: str
    levels: Tuple[SweepLevel, ...]
    repetitions: int
    seed: int
    methods: Tuple[str, ...]
    metrics: Tuple[str, ...]

    @property
    def axis(self) -> List[float]:
        return [level.level for level in self.levels]

    def to_long_frame(self) -> pd.DataFrame:
        """Columns level, repetition_mean, metric, method, realized, estimated, rbs, ace"""
        rows = []
        for level in self.levels:
            for metric in self.metrics:
                for method in self.methods:
                    report = level.estimated.get(method)
                    if report is None or metric not in report:
                        continue
                    rows.append(
                        {
                            "level": level.level,
                            "repetition_mean": level.repetitions,
                            "metric": metric,
                            "method": method,
                            "realized": level.realized.get(metric),
                            "estimated": report.get(metric),
                            "rbs": level.rbs,
                            "ace": level.ace,
                        }
                    )
        columns = ["level", "repetition_mean", "metric", "method", "realized", "estimated", "rbs", "ace"]
        return pd.DataFrame(rows, columns=columns)

    def comparison_frame(self) -> pd.DataFrame:
        """Per-repetition realized/estimated pairs"""
        rows: List[Dict[str, Any]] = []
        for level in self.levels:
            for outcome in level.outcomes:
                for method in self.methods:
                    if method in outcome.estimates:
                        rows.extend(
                            _pairs(outcome.realized, outcome.estimates[method], method, self.metrics, level=level.level)
                        )
        return pd.DataFrame(rows)

    def summary_frame(self) -> pd.DataFrame:
        """MAE per level, method and metric over repetitions"""
        return mae_report(self.comparison_frame(), group_by=("level", "method", "metric"))

    def mae_frame(self) -> pd.DataFrame:
        """MAE per method and metric over all levels and repetitions"""
        return mae_report(self.comparison_frame(), group_by=("method", "metric"))


def _pairs(
    realized: MetricReport, estimated: MetricReport, method: str, metrics: Iterable[str], **keys: Any
) -> List[Dict[str, Any]]:
    return [
        {**keys, "method": method, "metric": metric, "realized": realized.get(metric), "estimated": estimated.get(metric)}
        for metric in metrics
        if metric in estimated
    ]


def comparison_rows(realized: MetricReport, results: Sequence[EstimationResult], **keys: Any) -> List[Dict[str, Any]]:
    """
    Long-format realized vs estimated rows for every method and estimated metric

    Metrics a method does not support are left out.

    Args:
        realized: Realized metrics of the test set
        results: Estimation results
        **keys: Extra columns copied into every row (for example dataset or level)

    Returns:
        List of dicts with the keys, method, metric, realized and estimated
    """
    rows: List[Dict[str, Any]] = []
    for result in results:
        rows.extend(_pairs(realized, result.metrics, result.method, METRIC_NAMES, **keys))
    return rows


def mae_report(pairs: Union[pd.DataFrame, Sequence[Mapping[str, Any]]], group_by: Sequence[str] = ("method", "metric")) -> pd.DataFrame:
    """
    Mean absolute error between estimated and realized values

    Args:
        pairs: Rows with 'realized' and 'estimated' columns plus the grouping columns
        group_by: Grouping columns, output is sorted by them

    Returns:
        DataFrame with the group columns, mae, n_defined and undefined_count; groups without
        a defined pair have mae NaN

    Raises:
        ValueError: If no pair has both values defined
    """
    frame = pd.DataFrame(list(pairs) if not isinstance(pairs, pd.DataFrame) else pairs)
    group_by = list(group_by)
    if frame.empty:
        raise ValueError("MAE needs at least one realized/estimated pair")
    missing = [column for column in group_by + ["realized", "estimated"] if column not in frame.columns]
    if missing:
        raise ValueError(f"MAE input lacks columns: {', '.join(missing)}")

    realized = pd.to_numeric(frame["realized"], errors="coerce")
    estimated = pd.to_numeric(frame["estimated"], errors="coerce")
    frame = frame[group_by].assign(
        error=(estimated - realized).abs(),
        defined=(realized.notna() & estimated.notna()).astype(int),
    )
    if not frame["defined"].any():
        raise ValueError("MAE undefined: no pair has both realized and estimated values")

    grouped = frame.groupby(group_by, sort=True)
    report = grouped.agg(mae=("error", "mean"), n_defined=("defined", "sum"), n_total=("defined", "size")).reset_index()
    report["undefined_count"] = report["n_total"] - report["n_defined"]
    return report[group_by + ["mae", "n_defined", "undefined_count"]]


def realized_report(score_set: ScoreSet, metrics: Sequence[str] = METRIC_NAMES) -> MetricReport:
    """Realized counting metrics plus rank AUC (undefined for a single-class set)"""
    report = counting_metrics(realized_confusion_matrix(score_set))
    values = {name: report.get(name) for name in metrics if name in report}
    if "auc" in metrics:
        try:
            values["auc"] = realized_auc(score_set)
        except ValueError:
            values["auc"] = None
    return MetricReport(values, source="realized")


class ShiftSweep:
    """Runs repeated test-set constructions across a shift axis"""

    def __init__(self, config: SweepConfig, val: ScoreSet, pools: ShiftPools):
        self.config = config
        self.val = val
        self.pools = pools
        self.logger = logging.getLogger(__name__)
        pools.require(config.kind)
        val.require_labels("the sweep validation set")

    def build_test_set(self, level: float, seed: int) -> ScoreSet:
        if self.config.kind == "prevalence":
            return resample_prevalence(self.pools.pool, level, self.config.n, seed)
        return mix_groups(
            self.pools.majority,
            self.pools.minority,
            level,
            self.config.n,
            seed,
            reference_prevalence=self.config.reference_prevalence,
        )

    def run_repetition(self, level_index: int, repetition: int) -> RepetitionOutcome:
        config = self.config
        level = config.levels[level_index]
        seed = derive_seed(config.seed, level_index, repetition)
        try:
            test = self.build_test_set(level, seed)
        except ValueError as e:
            raise ValueError(f"level {level} repetition {repetition}: {e}") from e

        results = estimate_all(config.methods, self.val, test, metrics=config.metrics, include_auc=config.include_auc)
        ace = adaptive_calibration_error(test, config.ace_bins) if len(test) >= config.ace_bins else None
        self.logger.debug(f"Level {level} repetition {repetition} done (seed {seed})")
        return RepetitionOutcome(
            level_index=level_index,
            repetition=repetition,
            realized=realized_report(test, config.metrics),
            estimates={result.method: result.metrics for result in results},
            rbs=root_brier_score(test),
            ace=ace,
        )

    def run(self) -> SweepResult:
        config = self.config
        tasks = [(li, rep) for li in range(len(config.levels)) for rep in range(config.repetitions)]
        self.logger.info(
            f"Running {config.kind} sweep: {len(config.levels)} levels x {config.repetitions} repetitions, "
            f"n={config.n}, workers={config.workers}"
        )
        if config.workers == 1:
            outcomes = [self.run_repetition(li, rep) for li, rep in tasks]
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                # map keeps task order, so aggregation does not depend on scheduling
                outcomes = list(executor.map(lambda task: self.run_repetition(*task), tasks))

        levels = []
        methods = tuple(outcomes[0].estimates)
        for li, level in enumerate(config.levels):
            chunk = tuple(outcomes[li * config.repetitions:(li + 1) * config.repetitions])
            aces = [o.ace for o in chunk if o.ace is not None]
            levels.append(
                SweepLevel(
                    level=float(level),
                    repetitions=len(chunk),
                    realized=MetricReport.average([o.realized for o in chunk]),
                    estimated={
                        method: MetricReport.average([o.estimates[method] for o in chunk], source=method)
                        for method in methods
                    },
                    rbs=float(np.mean([o.rbs for o in chunk])),
                    ace=float(np.mean(aces)) if aces else None,
                    outcomes=chunk,
                )
            )
            self.logger.info(f"Level {level}: realized accuracy {levels[-1].realized.get('accuracy')}")
        return SweepResult(
            kind=config.kind,
            levels=tuple(levels),
            repetitions=config.repetitions,
            seed=config.seed,
            methods=methods,
            metrics=tuple(config.metrics),
        )


def run_sweep(
    kind: str, config: SweepConfig, val: ScoreSet, pools: ShiftPools, methods: Optional[Iterable[str]] = None
) -> SweepResult:
    """
    Run a prevalence or covariate shift sweep

    For every level and repetition a test set is constructed with a seed derived from
    (config.seed, level index, repetition), all methods are run and the realized metrics,
    RBS and ACE recorded; results are averaged per level.

    Args:
        kind: 'prevalence' or 'covariate'
        config: Sweep settings (its kind must match)
        val: Labelled validation set
        pools: Pools to draw test sets from
        methods: Overrides config.methods when given

    Returns:
        SweepResult
    """
    if config.kind != kind:
        config = replace(config, kind=kind)
    if methods is not None:
        config = replace(config, methods=tuple(methods))
    return ShiftSweep(config, val, pools).run()


def synthetic_sweep_inputs(
    kind: str,
    seed: int = DEFAULT_SEED,
    pool_size: int = DEFAULT_POOL_SIZE,
    val_size: int = DEFAULT_VAL_SIZE,
    reference_prevalence: float = DEFAULT_REFERENCE_PREVALENCE,
    latent: LatentLaw = LatentLaw(),
    distortion: float = 1.0,
    groups: Tuple[GroupSpec, GroupSpec] = DEFAULT_GROUPS,
    val_majority_fraction: float = DEFAULT_VAL_MAJORITY_FRACTION,
    threshold: float = DEFAULT_THRESHOLD,
) -> Tuple[ScoreSet, ShiftPools]:
    """
    Validation set and pools for a generator-backed sweep

    Prevalence sweeps draw a validation set and a pool at the reference prevalence. Covariate
    sweeps draw one pool per group and a validation set mixed at val_majority_fraction.

    Returns:
        Tuple (validation set, pools)
    """
    if kind == "prevalence":
        common = dict(prevalence=reference_prevalence, latent=latent, distortion=distortion, threshold=threshold)
        val = generate_synthetic(GeneratorSpec(n=val_size, seed=_stream_seed(seed, 0), **common))
        pool = generate_synthetic(GeneratorSpec(n=pool_size, seed=_stream_seed(seed, 1), **common))
        return val, ShiftPools(pool=pool)
    if kind == "covariate":
        major_spec, minor_spec = groups
        majority = generate_synthetic(
            GeneratorSpec(n=pool_size, latent=major_spec.latent, distortion=major_spec.distortion,
                          seed=_stream_seed(seed, 2), threshold=threshold)
        ).with_groups(MAJORITY)
        minority = generate_synthetic(
            GeneratorSpec(n=pool_size, latent=minor_spec.latent, distortion=minor_spec.distortion,
                          seed=_stream_seed(seed, 3), threshold=threshold)
        ).with_groups(MINORITY)
        val = mix_groups(
            majority, minority, val_majority_fraction, val_size, _stream_seed(seed, 4),
            reference_prevalence=reference_prevalence,
        )
        return val, ShiftPools(majority=majority, minority=minority)
    raise ValueError(f"Unknown sweep kind: {kind}")
