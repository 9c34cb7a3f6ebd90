"""
Benchmark runner and command-line front-end
Ties score ingestion, calibration, estimation, shift simulation and MAE reporting
into reproducible runs that write plot-ready CSV files and a manifest
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from src import __version__
from src.calibration import TemperatureFit, apply_temperature, calibration_report, fit_temperature
from src.estimators import EstimationResult, estimate_all
from src.realized import (
    DEFAULT_ACE_BINS,
    METRIC_NAMES,
    adaptive_calibration_error,
    calibration_by_group,
    root_brier_score,
)
from src.scores import DEFAULT_THRESHOLD, ScoreSet, load_scores, write_scores
from src.shiftsim import (
    DEFAULT_POOL_SIZE,
    DEFAULT_REFERENCE_PREVALENCE,
    DEFAULT_REPETITIONS,
    DEFAULT_SAMPLE_SIZE,
    DEFAULT_VAL_MAJORITY_FRACTION,
    DEFAULT_VAL_SIZE,
    GeneratorSpec,
    GroupSpec,
    LatentLaw,
    ShiftPools,
    SweepConfig,
    comparison_rows,
    generate_synthetic,
    mae_report,
    realized_report,
    run_sweep,
    synthetic_sweep_inputs,
)
from src.utils import (
    CALIBRATION_MODES,
    DEFAULT_SEED,
    ESTIMATION_METHODS,
    SWEEP_KINDS,
    frame_records,
    get_env_variable,
    load_config,
    load_environment,
    normalize_config,
    setup_logging,
    validate_config,
    write_frame,
    write_json,
)

COMMANDS = ("estimate", "simulate", "generate", "calibrate", "evaluate")
OUTPUT_FORMATS = ("csv", "json", "both")
CONFIG_ENV = "LABELFREE_CONFIG"
LOG_LEVEL_ENV = "LABELFREE_LOG_LEVEL"

ESTIMATE_COLUMNS = ["method", "metric", "estimate", "status", "clipped", "message"]
CONFUSION_COLUMNS = ["method", "tp", "fp", "tn", "fn", "n_pos", "n_neg"]
REALIZED_COLUMNS = ["dataset", "metric", "value"]
GROUP_CALIBRATION_COLUMNS = ["dataset", "group", "n", "rbs", "ace"]


@dataclass
class RunConfig:
    """
    Resolved settings of one CLI run

    Every field except `command` mirrors a flat configuration key and a long CLI flag.
    Precedence: defaults < configuration file < environment < flags.
    """

    command: str
    val: Optional[str] = None
    test: List[str] = field(default_factory=list)
    pool: Optional[str] = None
    majority: Optional[str] = None
    minority: Optional[str] = None
    out: str = "out"
    threshold: float = DEFAULT_THRESHOLD
    methods: List[str] = field(default_factory=lambda: list(ESTIMATION_METHODS))
    metrics: List[str] = field(default_factory=lambda: list(METRIC_NAMES))
    calibration: str = "none"
    calibration_file: Optional[str] = None
    ace_bins: int = DEFAULT_ACE_BINS
    seed: int = DEFAULT_SEED
    format: str = "csv"
    include_auc: bool = True
    workers: int = 1
    kind: str = "prevalence"
    levels: Optional[List[float]] = None
    repetitions: int = DEFAULT_REPETITIONS
    n: int = DEFAULT_SAMPLE_SIZE
    pool_size: int = DEFAULT_POOL_SIZE
    val_size: int = DEFAULT_VAL_SIZE
    reference_prevalence: float = DEFAULT_REFERENCE_PREVALENCE
    prevalence: Optional[float] = None
    latent: str = "uniform"
    distortion: float = 1.0
    groups: bool = False
    majority_fraction: float = DEFAULT_VAL_MAJORITY_FRACTION
    majority_latent: str = "beta(0.5,0.5)"
    majority_distortion: float = 1.0
    minority_latent: str = "beta(5,5)"
    minority_distortion: float = 2.0
    logging: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_sources(
        cls, command: str, file_config: Optional[Dict[str, Any]] = None, flags: Optional[Dict[str, Any]] = None
    ) -> "RunConfig":
        """
        Merge configuration file values and CLI flags over the defaults

        Args:
            command: Subcommand name
            file_config: Values from the configuration file
            flags: Values given on the command line (None means not given)

        Returns:
            Validated RunConfig

        Raises:
            ValueError: On unknown keys or invalid values
        """
        if command not in COMMANDS:
            raise ValueError(f"Unknown command: {command}")
        merged: Dict[str, Any] = dict(file_config or {})
        log_level = get_env_variable(LOG_LEVEL_ENV, "")
        if log_level:
            merged["logging"] = {**(merged.get("logging") or {}), "level": log_level}
        for key, value in (flags or {}).items():
            if value is not None:
                merged[key] = value
        merged = normalize_config(merged)
        if merged.get("logging") is None:
            merged.pop("logging", None)
        validate_config(merged)

        metrics = merged.get("metrics")
        if metrics is not None:
            unknown = [metric for metric in metrics if metric not in METRIC_NAMES]
            if unknown:
                raise ValueError(f"Unknown metric in 'metrics': {', '.join(unknown)}")
        if merged.get("test") is not None:
            merged["test"] = [str(path) for path in merged["test"]]
        return cls(command=command, **merged)

    def check_paths(self) -> None:
        """
        Raises:
            FileNotFoundError: If a referenced input file does not exist
        """
        for path in [self.val, self.pool, self.majority, self.minority, self.calibration_file, *self.test]:
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"Input file not found: {path}")

    def to_manifest(self) -> Dict[str, Any]:
        """Resolved configuration without the logging section"""
        data = asdict(self)
        data.pop("command")
        data.pop("logging")
        return data


class MonitorBench:
    """Runs one CLI subcommand and writes its report files"""

    def __init__(self, config: RunConfig):
        """
        Initialize the benchmark runner

        Args:
            config: Resolved run configuration
        """
        self.config = config
        self.out_dir = Path(config.out)
        self.outputs: List[str] = []
        self.logger = logging.getLogger(__name__)

    def run(self) -> None:
        """Validate inputs, dispatch to the subcommand and write the manifest"""
        self.config.check_paths()
        handler = getattr(self, f"run_{self.config.command}")
        handler()
        self.write_manifest()
        self.logger.info(f"{self.config.command} finished; {len(self.outputs)} files written to {self.out_dir}")

    # --- output helpers -------------------------------------------------

    def _write_table(self, frame: pd.DataFrame, name: str) -> None:
        if self.config.format in ("csv", "both"):
            write_frame(frame, self.out_dir / f"{name}.csv")
            self.outputs.append(f"{name}.csv")
        if self.config.format in ("json", "both"):
            write_json(list(frame_records(frame)), self.out_dir / f"{name}.json")
            self.outputs.append(f"{name}.json")

    def write_manifest(self) -> Path:
        manifest = {
            "artifact_version": __version__,
            "command": self.config.command,
            "seed": self.config.seed,
            "config": self.config.to_manifest(),
            "outputs": sorted(self.outputs),
        }
        return write_json(manifest, self.out_dir / "manifest.json")

    # --- inputs ---------------------------------------------------------

    def _load(self, path: str) -> ScoreSet:
        score_set = load_scores(path, threshold=self.config.threshold)
        self.logger.info(f"Loaded {len(score_set)} records from {path}")
        return score_set

    def _load_val(self) -> ScoreSet:
        if self.config.val is None:
            raise ValueError(f"{self.config.command} needs a labelled validation set (--val)")
        val = self._load(self.config.val)
        val.require_labels("label-free estimation (validation set must be fully labelled)")
        return val

    def _dataset_names(self) -> List[str]:
        names: List[str] = []
        for path in self.config.test:
            stem = Path(path).stem
            names.append(stem if stem not in names else f"{stem}_{len(names)}")
        return names

    def _temperature_fit(self, val: ScoreSet) -> Optional[TemperatureFit]:
        if self.config.calibration_file:
            fit = TemperatureFit.load(self.config.calibration_file)
            self.logger.info(f"Loaded {fit.mode} temperature scaling from {self.config.calibration_file}")
            return fit
        if self.config.calibration == "none":
            return None
        return fit_temperature(val, self.config.calibration)

    def _calibrated(self, val: ScoreSet, others: Sequence[Optional[ScoreSet]]) -> Tuple[ScoreSet, List[Optional[ScoreSet]]]:
        fit = self._temperature_fit(val)
        if fit is None:
            return val, list(others)
        return apply_temperature(val, fit), [None if s is None else apply_temperature(s, fit) for s in others]

    # --- subcommands ----------------------------------------------------

    def _estimate_one(self, val: ScoreSet, test: ScoreSet) -> List[EstimationResult]:
        return estimate_all(
            self.config.methods, val, test, metrics=self.config.metrics, include_auc=self.config.include_auc
        )

    def _realized_rows(self, dataset: str, test: ScoreSet) -> List[Dict[str, Any]]:
        report = realized_report(test, self.config.metrics)
        rows = [{"dataset": dataset, "metric": name, "value": report.get(name)} for name in self.config.metrics]
        rows.append({"dataset": dataset, "metric": "rbs", "value": root_brier_score(test)})
        ace = adaptive_calibration_error(test, self.config.ace_bins) if len(test) >= self.config.ace_bins else None
        rows.append({"dataset": dataset, "metric": "ace", "value": ace})
        return rows

    def run_estimate(self) -> None:
        """estimates.csv and confusion.csv; realized.csv and mae.csv when the test set is labelled"""
        if len(self.config.test) != 1:
            raise ValueError("estimate needs exactly one test set (--test)")
        val = self._load_val()
        test = self._load(self.config.test[0])
        val, (test,) = self._calibrated(val, [test])
        results = self._estimate_one(val, test)

        rows = [row for result in results for row in result.to_rows()]
        self._write_table(_numeric(pd.DataFrame(rows, columns=ESTIMATE_COLUMNS), ["estimate"]), "estimates")
        confusion = [
            {"method": r.method, **r.cm.to_dict(), "n_pos": r.cm.n_pos, "n_neg": r.cm.n_neg}
            for r in results
            if r.cm is not None
        ]
        self._write_table(pd.DataFrame(confusion, columns=CONFUSION_COLUMNS), "confusion")

        if test.labelled:
            dataset = self._dataset_names()[0]
            realized_rows = self._realized_rows(dataset, test)
            self._write_table(_numeric(pd.DataFrame(realized_rows, columns=REALIZED_COLUMNS), ["value"]), "realized")
            realized = realized_report(test, self.config.metrics)
            pairs = comparison_rows(realized, results, dataset=dataset)
            try:
                self._write_table(mae_report(pairs, group_by=("dataset", "method", "metric")), "mae")
            except ValueError as e:
                self.logger.warning(f"mae.csv not written: {e}")
        else:
            self.logger.info("Test set is unlabelled; skipping realized metrics and MAE")

    def run_evaluate(self) -> None:
        """MAE of every method on one or more labelled test sets"""
        if not self.config.test:
            raise ValueError("evaluate needs at least one labelled test set (--test)")
        val = self._load_val()
        tests = [self._load(path) for path in self.config.test]
        for path, test in zip(self.config.test, tests):
            test.require_labels(f"evaluation of {path}")
        val, tests = self._calibrated(val, tests)

        pairs: List[Dict[str, Any]] = []
        realized_rows: List[Dict[str, Any]] = []
        group_rows: List[Dict[str, Any]] = []
        for dataset, test in zip(self._dataset_names(), tests):
            results = self._estimate_one(val, test)
            pairs.extend(comparison_rows(realized_report(test, self.config.metrics), results, dataset=dataset))
            realized_rows.extend(self._realized_rows(dataset, test))
            ace = adaptive_calibration_error(test, self.config.ace_bins) if len(test) >= self.config.ace_bins else None
            group_rows.append({"dataset": dataset, "group": "all", "n": len(test), "rbs": root_brier_score(test), "ace": ace})
            if test.has_groups:
                for group, values in calibration_by_group(test, self.config.ace_bins).items():
                    group_rows.append({"dataset": dataset, "group": group, **values})
            self.logger.info(f"Evaluated {len(results)} methods on {dataset}")

        self._write_table(mae_report(pairs, group_by=("dataset", "method", "metric")), "mae")
        self._write_table(mae_report(pairs, group_by=("method", "metric")), "mae_summary")
        self._write_table(_numeric(pd.DataFrame(realized_rows, columns=REALIZED_COLUMNS), ["value"]), "realized")
        self._write_table(_numeric(pd.DataFrame(group_rows, columns=GROUP_CALIBRATION_COLUMNS), ["rbs", "ace"]), "calibration")

    def run_calibrate(self) -> None:
        """Fit temperature scaling on the validation set and report RBS/ACE before and after"""
        mode = "ts" if self.config.calibration == "none" else self.config.calibration
        val = self._load_val()
        fit = fit_temperature(val, mode)
        fit.save(self.out_dir / "calibration.json")
        self.outputs.append("calibration.json")

        sets = {Path(self.config.val).stem: val}
        for dataset, path in zip(self._dataset_names(), self.config.test):
            test = self._load(path)
            if test.labelled:
                sets[dataset] = test
            else:
                self.logger.warning(f"{path} is unlabelled; left out of the calibration report")
        self._write_table(calibration_report(sets, fit, self.config.ace_bins), "calibration_report")

    def _generator_groups(self) -> Tuple[GroupSpec, GroupSpec]:
        return (
            GroupSpec(LatentLaw.parse(self.config.majority_latent), self.config.majority_distortion),
            GroupSpec(LatentLaw.parse(self.config.minority_latent), self.config.minority_distortion),
        )

    def run_generate(self) -> None:
        """Write a synthetic labelled score file"""
        spec = GeneratorSpec(
            n=self.config.n,
            prevalence=self.config.prevalence,
            latent=LatentLaw.parse(self.config.latent),
            distortion=self.config.distortion,
            groups=self._generator_groups() if self.config.groups else None,
            majority_fraction=self.config.majority_fraction,
            seed=self.config.seed,
            threshold=self.config.threshold,
        )
        write_scores(generate_synthetic(spec), self.out_dir / "scores.csv")
        self.outputs.append("scores.csv")

    def _sweep_inputs(self) -> Tuple[ScoreSet, ShiftPools]:
        config = self.config
        if config.kind == "prevalence" and config.pool:
            pools = ShiftPools(pool=self._load(config.pool))
        elif config.kind == "covariate" and config.majority and config.minority:
            pools = ShiftPools(majority=self._load(config.majority), minority=self._load(config.minority))
        else:
            self.logger.info(f"No {config.kind} pools given; drawing them from the synthetic generator")
            val, pools = synthetic_sweep_inputs(
                config.kind,
                seed=config.seed,
                pool_size=config.pool_size,
                val_size=config.val_size,
                reference_prevalence=config.reference_prevalence,
                latent=LatentLaw.parse(config.latent),
                distortion=config.distortion,
                groups=self._generator_groups(),
                val_majority_fraction=config.majority_fraction,
                threshold=config.threshold,
            )
            if config.val:
                val = self._load_val()
            return val, pools
        return self._load_val(), pools

    def run_simulate(self) -> None:
        """Prevalence or covariate sweep: sweep.csv, sweep_summary.csv and sweep_mae.csv"""
        config = self.config
        val, pools = self._sweep_inputs()
        val, (pool, majority, minority) = self._calibrated(val, [pools.pool, pools.majority, pools.minority])
        pools = ShiftPools(pool=pool, majority=majority, minority=minority)

        sweep = SweepConfig(
            kind=config.kind,
            levels=tuple(config.levels or ()),
            repetitions=config.repetitions,
            n=config.n,
            methods=tuple(config.methods),
            metrics=tuple(config.metrics),
            ace_bins=config.ace_bins,
            seed=config.seed,
            reference_prevalence=config.reference_prevalence,
            include_auc=config.include_auc,
            workers=config.workers,
        )
        result = run_sweep(config.kind, sweep, val, pools)
        self._write_table(_numeric(result.to_long_frame(), ["realized", "estimated", "ace"]), "sweep")
        self._write_table(result.summary_frame(), "sweep_summary")
        self._write_table(result.mae_frame(), "sweep_mae")


def _numeric(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Coerce value columns to float so undefined entries become NaN and floats share one format"""
    frame = frame.copy()
    for column in columns:
        frame[column] = pd.to_numeric(frame[column], errors="coerce").astype(float)
    return frame


def _add_flag(parser: argparse.ArgumentParser, key: str, **kwargs: Any) -> None:
    parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command; long flags mirror configuration keys"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help=f"Configuration file (YAML, JSON manifest or key=value; default ${CONFIG_ENV})")
    common.add_argument("--log-level", dest="log_level", default=None, help="Logging level (DEBUG, INFO, ...)")
    _add_flag(common, "out", type=str, help="Output directory (default: out)")
    _add_flag(common, "threshold", type=float, help="Decision threshold t (default: 0.5)")
    _add_flag(common, "seed", type=int, help=f"Master seed (default: {DEFAULT_SEED})")
    _add_flag(common, "format", choices=OUTPUT_FORMATS, help="Write CSV, JSON or both (default: csv)")
    _add_flag(common, "ace_bins", type=int, help=f"Equal-frequency bins for ACE (default: {DEFAULT_ACE_BINS})")

    inputs = argparse.ArgumentParser(add_help=False)
    _add_flag(inputs, "val", type=str, help="Labelled validation scores (CSV or JSONL)")
    _add_flag(inputs, "test", type=str, nargs="+", help="Test scores; labels optional for estimate")
    _add_flag(inputs, "calibration", choices=CALIBRATION_MODES, help="Temperature scaling fitted on --val")
    _add_flag(inputs, "calibration_file", type=str, help="Apply a saved calibration.json instead of fitting")

    estimation = argparse.ArgumentParser(add_help=False)
    _add_flag(estimation, "methods", type=str, help="Comma-separated methods (cbpe,cm_atc,cm_doc,naive_atc,naive_doc)")
    _add_flag(estimation, "metrics", type=str, help="Comma-separated metrics (default: all)")
    estimation.add_argument("--no-auc", dest="include_auc", action="store_const", const=False, default=None, help="Skip AUC estimation")

    generator = argparse.ArgumentParser(add_help=False)
    _add_flag(generator, "n", type=int, help="Records per generated or resampled set")
    _add_flag(generator, "prevalence", type=float, help="Target prevalence of generated scores")
    _add_flag(generator, "latent", type=str, help="Latent law: uniform or beta(a,b)")
    _add_flag(generator, "distortion", type=float, help="Score distortion (1 = calibrated, >1 = overconfident)")
    generator.add_argument("--groups", dest="groups", action="store_const", const=True, default=None, help="Generate majority/minority groups")
    _add_flag(generator, "majority_fraction", type=float, help="Majority share (generate) or validation majority share (simulate)")
    _add_flag(generator, "majority_latent", type=str, help="Majority latent law")
    _add_flag(generator, "majority_distortion", type=float, help="Majority score distortion")
    _add_flag(generator, "minority_latent", type=str, help="Minority latent law")
    _add_flag(generator, "minority_distortion", type=float, help="Minority score distortion")

    parser = argparse.ArgumentParser(
        prog="labelfree-monitor",
        description="Label-free performance estimation for binary classifiers",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run.py estimate --val val.csv --test test.csv --out out/
  python run.py simulate --kind prevalence --repetitions 50 --out out/sweep
  python run.py generate --n 1000 --distortion 2 --out out/gen
  python run.py calibrate --val val.csv --calibration csts --out out/cal
  python run.py evaluate --val val.csv --test id.csv ood.csv --out out/eval
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("estimate", parents=[common, inputs, estimation], help="Estimate metrics on a test set")
    subparsers.add_parser("evaluate", parents=[common, inputs, estimation], help="MAE of estimators on labelled test sets")
    subparsers.add_parser("calibrate", parents=[common, inputs], help="Fit temperature scaling on --val")
    subparsers.add_parser("generate", parents=[common, generator], help="Write synthetic scores")

    simulate = subparsers.add_parser("simulate", parents=[common, inputs, estimation, generator], help="Run a shift sweep")
    _add_flag(simulate, "kind", choices=SWEEP_KINDS, help="Sweep axis (default: prevalence)")
    _add_flag(simulate, "levels", type=str, help="Comma-separated axis levels")
    _add_flag(simulate, "repetitions", type=int, help=f"Repetitions per level (default: {DEFAULT_REPETITIONS})")
    _add_flag(simulate, "workers", type=int, help="Parallel workers (default: 1)")
    _add_flag(simulate, "pool", type=str, help="Labelled pool for prevalence resampling")
    _add_flag(simulate, "majority", type=str, help="Labelled majority pool for covariate mixing")
    _add_flag(simulate, "minority", type=str, help="Labelled minority pool for covariate mixing")
    _add_flag(simulate, "pool_size", type=int, help="Generated pool size")
    _add_flag(simulate, "val_size", type=int, help="Generated validation set size")
    _add_flag(simulate, "reference_prevalence", type=float, help="Prevalence held fixed (default: 0.38)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Command-line entry point

    Returns:
        0 on success, 2 on invalid input, 1 on internal error
    """
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config") or None
    log_level = args.pop("log_level")

    load_environment()
    logger = logging.getLogger("labelfree_monitor")
    try:
        config_path = config_path or get_env_variable(CONFIG_ENV, "") or None
        file_config = load_config(config_path) if config_path else {}
        config = RunConfig.from_sources(command, file_config, args)
        if log_level:
            config.logging = {**config.logging, "level": log_level}
        logger = setup_logging({"logging": config.logging})
        MonitorBench(config).run()
        return 0
    except (ValueError, FileNotFoundError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1
