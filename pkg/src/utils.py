"""
Utility functions for the label-free performance monitor
Configuration loading, logging setup, environment access and output writers
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import pandas as pd
import yaml
from dotenv import load_dotenv


FLOAT_FORMAT = "%.12g"
UNDEFINED = "undefined"
DEFAULT_SEED = 20240917

ESTIMATION_METHODS = ("cbpe", "cm_atc", "cm_doc", "naive_atc", "naive_doc")
METHOD_ALIASES = {"atc": "naive_atc", "doc": "naive_doc"}
CALIBRATION_MODES = ("none", "ts", "csts")
SWEEP_KINDS = ("prevalence", "covariate")

# Flat configuration keys; each one mirrors a long CLI flag (ace_bins <-> --ace-bins)
CONFIG_KEYS = {
    "val", "test", "pool", "majority", "minority", "out", "threshold", "methods", "metrics",
    "calibration", "calibration_file", "ace_bins", "seed", "format", "include_auc", "workers",
    "kind", "levels", "repetitions", "n", "pool_size", "val_size", "reference_prevalence",
    "prevalence", "latent", "distortion", "groups", "majority_fraction",
    "majority_latent", "majority_distortion", "minority_latent", "minority_distortion",
    "logging",
}
LIST_KEYS = {"methods", "metrics", "levels", "test"}


def load_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load configuration from a YAML, JSON (run manifest) or key=value file

    Args:
        config_path: Path to the configuration file

    Returns:
        Dictionary containing configuration data
    """
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    suffix = path.suffix.lower()
    if suffix in (".yaml", ".yml"):
        try:
            config = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ValueError(f"Error parsing configuration file: {e}")
    elif suffix == ".json":
        try:
            config = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValueError(f"Error parsing configuration file: {e}")
        # A run manifest carries the resolved configuration under 'config'
        if isinstance(config, dict) and "config" in config and "artifact_version" in config:
            config = config["config"]
    else:
        config = parse_key_value_config(text)

    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ValueError(f"Configuration file must contain a mapping: {config_path}")
    return config


def parse_key_value_config(text: str) -> Dict[str, Any]:
    """
    Parse a line-based key=value configuration

    Values are typed with YAML scalar rules, so '0.5' is a float, 'true' a bool
    and '[a, b]' a list.

    Args:
        text: Raw configuration text

    Returns:
        Dictionary of parsed values
    """
    config: Dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Error parsing configuration file: line {line_number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"Error parsing configuration file: line {line_number}: empty key")
        try:
            config[key] = yaml.safe_load(value) if value else None
        except yaml.YAMLError:
            config[key] = value
    return config


def normalize_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Normalise list-valued keys and method aliases

    Comma-separated strings become lists and 'atc'/'doc' become the naive method tags.

    Args:
        config: Raw configuration dictionary

    Returns:
        New dictionary with normalised values
    """
    normalized = dict(config)
    for key in LIST_KEYS:
        value = normalized.get(key)
        if isinstance(value, str):
            normalized[key] = [item.strip() for item in value.split(",") if item.strip()]
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            normalized[key] = [value]
    if normalized.get("methods"):
        normalized["methods"] = [METHOD_ALIASES.get(m, m) for m in normalized["methods"]]
    if normalized.get("levels"):
        normalized["levels"] = [float(level) for level in normalized["levels"]]
    return normalized


def validate_config(config: Dict[str, Any]) -> bool:
    """
    Validate configuration keys and value ranges

    Args:
        config: Configuration dictionary to validate

    Returns:
        True if configuration is valid

    Raises:
        ValueError: If configuration is invalid
    """
    for key in config:
        if key not in CONFIG_KEYS:
            raise ValueError(f"Unknown configuration key: {key}")

    def _in_unit(key: str, closed: bool = True) -> None:
        value = config.get(key)
        if value is None:
            return
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"Configuration key '{key}' must be a number")
        if closed and not 0.0 <= value <= 1.0:
            raise ValueError(f"Configuration key '{key}' must lie in [0, 1]")
        if not closed and not 0.0 < value < 1.0:
            raise ValueError(f"Configuration key '{key}' must lie in (0, 1)")

    def _positive_int(key: str) -> None:
        value = config.get(key)
        if value is None:
            return
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ValueError(f"Configuration key '{key}' must be a positive integer")

    def _positive(key: str) -> None:
        value = config.get(key)
        if value is None:
            return
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ValueError(f"Configuration key '{key}' must be positive")

    _in_unit("threshold")
    _in_unit("majority_fraction")
    _in_unit("reference_prevalence", closed=False)
    _in_unit("prevalence", closed=False)
    for key in ("ace_bins", "repetitions", "n", "pool_size", "val_size", "workers"):
        _positive_int(key)
    for key in ("distortion", "majority_distortion", "minority_distortion"):
        _positive(key)

    methods = config.get("methods")
    if methods is not None:
        for method in methods:
            if method not in ESTIMATION_METHODS:
                raise ValueError(f"Unknown estimation method in 'methods': {method}")

    calibration = config.get("calibration")
    if calibration is not None and calibration not in CALIBRATION_MODES:
        raise ValueError(f"Configuration key 'calibration' must be one of {', '.join(CALIBRATION_MODES)}")

    kind = config.get("kind")
    if kind is not None and kind not in SWEEP_KINDS:
        raise ValueError(f"Configuration key 'kind' must be one of {', '.join(SWEEP_KINDS)}")

    levels = config.get("levels")
    if levels is not None:
        if not levels:
            raise ValueError("Configuration key 'levels' must not be empty")
        for level in levels:
            if not 0.0 <= float(level) <= 1.0:
                raise ValueError(f"Sweep level outside [0, 1]: {level}")

    output_format = config.get("format")
    if output_format is not None and output_format not in ("csv", "json", "both"):
        raise ValueError("Configuration key 'format' must be one of csv, json, both")

    return True


def setup_logging(config: Dict[str, Any]) -> logging.Logger:
    """
    Set up logging configuration

    Args:
        config: Configuration dictionary (reads the optional 'logging' section)

    Returns:
        Configured logger instance
    """
    log_config = config.get("logging") or {}
    level_name = str(log_config.get("level", "INFO")).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    handlers: list = [logging.StreamHandler()]
    log_file = log_config.get("file")
    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )

    logger = logging.getLogger("labelfree_monitor")
    return logger


def load_environment() -> None:
    """Load environment variables from .env file"""
    load_dotenv()


def get_env_variable(var_name: str, default: Optional[str] = None) -> str:
    """
    Get environment variable with optional default

    Args:
        var_name: Name of the environment variable
        default: Default value if variable is not found

    Returns:
        Environment variable value

    Raises:
        ValueError: If variable is not found and no default provided
    """
    value = os.getenv(var_name, default)
    if value is None:
        raise ValueError(f"Environment variable {var_name} not found")
    return value


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for non-negative input"""
    return int(math.floor(value + 0.5))


def format_metric(value: Optional[float]) -> str:
    """
    Format a metric value for display

    Args:
        value: Metric value, None when undefined

    Returns:
        Formatted value or the literal 'undefined'
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return UNDEFINED
    return FLOAT_FORMAT % value


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """
    Write a DataFrame as CSV with the fixed float format and LF line endings

    Args:
        frame: Table to write
        path: Destination file

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=UNDEFINED, lineterminator="\n")
    return path


def write_json(data: Any, path: Union[str, Path]) -> Path:
    """
    Write JSON deterministically (sorted keys, two-space indent)

    Args:
        data: JSON-serialisable object
        path: Destination file

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def frame_records(frame: pd.DataFrame) -> Iterable[Dict[str, Any]]:
    """Convert a DataFrame to JSON-ready records, NaN becoming 'undefined'"""
    for record in frame.to_dict(orient="records"):
        yield {
            key: (UNDEFINED if isinstance(value, float) and math.isnan(value) else value)
            for key, value in record.items()
        }
