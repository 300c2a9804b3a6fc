"""
Utility functions for blockvit.

This module provides common utility functions for:
- Logging configuration
- Configuration file loading, environment substitution and precedence resolution
- JSON schema validation of sidecars and manifests
- Small file helpers
- Running per-file batch work with optional parallelism
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar, Union

import yaml
from dotenv import dotenv_values, load_dotenv
from jsonschema import ValidationError, validate
from tqdm import tqdm

from app.error_handler import ConfigurationError, DataFormatError
from config import DEFAULTS
from config import setup_logging as _configure_logging

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_TRUE_STRINGS = {"1", "true", "yes", "on"}
_FALSE_STRINGS = {"0", "false", "no", "off"}


def setup_logging(log_level: Union[int, str] = logging.INFO, log_file: Optional[str] = None) -> None:
    """
    Setup logging for the CLI and library use.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional log file path
    """
    _configure_logging(log_level, log_file)


def load_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load a run configuration file with environment variable substitution.

    YAML files (.yaml/.yml) must contain a flat mapping; any other file is read as
    flat ``key=value`` text.

    Args:
        config_path: Path to the configuration file

    Returns:
        Dict[str, Any]: Parsed configuration dictionary

    Raises:
        FileNotFoundError: If config file doesn't exist
        ConfigurationError: If the file is not a flat mapping
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    try:
        if config_path.suffix.lower() in (".yaml", ".yml"):
            with open(config_path, "r", encoding="utf-8") as file:
                config = yaml.safe_load(file) or {}
        else:
            config = dict(dotenv_values(config_path))
    except yaml.YAMLError as e:
        logger.error(f"Invalid YAML in configuration file {config_path}: {e}")
        raise ConfigurationError(f"Invalid YAML in configuration file {config_path}", original_error=e)

    if not isinstance(config, dict):
        raise ConfigurationError(f"Configuration file {config_path} must contain a flat key/value mapping")
    nested = [key for key, value in config.items() if isinstance(value, (dict, list))]
    if nested:
        raise ConfigurationError(f"Configuration keys must be flat, nested values found for: {nested}")

    config = {str(key).replace("-", "_"): value for key, value in apply_env_variables(config).items()}
    logger.info(f"Configuration loaded from {config_path}")
    return config


def apply_env_variables(config: Any) -> Any:
    """
    Recursively replace environment variable placeholders in configuration.

    Supports ``${VAR}`` and ``${VAR:default}``.
    """
    if isinstance(config, dict):
        return {key: apply_env_variables(value) for key, value in config.items()}
    elif isinstance(config, list):
        return [apply_env_variables(item) for item in config]
    elif isinstance(config, str) and config.startswith("${") and config.endswith("}"):
        env_var = config[2:-1]
        default_value = None

        if ":" in env_var:
            env_var, default_value = env_var.split(":", 1)

        value = os.getenv(env_var, default_value)
        if value is None:
            logger.warning(f"Environment variable {env_var} is not set and no default provided")
            return config

        return value
    else:
        return config


def coerce_value(value: Any, like: Any) -> Any:
    """Coerce a config-file value to the type of its default."""
    if value is None or like is None:
        return value
    if isinstance(like, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE_STRINGS:
            return True
        if text in _FALSE_STRINGS:
            return False
        raise ConfigurationError(f"Invalid boolean value in config: {value!r}")
    if isinstance(value, type(like)) and not isinstance(value, bool):
        return value
    try:
        return type(like)(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Invalid config value {value!r}, expected {type(like).__name__}", original_error=e)


def resolve_run_config(
    flags: Dict[str, Any],
    config_file: Optional[Union[str, Path]] = None,
    keys: Optional[Iterable[str]] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Resolve the effective configuration of a subcommand.

    Precedence: explicit flag (not None) > config file > DEFAULTS.

    Args:
        flags: Parsed command-line flags; None means "not given"
        config_file: Optional YAML or key=value file
        keys: Restrict the result to these keys (defaults to the flag names)
        defaults: Fallback values overriding DEFAULTS (for example the stages of a preset)

    Returns:
        Dict[str, Any]: Resolved configuration
    """
    file_values = load_config(config_file) if config_file else {}
    fallback = {**DEFAULTS, **(defaults or {})}
    unknown = sorted(set(file_values) - set(fallback) - set(flags))
    if unknown:
        logger.warning(f"Ignoring unknown configuration keys: {unknown}")

    selected = list(keys) if keys is not None else list(flags)
    resolved: Dict[str, Any] = {}
    for key in selected:
        default = fallback.get(key)
        if flags.get(key) is not None:
            resolved[key] = flags[key]
        elif key in file_values:
            resolved[key] = coerce_value(file_values[key], default)
        else:
            resolved[key] = default
    return resolved


def write_run_config(config: Dict[str, Any], out_dir: Union[str, Path], command: str) -> Path:
    """Log the resolved configuration and record it as run-config.json in the output directory."""
    record = {"command": command, **{key: _jsonable(value) for key, value in config.items()}}
    logger.info(f"Resolved configuration for {command}: {record}")
    return save_json(record, Path(out_dir) / "run-config.json")


def validate_data_schema(data: Union[Dict, List], schema: Dict[str, Any], source: Optional[str] = None) -> None:
    """
    Validate data against a JSON schema.

    Raises:
        DataFormatError: If data doesn't match schema
    """
    try:
        validate(instance=data, schema=schema)
    except ValidationError as e:
        logger.error(f"Data schema validation failed for {source or 'document'}: {e.message}")
        raise DataFormatError(
            f"JSON schema validation failed for {source or 'document'}: {e.message}",
            original_error=e,
            context={"file_path": source},
        )


def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure a directory exists, creating it if necessary."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_json(data: Any, file_path: Union[str, Path]) -> Path:
    """Write JSON with a stable layout, creating parent directories."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write("\n")
    return file_path


def load_json(file_path: Union[str, Path]) -> Any:
    """Read a JSON document, reporting parse errors as DataFormatError."""
    file_path = Path(file_path)
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"Invalid JSON in {file_path}: {e}", original_error=e, context={"file_path": str(file_path)})


def run_batch(
    func: Callable[[T], R], items: Sequence[T], jobs: int = 1, desc: str = "Processing", unit: str = "file"
) -> List[Union[R, Exception]]:
    """
    Apply ``func`` to every item, continuing past failures.

    Results come back in input order; a failed item yields its exception instead of a
    result so callers can report it and carry on. With ``jobs > 1`` items run on a thread
    pool; the caller stays the only writer of shared outputs.
    """

    def _guarded(item: T) -> Union[R, Exception]:
        try:
            return func(item)
        except Exception as e:  # noqa: BLE001 - batch semantics: report and continue
            logger.error(f"{desc} failed for {item}: {e}")
            return e

    if jobs <= 1 or len(items) <= 1:
        return [_guarded(item) for item in tqdm(items, desc=desc, unit=unit, disable=len(items) < 2)]

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(tqdm(pool.map(_guarded, items), total=len(items), desc=desc, unit=unit))


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value
