"""Sectioned ``key = value`` run files <-> RunConfig.

Layout::

    [train]
    iterations = 300
    [dataset.cityscapes]
    root = data/train
    [synthetic.cityscapes.train]
    classes = 0,2,8,10,13

Values are coerced and validated by the pydantic schemas; lists are comma separated.
"""
import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from pydantic import ValidationError

from app.exceptions import ConfigError
from app.schemas.config_schemas import RunConfig
from settings.config import settings

logger = logging.getLogger(__name__)

_PLAIN_SECTIONS = ("augment", "sampler", "model", "train", "eval")


def _parse_sections(parser: configparser.ConfigParser) -> Dict[str, Any]:
    raw: Dict[str, Any] = {"datasets": [], "synthetic": []}
    for section in parser.sections():
        values = {k: v for k, v in parser.items(section)}
        if section in _PLAIN_SECTIONS:
            raw[section] = values
        elif section == "output":
            if "dir" in values:
                raw["output_dir"] = values["dir"]
        elif section == "generate":
            if "root" in values:
                raw["synthetic_root"] = values["root"]
            if "seed" in values:
                raw["generate_seed"] = values["seed"]
        elif section.startswith("dataset."):
            raw["datasets"].append({"dataset_id": section.split(".", 1)[1], **values})
        elif section.startswith("synthetic."):
            parts = section.split(".")
            entry = {"dataset_id": parts[1], **values}
            if len(parts) > 2:
                entry["split"] = parts[2]
            raw["synthetic"].append(entry)
        else:
            raise ConfigError(section, "unknown section")
    return raw


def _apply_overrides(raw: Dict[str, Any], overrides: Mapping[str, Any]) -> None:
    """Dotted keys (``train.iterations``) or top-level keys (``output_dir``); None values are skipped."""
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, field = key.partition(".")
        if field:
            raw.setdefault(section, {})[field] = value
        else:
            raw[section] = value


def _validation_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "config"
    return ConfigError(field, first["msg"])


def build_run_config(raw: Dict[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Precedence: flags, then the LADDERSEG_OUTPUT_ROOT environment override, then file values."""
    raw = dict(raw)
    if settings.output_root is not None:
        raw["output_dir"] = settings.output_root
    _apply_overrides(raw, overrides or {})
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        error = _validation_error(exc)
        logger.error("Invalid run configuration: %s", error)
        raise error from exc


def read_run_config(path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    parser = configparser.ConfigParser(delimiters=("=",), inline_comment_prefixes=("#", ";"), interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("config", f"file {path} does not exist")
        parser.read(path, encoding="utf-8")
    return build_run_config(_parse_sections(parser), overrides)


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_run_config(config: RunConfig, path: Path) -> None:
    """Echo the resolved configuration as a run file, so every run directory is self-describing."""
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    for section in _PLAIN_SECTIONS:
        values = getattr(config, section).model_dump(exclude_none=True)
        parser[section] = {k: _format(v) for k, v in values.items()}
    parser["output"] = {"dir": str(config.output_dir)}
    parser["generate"] = {"root": str(config.synthetic_root), "seed": str(config.generate_seed)}
    for entry in config.datasets:
        values = entry.model_dump(exclude={"dataset_id"}, exclude_none=True)
        parser[f"dataset.{entry.dataset_id}"] = {k: _format(v) for k, v in values.items()}
    for spec in config.synthetic:
        values = spec.model_dump(exclude={"dataset_id", "split"})
        parser[f"synthetic.{spec.dataset_id}.{spec.split}"] = {k: _format(v) for k, v in values.items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        parser.write(handle)
