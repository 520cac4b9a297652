# File: heleshaw/services/config_parser.py

from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

import structlog
from pydantic import ValidationError

from heleshaw.core.exceptions import ConfigError
from heleshaw.models.experiment_models import ExperimentConfig

logger = structlog.get_logger(__name__)

COMMENT = "#"


def _strip_comment(line: str) -> str:
    return line.split(COMMENT, 1)[0].strip()


def parse_lines(lines: Iterable[str]) -> Tuple[Dict[str, str], Dict[str, int]]:
    """Flat `dotted.key = value` pairs and the line each key was read from."""
    values: Dict[str, str] = {}
    line_of: Dict[str, int] = {}
    for number, raw in enumerate(lines, start=1):
        text = _strip_comment(raw)
        if not text:
            continue
        if "=" not in text:
            raise ConfigError("expected `key = value`", line=number)
        key, value = (part.strip() for part in text.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError("empty key", key=key or None, line=number)
        if key in values:
            raise ConfigError(f"duplicate key, first set on line {line_of[key]}", key=key, line=number)
        values[key] = value
        line_of[key] = number
    return values, line_of


def nest(flat: Mapping[str, Any], line_of: Optional[Mapping[str, int]] = None) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    line_of = line_of or {}
    for key, value in flat.items():
        *sections, leaf = key.split(".")
        node = tree
        for depth, section in enumerate(sections):
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                prefix = ".".join(sections[: depth + 1])
                raise ConfigError(f"'{prefix}' is both a value and a section", key=key, line=line_of.get(key))
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"'{key}' is both a value and a section", key=key, line=line_of.get(key))
        node[leaf] = value
    return tree


def validate(tree: Dict[str, Any], line_of: Optional[Mapping[str, int]] = None) -> ExperimentConfig:
    line_of = line_of or {}
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"] if not isinstance(part, int)) or None
        raise ConfigError(error["msg"], key=key, line=line_of.get(key)) from e


def parse_config(text: str, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    flat, line_of = parse_lines(text.splitlines())
    for key, value in (overrides or {}).items():
        flat[key] = value
        line_of.pop(key, None)
    return validate(nest(flat, line_of), line_of)


def load_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}")
    config = parse_config(text, overrides)
    logger.info("Config loaded", path=str(path), experiment=config.name)
    return config
