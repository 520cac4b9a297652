# File: heleshaw/commands/options.py

import argparse
from pathlib import Path
from typing import Any, Dict, Optional

from heleshaw.core.config import settings
from heleshaw.models.experiment_models import ExperimentConfig
from heleshaw.services.artifact_store import ArtifactStore
from heleshaw.services.config_parser import load_config, parse_config


def common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="experiment config file (key = value)")
    parser.add_argument("--out", help="artifact directory (default: $HELESHAW_OUTPUT_DIR/<name>)")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--threads", type=int, help="worker threads (default: $HELESHAW_THREADS)")
    parser.add_argument("--check", help="comma-separated check names to enable")
    return parser


def overrides(args: argparse.Namespace, **extra: Any) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    if args.seed is not None:
        values["run.seed"] = args.seed
    if args.check is not None:
        values["checks.enabled"] = args.check
    values.update({key: value for key, value in extra.items() if value is not None})
    return values


def config_from(args: argparse.Namespace, checks: Optional[str] = None, **extra: Any) -> ExperimentConfig:
    """Config file (or defaults) with flag overrides; `checks` is the subcommand's own default set."""
    values = overrides(args, **extra)
    if checks is not None and args.check is None:
        values["checks.enabled"] = checks
    if args.config:
        return load_config(args.config, values)
    return parse_config("", values)


def threads(args: argparse.Namespace) -> int:
    return args.threads or settings.THREADS


def store_for(args: argparse.Namespace, name: str) -> ArtifactStore:
    return ArtifactStore(args.out or Path(settings.OUTPUT_DIR) / name)
