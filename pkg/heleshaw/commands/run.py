# File: heleshaw/commands/run.py

import argparse

import structlog

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.models.report_models import VerificationReport
from heleshaw.services.experiment_runner import experiment_runner

logger = structlog.get_logger(__name__)
router = CommandRouter()


@router.command("run", help="full pipeline: simulate, accumulate, every enabled check")
def run(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args)
    store = store_for(args, config.name)
    report = experiment_runner.run(config, store, threads(args))
    logger.info("Artifacts written", out=str(store.root), passed=report.passed)
    return report
