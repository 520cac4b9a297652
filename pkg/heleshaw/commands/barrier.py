# File: heleshaw/commands/barrier.py

import argparse

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.models.report_models import CheckName, VerificationReport
from heleshaw.services.experiment_runner import experiment_runner

router = CommandRouter()

BARRIER_CHECKS = ",".join(
    check.value
    for check in (CheckName.EXPONENT_CONSTANTS, CheckName.BARRIER_COMPARISON, CheckName.BARRIER_MECHANICS)
)


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--x0", help="barrier centre, comma-separated")
    parser.add_argument("--r0", type=float, help="initial inner radius")


@router.command("barrier", help="radial supersolution comparison and radius trajectory", arguments=_arguments)
def barrier(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args, checks=BARRIER_CHECKS, **{"barrier.x0": args.x0, "barrier.r0": args.r0})
    return experiment_runner.run(config, store_for(args, config.name), threads(args))
