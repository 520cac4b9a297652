# File: heleshaw/commands/hopflax.py

import argparse

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.models.report_models import CheckName, VerificationReport
from heleshaw.services.experiment_runner import experiment_runner

router = CommandRouter()

HOPF_LAX_CHECKS = ",".join(
    check.value
    for check in (
        CheckName.HOPF_LAX,
        CheckName.HOPF_LAX_REFINEMENT,
        CheckName.HJB_RESIDUAL,
        CheckName.HJB_REFINEMENT,
    )
)


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--pairs", type=int, help="override hopflax.pairs")


@router.command("hopflax", help="Hopf-Lax pair sampling and the weak HJB residual", arguments=_arguments)
def hopflax(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args, checks=HOPF_LAX_CHECKS, **{"hopflax.pairs": args.pairs})
    return experiment_runner.run(config, store_for(args, config.name), threads(args))
