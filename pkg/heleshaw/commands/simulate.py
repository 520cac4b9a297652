# File: heleshaw/commands/simulate.py

import argparse

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.models.report_models import CheckName, VerificationReport
from heleshaw.services.experiment_runner import experiment_runner

router = CommandRouter()

SIMULATION_CHECKS = ",".join(
    check.value
    for check in (CheckName.NUTRIENT_LOWER_BOUND, CheckName.MASS_BALANCE, CheckName.PRESSURE_CONSISTENCY)
)


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--gamma", type=float, help="simulate this gamma instead of the largest configured one")


@router.command("simulate", help="one PME run with final fields and solver checks", arguments=_arguments)
def simulate(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args, checks=SIMULATION_CHECKS)
    gamma = args.gamma if args.gamma is not None else config.run.gammas[-1]
    config = config.model_copy(update={"run": config.run.model_copy(update={"gammas": [gamma]})})
    return experiment_runner.run(config, store_for(args, config.name), threads(args))
