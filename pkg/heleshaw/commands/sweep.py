# File: heleshaw/commands/sweep.py

import argparse

import structlog

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.models.report_models import CheckName, VerificationReport
from heleshaw.services import limit, nutrient
from heleshaw.services.experiment_runner import Pipeline, experiment_runner
from heleshaw.services.simulation import run_rows

logger = structlog.get_logger(__name__)
router = CommandRouter()

SWEEP_CHECKS = ",".join(
    check.value
    for check in (
        CheckName.NUTRIENT_LOWER_BOUND,
        CheckName.SWEEP_CAUCHY,
        CheckName.SUPPORT_NESTING,
        CheckName.AB_MOMENT_UNIFORMITY,
        CheckName.AB_MOMENT_MONOTONE,
    )
)


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--gammas", help="comma-separated, strictly increasing gamma values")


@router.command("sweep", help="one run directory per gamma plus cross-gamma checks", arguments=_arguments)
def sweep(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args, checks=SWEEP_CHECKS, **{"run.gammas": args.gammas})
    store = store_for(args, config.name)
    pipeline = Pipeline(config, threads=threads(args))

    for run in pipeline.runs:
        member = store.child(f"gamma_{run.gamma:g}")
        final = run.final
        member.write_field("rho_final", final.rho)
        member.write_field("p_final", final.p)
        member.write_field("n_final", final.n)
        member.write_frame("run.csv", run_rows(run))
        entry = nutrient.check_lower_bound(run.nutrient_history(), run.n0_min, config.tolerance.lower_bound)
        member.write_report(VerificationReport(entries=[entry]))

    moments = [limit.ab_moment(run, pipeline.b) for run in pipeline.runs]
    store.write_frame("sweep.csv", limit.sweep_rows(pipeline.runs, moments))
    report = experiment_runner.evaluate(config.checks.enabled, pipeline, None, store)
    store.write_report(report)
    logger.info("Sweep written", out=str(store.root), members=len(pipeline.runs))
    return report
