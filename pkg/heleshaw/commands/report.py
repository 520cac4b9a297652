# File: heleshaw/commands/report.py

import argparse

import structlog

from heleshaw.commands.options import store_for
from heleshaw.commands.registry import CommandRouter
from heleshaw.core.exceptions import UsageError
from heleshaw.models.report_models import VerificationReport
from heleshaw.services.artifact_store import ArtifactStore

logger = structlog.get_logger(__name__)
router = CommandRouter()


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--merge", nargs="+", metavar="DIR", help="run directories or report.csv files")


@router.command("report", help="merge partial reports into one", arguments=_arguments)
def report(args: argparse.Namespace) -> VerificationReport:
    if not args.merge:
        raise UsageError("report needs --merge DIR [DIR ...]")
    merged = VerificationReport.merge(ArtifactStore.read_report(path) for path in args.merge)
    store = store_for(args, "merged")
    store.write_report(merged)
    logger.info("Reports merged", sources=len(args.merge), entries=len(merged.entries), out=str(store.root))
    return merged
