# File: heleshaw/main.py

import argparse
import logging
import sys
from typing import List, Optional

import structlog

from heleshaw.core.config import settings
from heleshaw.core.exceptions import EXIT_CHECK_FAILED, EXIT_OK, EXIT_SOLVER, HeleShawException, UsageError


def configure_logging():
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=settings.LOG_LEVEL.upper())
    renderer = (
        structlog.processors.JSONRenderer() if settings.LOG_JSON else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


configure_logging()
logger = structlog.get_logger(__name__)


class CliParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    from heleshaw.commands.options import common_parser
    from heleshaw.commands.registry import build_router

    parser = CliParser(prog="heleshaw", description="Hele-Shaw limit verification lab")
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.VERSION}")
    subparsers = parser.add_subparsers(dest="command", parser_class=CliParser)
    build_router().install(subparsers, [common_parser()])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "handler", None):
            raise UsageError("a subcommand is required: run, simulate, sweep, hopflax, barrier, classify, report")
        if args.threads is not None and args.threads < 1:
            raise UsageError(f"--threads must be at least 1, got {args.threads}")

        logger.info("🚀 heleshaw starting", command=args.command, version=settings.VERSION)
        report = args.handler(args)
        status = EXIT_OK if report.passed else EXIT_CHECK_FAILED
        for entry in report.failures():
            logger.warning("Check did not pass", check=entry.check, measured=entry.measured, tolerance=entry.tolerance)
        for entry in report.skipped():
            logger.warning("Check skipped", check=entry.check)
        logger.info("🛑 heleshaw finished", command=args.command, exit_code=status, **report.counts())
        return status
    except HeleShawException as e:
        logger.error("heleshaw failed", error=str(e), code=e.code, exit_code=e.exit_code)
        return e.exit_code
    except Exception as e:
        logger.exception("Unexpected error", error=str(e))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
