# File: heleshaw/commands/registry.py

import argparse
from dataclasses import dataclass
from typing import Callable, List, Optional

from heleshaw.models.report_models import VerificationReport

Handler = Callable[[argparse.Namespace], VerificationReport]
Arguments = Callable[[argparse.ArgumentParser], None]


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    handler: Handler
    arguments: Optional[Arguments] = None


class CommandRouter:
    """Collects subcommands; routers are combined with include_router."""

    def __init__(self):
        self.commands: List[Command] = []

    def command(self, name: str, help: str, arguments: Optional[Arguments] = None):
        def register(handler: Handler) -> Handler:
            self.commands.append(Command(name, help, handler, arguments))
            return handler

        return register

    def include_router(self, router: "CommandRouter"):
        self.commands.extend(router.commands)

    def install(self, subparsers, parents: List[argparse.ArgumentParser]):
        for command in self.commands:
            parser = subparsers.add_parser(command.name, help=command.help, parents=parents)
            if command.arguments:
                command.arguments(parser)
            parser.set_defaults(handler=command.handler, command=command.name)


def build_router() -> CommandRouter:
    from heleshaw.commands import barrier, classify, hopflax, report, run, simulate, sweep

    command_router = CommandRouter()
    command_router.include_router(run.router)
    command_router.include_router(simulate.router)
    command_router.include_router(sweep.router)
    command_router.include_router(hopflax.router)
    command_router.include_router(barrier.router)
    command_router.include_router(classify.router)
    command_router.include_router(report.router)
    return command_router
