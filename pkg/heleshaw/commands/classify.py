# File: heleshaw/commands/classify.py

import argparse
from typing import List, Tuple

import structlog

from heleshaw.commands.options import config_from, store_for, threads
from heleshaw.commands.registry import CommandRouter
from heleshaw.core.exceptions import UsageError
from heleshaw.models.report_models import CheckName, VerificationReport
from heleshaw.services import obstacle_lab
from heleshaw.services.artifact_store import ArtifactStore
from heleshaw.services.barrier import holder_alpha
from heleshaw.services.baiocchi import W_MIN_FACTOR
from heleshaw.services.grid_core import ScalarField

logger = structlog.get_logger(__name__)
router = CommandRouter()

BOUNDARY = "boundary"


def _arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--input", required=True, help="field CSV with columns x[, y], value")
    parser.add_argument(
        "--points",
        default=BOUNDARY,
        help="'boundary' for automatic selection, or points as 'x,y;x,y'",
    )
    parser.add_argument("--source", type=float, default=1.0, help="obstacle right-hand side f at the points")
    parser.add_argument("--zero-level", type=float, help="values at or below count as zero")


def parse_points(text: str, dim: int) -> List[Tuple[float, ...]]:
    points = []
    for chunk in filter(None, (part.strip() for part in text.split(";"))):
        try:
            point = tuple(float(value) for value in chunk.split(","))
        except ValueError:
            raise UsageError(f"cannot read point '{chunk}'")
        if len(point) != dim:
            raise UsageError(f"point '{chunk}' needs {dim} coordinates")
        points.append(point)
    if not points:
        raise UsageError("--points is empty")
    return points


def _zero_level(u: ScalarField, given) -> float:
    return given if given is not None else W_MIN_FACTOR * max(u.max(), 0.0)


@router.command("classify", help="classify free-boundary points of an obstacle solution", arguments=_arguments)
def classify(args: argparse.Namespace) -> VerificationReport:
    config = config_from(args, checks=CheckName.CLASSIFICATION.value)
    u = ArtifactStore.read_field(args.input)
    radii = [cells * u.grid.spacing for cells in config.classify.ladder_cells]
    zero_level = _zero_level(u, args.zero_level)

    if args.points == BOUNDARY:
        points = obstacle_lab.free_boundary_points(u, config.classify.max_points, radii[0], zero_level)
    else:
        points = parse_points(args.points, u.grid.dim)

    classified = obstacle_lab.classify_points(
        u,
        points,
        radii,
        ScalarField.constant(u.grid, args.source),
        zero_level,
        threads(args),
        alpha=holder_alpha(u.grid.dim),
    )
    result = obstacle_lab.normal_map(
        classified,
        alpha=holder_alpha(u.grid.dim),
        pair_radius=config.classify.pair_radius,
        cap=config.tolerance.normal_seminorm,
    )
    store = store_for(args, config.name)
    store.write_frame("classification.csv", obstacle_lab.classification_rows(classified))
    report = VerificationReport(entries=[result.entry])
    store.write_report(report)
    logger.info("Points classified", points=len(classified), out=str(store.root))
    return report
