# File: heleshaw/services/artifact_store.py

import math
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd
import structlog

from heleshaw.core.exceptions import ConfigError
from heleshaw.models.report_models import ReportEntry, ReportStatus, VerificationReport
from heleshaw.services.grid_core import Grid, ScalarField

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.17g"
REPORT_COLUMNS = ["check", "status", "measured", "tolerance", "anchor", "details"]
REPORT_FILE = "report.csv"


def _format_details(details: Dict[str, float]) -> str:
    return ";".join(f"{key}={FLOAT_FORMAT % value}" for key, value in sorted(details.items()))


def _parse_details(text) -> Dict[str, float]:
    if not isinstance(text, str) or not text:
        return {}
    pairs = (item.split("=", 1) for item in text.split(";"))
    return {key: float(value) for key, value in pairs}


class ArtifactStore:
    """Plot-ready CSVs under one run directory; nothing time-dependent is written."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"output directory {self.root} is not writable: {e.strerror}")

    def child(self, name: str) -> "ArtifactStore":
        return ArtifactStore(self.root / name)

    def path(self, name: str) -> Path:
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug("Artifact written", path=str(target), rows=len(frame))
        return target

    def write_field(self, name: str, field: Union[ScalarField, np.ndarray], grid: Grid = None) -> Path:
        """Columns x[, y], value, one row per cell in C order."""
        if isinstance(field, ScalarField):
            grid, values = field.grid, field.values
        else:
            values = np.asarray(field)
        coordinates = grid.coordinates()
        columns = {axis: c.ravel() for axis, c in zip(["x", "y"], coordinates)}
        columns["value"] = values.ravel()
        return self.write_frame(f"fields/{name}.csv", pd.DataFrame(columns))

    @staticmethod
    def read_field(path: Union[str, Path], column: str = "value") -> ScalarField:
        """Inverse of write_field; the grid is recovered from the cell-centre coordinates."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no field file at {path}")
        frame = pd.read_csv(path)
        axes = [axis for axis in ("x", "y") if axis in frame.columns]
        if not axes or column not in frame.columns:
            raise ConfigError(f"{path} needs columns x[, y] and {column}")
        centres = [np.unique(frame[axis].to_numpy(dtype=float)) for axis in axes]
        cells = len(centres[0])
        if cells < 2 or any(len(c) != cells for c in centres) or len(frame) != cells ** len(axes):
            raise ConfigError(f"{path} is not a uniform square lattice")
        spacing = float(centres[0][1] - centres[0][0])
        grid = Grid(len(axes), cells, cells * spacing, tuple(float(c[0]) - 0.5 * spacing for c in centres))
        frame = frame.sort_values(axes, kind="mergesort")
        return ScalarField(grid, frame[column].to_numpy(dtype=float).reshape(grid.shape))

    def write_report(self, report: VerificationReport, name: str = REPORT_FILE) -> Path:
        rows = [
            (e.check, e.status.value, e.measured, e.tolerance, e.anchor, _format_details(e.details))
            for e in report.entries
        ]
        return self.write_frame(name, pd.DataFrame(rows, columns=REPORT_COLUMNS))

    @staticmethod
    def read_report(path: Union[str, Path]) -> VerificationReport:
        path = Path(path)
        if path.is_dir():
            path = path / REPORT_FILE
        if not path.exists():
            raise ConfigError(f"no report found at {path}")
        frame = pd.read_csv(path, dtype={"details": str, "anchor": str}, keep_default_na=False)
        entries = [
            ReportEntry(
                check=row.check,
                status=ReportStatus(row.status),
                measured=_as_float(row.measured),
                tolerance=_as_float(row.tolerance),
                anchor=row.anchor,
                details=_parse_details(row.details),
            )
            for row in frame.itertuples(index=False)
        ]
        return VerificationReport(entries=entries)


def _as_float(value) -> float:
    if isinstance(value, str):
        return float(value) if value else math.nan
    return float(value)
