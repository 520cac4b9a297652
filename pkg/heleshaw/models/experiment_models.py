# File: heleshaw/models/experiment_models.py

from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from heleshaw.models.report_models import CheckName
from heleshaw.models.solver_models import FluxLimiter, SplittingOrder


class InitialDataKind(str, Enum):
    DISK = "disk"
    TWO_DISKS = "two_disks"
    ANNULUS = "annulus"
    BARENBLATT = "barenblatt"
    CUSTOM_CSV = "custom_csv"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def split_list(value: Any) -> Any:
    """Accept `a, b, c` strings from the flat config format for list fields."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    if isinstance(value, (int, float)):
        return [value]
    return value


class GridSpec(_Section):
    dim: int = Field(default=2, ge=1, le=2)
    cells: int = Field(default=64, ge=3)
    extent: float = Field(default=2.0, gt=0)


class InitialDataSpec(_Section):
    kind: InitialDataKind = InitialDataKind.DISK
    center: Optional[List[float]] = None
    center2: Optional[List[float]] = None
    radius: float = Field(default=0.25, gt=0)
    inner_radius: float = Field(default=0.1, gt=0)
    nutrient: float = Field(default=1.0, gt=0)
    pressure: float = Field(default=0.01, gt=0, le=1.0)
    mollify_cells: int = Field(default=3, ge=0)
    path: Optional[str] = None
    barenblatt_time: float = Field(default=1.0, gt=0)
    barenblatt_constant: float = Field(default=0.01, gt=0)

    _split_points = field_validator("center", "center2", mode="before")(split_list)


class RunSpec(_Section):
    gammas: List[float] = Field(default_factory=lambda: [80.0])
    horizon: float = Field(default=0.5, gt=0)
    snapshot_interval: float = Field(default=0.01, gt=0)
    dt_max: float = Field(default=1e-3, gt=0)
    theta_scheme: float = Field(default=0.5, ge=0, le=1)
    splitting: SplittingOrder = SplittingOrder.DIFFUSE_THEN_ABSORB
    flux_limiter: FluxLimiter = FluxLimiter.NONE
    seed: int = 0
    refinement: bool = False
    reference_gamma: Optional[float] = Field(default=None, gt=1)
    saturation_margin: float = Field(default=2.0, gt=0)

    _split_gammas = field_validator("gammas", mode="before")(split_list)

    @field_validator("gammas")
    @classmethod
    def _gammas_ascending(cls, gammas: List[float]) -> List[float]:
        if not gammas:
            raise ValueError("at least one gamma is required")
        if any(g <= 1 for g in gammas):
            raise ValueError("every gamma must be > 1")
        if any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ValueError("gammas must be strictly increasing")
        return gammas

    @model_validator(mode="after")
    def _gamma_bounds(self) -> "RunSpec":
        if self.reference_gamma is not None and self.reference_gamma <= self.gammas[-1]:
            raise ValueError("reference_gamma must exceed every sweep gamma")
        if self.saturation_margin >= self.gammas[-1]:
            raise ValueError("saturation_margin must stay below the largest gamma")
        return self


class Tolerances(_Section):
    lower_bound: float = Field(default=1e-3, gt=0)
    mass_balance: float = Field(default=1e-8, gt=0)
    pressure_consistency: float = Field(default=0.05, gt=0)
    ab_uniformity: float = Field(default=2.0, gt=0)
    obstacle_residual: float = Field(default=0.05, gt=0)
    refinement_ratio: float = Field(default=0.7, gt=0)
    eta_consistency: float = Field(default=0.05, gt=0)
    patch_agreement: float = Field(default=4.0, gt=0)
    holder_slack: float = Field(default=0.1, gt=0)
    hopf_lax_fraction: float = Field(default=0.01, gt=0)
    hopf_lax_relative: float = Field(default=0.05, gt=0)
    hopf_lax_drift_steps: int = Field(default=1, ge=0)
    hjb: float = Field(default=0.05, gt=0)
    barrier: float = Field(default=0.02, gt=0)
    nondegeneracy: float = Field(default=0.1, gt=0)
    normal_seminorm: float = Field(default=50.0, gt=0)


class HopfLaxSpec(_Section):
    pairs: int = Field(default=1000, ge=100)
    theta: float = Field(default=0.0, ge=0)
    pair_radius: float = Field(default=0.25, gt=0)
    max_doublings: int = Field(default=10, ge=0)


class BarrierSpec(_Section):
    x0: Optional[List[float]] = None
    r0: float = Field(default=0.1, gt=0)
    m: Optional[float] = Field(default=None, gt=1)
    start_time: Optional[float] = Field(default=None, ge=0)
    ode_substeps: int = Field(default=10, ge=1)

    _split_x0 = field_validator("x0", mode="before")(split_list)


class ClassifySpec(_Section):
    max_points: int = Field(default=12, ge=1)
    ladder_cells: List[int] = Field(default_factory=lambda: [16, 12, 8])
    pair_radius: float = Field(default=0.5, gt=0)

    _split_ladder = field_validator("ladder_cells", mode="before")(split_list)

    @field_validator("ladder_cells")
    @classmethod
    def _ladder(cls, ladder: List[int]) -> List[int]:
        if len(ladder) < 3 or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("ladder needs at least 3 strictly decreasing radii")
        if ladder[-1] < 4:
            raise ValueError("smallest ladder radius must be at least 4 cells")
        return ladder


class ChecksSpec(_Section):
    enabled: List[CheckName] = Field(default_factory=lambda: list(CheckName))

    _split_enabled = field_validator("enabled", mode="before")(split_list)


class ExperimentConfig(_Section):
    name: str = "experiment"
    grid: GridSpec = Field(default_factory=GridSpec)
    initial: InitialDataSpec = Field(default_factory=InitialDataSpec)
    run: RunSpec = Field(default_factory=RunSpec)
    tolerance: Tolerances = Field(default_factory=Tolerances)
    hopflax: HopfLaxSpec = Field(default_factory=HopfLaxSpec)
    barrier: BarrierSpec = Field(default_factory=BarrierSpec)
    classify: ClassifySpec = Field(default_factory=ClassifySpec)
    checks: ChecksSpec = Field(default_factory=ChecksSpec)

    @model_validator(mode="after")
    def _points_match_dimension(self) -> "ExperimentConfig":
        dim = self.grid.dim
        for label, point in (
            ("initial.center", self.initial.center),
            ("initial.center2", self.initial.center2),
            ("barrier.x0", self.barrier.x0),
        ):
            if point is not None and len(point) != dim:
                raise ValueError(f"{label} needs {dim} coordinates, got {len(point)}")
        if self.initial.kind == InitialDataKind.TWO_DISKS and self.initial.center2 is None:
            raise ValueError("two_disks needs initial.center2")
        if self.initial.kind == InitialDataKind.CUSTOM_CSV and not self.initial.path:
            raise ValueError("custom_csv needs initial.path")
        return self

    def enabled(self, check: CheckName) -> bool:
        return check in self.checks.enabled
