# File: heleshaw/models/solver_models.py

from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SplittingOrder(str, Enum):
    DIFFUSE_THEN_ABSORB = "diffuse_then_absorb"
    ABSORB_THEN_DIFFUSE = "absorb_then_diffuse"


class FluxLimiter(str, Enum):
    NONE = "none"
    MINMOD = "minmod"


class NutrientParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: float = Field(gt=0)
    theta_scheme: float = Field(default=0.5, ge=0.0, le=1.0)
    splitting: SplittingOrder = SplittingOrder.DIFFUSE_THEN_ABSORB


class PmeParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=1.0)
    dt: float = Field(gt=0)
    flux_limiter: FluxLimiter = FluxLimiter.NONE
    theta_scheme: float = Field(default=0.5, ge=0.0, le=1.0)
    splitting: SplittingOrder = SplittingOrder.DIFFUSE_THEN_ABSORB

    def nutrient(self) -> NutrientParams:
        return NutrientParams(dt=self.dt, theta_scheme=self.theta_scheme, splitting=self.splitting)

    def with_dt(self, dt: float) -> "PmeParams":
        return self.model_copy(update={"dt": dt})


class GammaSweep(BaseModel):
    model_config = ConfigDict(frozen=True)

    gammas: List[float]
    horizon: float = Field(gt=0)
    snapshot_interval: float = Field(gt=0)

    @field_validator("gammas")
    @classmethod
    def _ascending(cls, gammas: List[float]) -> List[float]:
        if len(gammas) < 3:
            raise ValueError("a sweep needs at least 3 values of gamma")
        if any(g < 2 for g in gammas):
            raise ValueError("every gamma must be >= 2")
        if any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ValueError("gammas must be strictly increasing")
        return gammas


class HopfLaxParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    b: float = Field(gt=0)
    C: float = Field(gt=0)
    theta: float = Field(default=0.0, ge=0)
    pair_count: int = Field(default=1000, ge=100)
    pair_radius: float = Field(default=0.25, gt=0)
    relative_tolerance: float = Field(default=0.05, gt=0)
    seed: int = 0


class ClassificationLabel(str, Enum):
    REGULAR = "regular"
    SINGULAR = "singular"
    UNRESOLVED = "unresolved"
