# File: heleshaw/core/config.py

import psutil
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _default_threads() -> int:
    return psutil.cpu_count(logical=False) or 1


class Settings(BaseSettings):
    APP_NAME: str = "heleshaw-lab"
    VERSION: str = "1.0.0"

    # Falls back here when --threads is not given
    THREADS: int = Field(default_factory=_default_threads, ge=1)

    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True

    # Linear solves sit far below the inequality tolerances being verified
    CG_RTOL: float = 1e-10
    CG_MAXITER: int = 20000

    PSOR_TOL: float = 1e-9
    PSOR_MAXITER: int = 200000

    # Fraction of the degenerate-diffusion CFL bound used by adaptive sub-stepping
    CFL_SAFETY: float = 0.45

    OUTPUT_DIR: str = "runs"

    model_config = SettingsConfigDict(env_prefix="HELESHAW_", env_file=".env", extra="ignore")


settings = Settings()
