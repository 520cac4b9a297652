from pathlib import Path

import pytest

from heleshaw.core.exceptions import DomainError
from heleshaw.models.report_models import CheckName, ReportStatus
from heleshaw.services import barrier
from heleshaw.services.artifact_store import ArtifactStore
from heleshaw.services.config_parser import load_config, parse_config
from heleshaw.services.experiment_runner import Pipeline, experiment_runner

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# Initial density (1e-6)^(1/20) = .501 sits below the saturation level 1 - 8/20 = .6, so the patch forms as the
# disk grows on the nutrient
GROWING_DISK = """\
name = growing_disk
grid.dim = 2
grid.cells = 32
initial.radius = 0.25
initial.pressure = 1e-6
run.gammas = 20
run.horizon = 0.5
run.snapshot_interval = 0.05
run.saturation_margin = 8
"""


@pytest.fixture(scope="module")
def growing() -> Pipeline:
    return Pipeline(parse_config(GROWING_DISK))


def test_barrier_starts_at_the_first_saturated_snapshot(growing):
    start = growing.barrier_start_index()
    assert start >= 1
    assert growing.saturated_patch(start).any()
    assert not any(growing.saturated_patch(index).any() for index in range(start))


def test_barrier_centre_sits_outside_the_patch(growing):
    config = growing.barrier_config()
    barrier.check_hypothesis(growing.main, config, growing.barrier_start_index(), margin=8)
    assert config.x0[0] > 0.25
    assert growing.grid.contains_ball(config.x0, config.m * config.r0)


def test_configured_barrier_start_time():
    pipeline = Pipeline(parse_config(GROWING_DISK + "barrier.start_time = 0.1\n"))
    assert pipeline.main.times[pipeline.barrier_start_index()] == pytest.approx(0.1)

    late = Pipeline(parse_config(GROWING_DISK + "barrier.start_time = 5\n"))
    with pytest.raises(DomainError):
        late.barrier_start_index()


# Checks the reference disk experiment must pass
DISK_PASSES = [
    CheckName.EXPONENT_CONSTANTS,
    CheckName.NUTRIENT_LOWER_BOUND,
    CheckName.MASS_BALANCE,
    CheckName.AB_MOMENT_UNIFORMITY,
    CheckName.AB_MOMENT_MONOTONE,
    CheckName.OBSTACLE_RESIDUAL,
    CheckName.OBSTACLE_REFINEMENT,
    CheckName.ETA_CONSISTENCY,
    CheckName.POSITIVITY_CONTAINMENT,
    CheckName.HOLDER_EXPONENT,
    CheckName.HOPF_LAX,
    CheckName.HJB_RESIDUAL,
    CheckName.BARRIER_COMPARISON,
]


@pytest.mark.slow
def test_disk_experiment_passes_its_checks(tmp_path):
    config = load_config(CONFIGS / "disk_d2.cfg", {"run.horizon": 0.25})
    report = experiment_runner.run(config, ArtifactStore(tmp_path))
    entries = {entry.check: entry for entry in report.entries}

    for check in DISK_PASSES:
        assert entries[check.value].status == ReportStatus.PASS, check.value

    assert entries[CheckName.NUTRIENT_LOWER_BOUND.value].measured <= 1e-3
    assert entries[CheckName.MASS_BALANCE.value].measured <= 1e-8
    assert entries[CheckName.OBSTACLE_RESIDUAL.value].measured <= 0.05
    assert entries[CheckName.ETA_CONSISTENCY.value].measured <= 0.05
    assert entries[CheckName.POSITIVITY_CONTAINMENT.value].measured == 0.0
    assert entries[CheckName.HOLDER_EXPONENT.value].measured >= barrier.holder_alpha(2) - 0.1
    assert entries[CheckName.BARRIER_COMPARISON.value].measured <= 0.02
    for check in (CheckName.HOPF_LAX_REFINEMENT, CheckName.HJB_REFINEMENT):
        assert entries[check.value].status != ReportStatus.SKIPPED, check.value
    assert (tmp_path / "trajectory.csv").exists()
    assert (tmp_path / "fields" / "T.csv").exists()


@pytest.mark.slow
def test_disk_experiment_is_thread_independent(tmp_path):
    overrides = {"grid.cells": 32, "run.horizon": 0.1, "run.gammas": "10, 20, 40", "run.refinement": False}
    config = load_config(CONFIGS / "disk_d2.cfg", overrides)
    for threads in (1, 4):
        experiment_runner.run(config, ArtifactStore(tmp_path / f"t{threads}"), threads)

    written = sorted(path.relative_to(tmp_path / "t1") for path in (tmp_path / "t1").rglob("*.csv"))
    assert Path("report.csv") in written
    for name in written:
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()
