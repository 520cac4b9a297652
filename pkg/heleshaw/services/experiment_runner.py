# File: heleshaw/services/experiment_runner.py

from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from heleshaw.core.config import settings
from heleshaw.core.exceptions import (
    CheckError,
    DegenerateFitError,
    DomainError,
    HeleShawException,
    UsageError,
)
from heleshaw.models.experiment_models import ExperimentConfig
from heleshaw.models.report_models import (
    CheckName,
    ReportEntry,
    VerificationReport,
    refinement_entry,
)
from heleshaw.models.solver_models import GammaSweep, HopfLaxParams, PmeParams
from heleshaw.services import baiocchi, barrier, hopflax, limit, nutrient, obstacle_lab, pme
from heleshaw.services.artifact_store import ArtifactStore
from heleshaw.services.grid_core import Grid, ScalarField
from heleshaw.services.initial_data import build_grid, initial_state
from heleshaw.services.simulation import RunResult, first_observer, simulate, stable_dt

logger = structlog.get_logger(__name__)

SWEEP_MIN_MEMBERS = 3
HOLDER_RADIUS_CELLS = 32
MONOTONE_B_FRACTIONS = (0.25, 0.5, 1.0)
# Checks that need no simulation
ANALYTIC_CHECKS = (CheckName.EXPONENT_CONSTANTS,)


class Pipeline:
    """Runs and derived fields for one grid resolution, computed on first use."""

    def __init__(self, config: ExperimentConfig, cells: Optional[int] = None, threads: Optional[int] = None):
        self.config = config
        self.grid: Grid = build_grid(config.grid, cells)
        self.threads = threads or settings.THREADS

    @property
    def template(self) -> PmeParams:
        run = self.config.run
        return PmeParams(
            gamma=run.gammas[-1],
            dt=run.dt_max,
            flux_limiter=run.flux_limiter,
            theta_scheme=run.theta_scheme,
            splitting=run.splitting,
        )

    def initial(self, gamma: float):
        return initial_state(self.grid, self.config.initial, gamma)

    def observers(self, gamma: float):
        # w and eta are accumulated on the largest gamma only
        return [baiocchi.BaiocchiAccumulator()] if gamma == self.config.run.gammas[-1] else []

    def run_gammas(self, gammas: Sequence[float]) -> List[RunResult]:
        run = self.config.run
        if len(gammas) >= SWEEP_MIN_MEMBERS:
            sweep = GammaSweep(gammas=list(gammas), horizon=run.horizon, snapshot_interval=run.snapshot_interval)
            return limit.run_sweep(sweep, self.initial, self.template, self.threads, self.observers)
        results = []
        for gamma in gammas:
            with structlog.contextvars.bound_contextvars(gamma=gamma):
                params = self.template.model_copy(update={"gamma": gamma})
                results.append(
                    simulate(self.initial(gamma), params, run.horizon, run.snapshot_interval, self.observers(gamma))
                )
        return results

    @cached_property
    def runs(self) -> List[RunResult]:
        return self.run_gammas(self.config.run.gammas)

    @property
    def main(self) -> RunResult:
        return self.runs[-1]

    @cached_property
    def reference_run(self) -> Optional[RunResult]:
        gamma = self.config.run.reference_gamma
        if gamma is None:
            return None
        run = self.config.run
        with structlog.contextvars.bound_contextvars(gamma=gamma, reference=True):
            params = self.template.model_copy(update={"gamma": gamma})
            return simulate(self.initial(gamma), params, run.horizon, run.snapshot_interval)

    @cached_property
    def history(self) -> List[baiocchi.BaiocchiField]:
        return first_observer(self.main, baiocchi.BaiocchiAccumulator).history

    @cached_property
    def w_min(self) -> float:
        return baiocchi.default_w_min(self.history)

    @cached_property
    def hitting(self) -> baiocchi.HittingField:
        return baiocchi.hitting_time(self.history, self.w_min)

    @cached_property
    def b(self) -> float:
        return limit.calibrate_b(self.runs)

    def hopf_lax_params(self) -> HopfLaxParams:
        spec = self.config.hopflax
        return HopfLaxParams(
            b=self.b,
            C=1.0,
            theta=spec.theta,
            pair_count=spec.pairs,
            pair_radius=spec.pair_radius,
            relative_tolerance=self.config.tolerance.hopf_lax_relative,
            seed=self.config.run.seed,
        )

    @cached_property
    def hopf_lax_scan(self) -> hopflax.ConstantScan:
        return hopflax.scan_constant(
            self.main,
            self.hopf_lax_params(),
            self.config.tolerance.hopf_lax_fraction,
            self.config.hopflax.max_doublings,
        )

    def obstacle_entry(self) -> ReportEntry:
        return baiocchi.obstacle_residual(
            self.history[-1],
            self.main.initial.rho,
            self.main.final.rho,
            self.config.tolerance.obstacle_residual,
            self.w_min,
        )

    def hjb_entry(self) -> ReportEntry:
        return hopflax.hjb_residual(self.main, self.config.tolerance.hjb)

    # Obstacle view of the final Baiocchi field

    @property
    def w(self) -> ScalarField:
        return self.history[-1].w

    @cached_property
    def source_field(self) -> ScalarField:
        """f = 1 - rho_0 - eta, the right-hand side of Delta w = f on the patch."""
        return ScalarField(self.grid, 1.0 - self.main.initial.rho.values - self.history[-1].eta.values)

    def source(self, point: Tuple[float, ...]) -> float:
        return float(self.source_field.values[self.grid.cell_index(point)])

    def ladder(self) -> List[float]:
        return [cells * self.grid.spacing for cells in self.config.classify.ladder_cells]

    @cached_property
    def boundary_points(self) -> List[Tuple[float, ...]]:
        ladder = self.ladder()
        return obstacle_lab.free_boundary_points(self.w, self.config.classify.max_points, ladder[0], self.w_min)

    @cached_property
    def classified(self) -> List[obstacle_lab.ClassifiedPoint]:
        return obstacle_lab.classify_points(
            self.w,
            self.boundary_points,
            self.ladder(),
            self.source_field,
            self.w_min,
            self.threads,
            alpha=barrier.holder_alpha(self.grid.dim),
        )

    def normal_map(self, reference_seminorm: Optional[float] = None) -> obstacle_lab.NormalMap:
        return obstacle_lab.normal_map(
            self.classified,
            alpha=barrier.holder_alpha(self.grid.dim),
            pair_radius=self.config.classify.pair_radius,
            cap=self.config.tolerance.normal_seminorm,
            reference_seminorm=reference_seminorm,
        )

    # Barrier setup

    @property
    def saturation_level(self) -> float:
        return pme.saturation_threshold(self.main.gamma, self.config.run.saturation_margin)

    def saturated_patch(self, index: int) -> np.ndarray:
        return self.main.snapshots[index].rho.values > self.saturation_level

    def barrier_x0(self) -> Tuple[float, ...]:
        """Configured x0, else a point on the first axis halfway between the patch edge and the box edge."""
        spec = self.config.initial
        if self.config.barrier.x0 is not None:
            return tuple(self.config.barrier.x0)
        center = list(spec.center) if spec.center is not None else [0.0] * self.grid.dim
        patch = self.saturated_patch(self.barrier_start_index())
        reach = float(self.grid.distance_from(center)[patch].max()) if patch.any() else spec.radius
        half = 0.5 * self.grid.extent
        center[0] += reach + 0.5 * (half - reach - abs(center[0]))
        return tuple(center)

    @cached_property
    def _barrier_start(self) -> int:
        start = self.config.barrier.start_time
        if start is not None:
            for index, t in enumerate(self.main.times):
                if t >= start - 1e-12:
                    return index
            raise DomainError(f"barrier.start_time {start:g} lies beyond the horizon")
        for index in range(len(self.main.snapshots)):
            if self.saturated_patch(index).any():
                return index
        logger.warning("No saturated patch before the horizon, barrier starts at t=0")
        return 0

    def barrier_start_index(self) -> int:
        """Configured start time, else the first snapshot holding a saturated patch."""
        return self._barrier_start

    def barrier_config(self) -> barrier.BarrierConfig:
        spec = self.config.barrier
        dim = self.grid.dim
        start_index = self.barrier_start_index()
        x0 = self.barrier_x0()
        return barrier.BarrierConfig(
            x0=x0,
            r0=spec.r0,
            m=spec.m or barrier.default_ratio(dim),
            nbar0=self.main.snapshots[start_index].n.max(),
            pbar=barrier.snapshot_pressure_bound(self.main, x0, self.main.times[start_index]),
            dim=dim,
        )


class ExperimentRunner:
    def __init__(self):
        self.checks: Dict[CheckName, Callable[..., ReportEntry]] = {
            CheckName.EXPONENT_CONSTANTS: self._exponent_constants,
            CheckName.NUTRIENT_LOWER_BOUND: self._nutrient_lower_bound,
            CheckName.MASS_BALANCE: self._mass_balance,
            CheckName.PRESSURE_CONSISTENCY: self._pressure_consistency,
            CheckName.SWEEP_CAUCHY: self._sweep_cauchy,
            CheckName.SUPPORT_NESTING: self._support_nesting,
            CheckName.AB_MOMENT_UNIFORMITY: self._ab_uniformity,
            CheckName.AB_MOMENT_MONOTONE: self._ab_monotone,
            CheckName.OBSTACLE_RESIDUAL: self._obstacle_residual,
            CheckName.OBSTACLE_REFINEMENT: self._obstacle_refinement,
            CheckName.ETA_CONSISTENCY: self._eta_consistency,
            CheckName.POSITIVITY_CONTAINMENT: self._containment,
            CheckName.PATCH_AGREEMENT: self._patch_agreement,
            CheckName.FRONT_SPEED: self._front_speed,
            CheckName.HOLDER_EXPONENT: self._holder_exponent,
            CheckName.HOPF_LAX: self._hopf_lax,
            CheckName.HOPF_LAX_REFINEMENT: self._hopf_lax_refinement,
            CheckName.HJB_RESIDUAL: self._hjb_residual,
            CheckName.HJB_REFINEMENT: self._hjb_refinement,
            CheckName.BARRIER_COMPARISON: self._barrier_comparison,
            CheckName.BARRIER_MECHANICS: self._barrier_mechanics,
            CheckName.CLASSIFICATION: self._classification,
            CheckName.NONDEGENERACY: self._nondegeneracy,
            CheckName.QUADRATIC_BOUND: self._quadratic_bound,
        }

    def run(
        self,
        config: ExperimentConfig,
        store: ArtifactStore,
        threads: Optional[int] = None,
    ) -> VerificationReport:
        """Every enabled check once, in CheckName order, plus the artifacts they produce."""
        with structlog.contextvars.bound_contextvars(experiment=config.name):
            logger.info("Experiment started", checks=len(config.checks.enabled), threads=threads or settings.THREADS)
            fine = Pipeline(config, threads=threads)
            coarse = Pipeline(config, cells=config.grid.cells // 2, threads=threads) if config.run.refinement else None
            if coarse is not None and coarse.grid.cells_per_axis < 3:
                raise UsageError(f"grid.cells={config.grid.cells} is too small to refine")

            report = self.evaluate(config.checks.enabled, fine, coarse, store)

            if any(check not in ANALYTIC_CHECKS for check in config.checks.enabled):
                self.write_fields(fine, store)
            store.write_report(report)
            logger.info(
                "Experiment finished",
                entries=len(report.entries),
                failures=[entry.check for entry in report.failures()],
                skipped=[entry.check for entry in report.skipped()],
            )
            return report

    def evaluate(
        self,
        checks: Sequence[CheckName],
        fine: Pipeline,
        coarse: Optional[Pipeline],
        store: ArtifactStore,
    ) -> VerificationReport:
        report = VerificationReport()
        for check in CheckName:
            if check in checks:
                report.add(self.run_check(check, fine, coarse, store))
        return report

    def run_check(
        self,
        check: CheckName,
        fine: Pipeline,
        coarse: Optional[Pipeline],
        store: ArtifactStore,
    ) -> ReportEntry:
        with structlog.contextvars.bound_contextvars(check=check.value):
            try:
                entry = self.checks[check](fine, coarse, store)
            except HeleShawException as e:
                logger.error("Check failed to evaluate", error=str(e), code=e.code)
                raise CheckError(check.value, e)
            logger.info("Check evaluated", status=entry.status.value, measured=entry.measured)
            return entry

    def write_fields(self, pipeline: Pipeline, store: ArtifactStore):
        final = pipeline.main.final
        store.write_field("rho_final", final.rho)
        store.write_field("p_final", final.p)
        store.write_field("n_final", final.n)
        store.write_field("w_final", pipeline.w)
        store.write_field("eta_final", pipeline.history[-1].eta)
        store.write_field("T", pipeline.hitting.T, pipeline.grid)
        if len(pipeline.runs) > 1:
            moments = [limit.ab_moment(run, pipeline.b) for run in pipeline.runs]
            store.write_frame("sweep.csv", limit.sweep_rows(pipeline.runs, moments))

    # Checks. Each takes (fine, coarse, store) and returns one entry.

    def _exponent_constants(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return barrier.exponent_constants_entry()

    def _nutrient_lower_bound(self, fine: Pipeline, coarse, store) -> ReportEntry:
        entries = [
            nutrient.check_lower_bound(run.nutrient_history(), run.n0_min, fine.config.tolerance.lower_bound)
            for run in fine.runs
        ]
        return max(entries, key=lambda entry: entry.measured)

    def _mass_balance(self, fine: Pipeline, coarse, store) -> ReportEntry:
        run = fine.main
        entries = []
        for state in run.snapshots:
            params = run.params.with_dt(stable_dt(state, run.params, run.params.dt))
            entries.append(pme.mass_balance(state, params, fine.config.tolerance.mass_balance))
        return max(entries, key=lambda entry: entry.measured)

    def _pressure_consistency(self, fine: Pipeline, coarse, store) -> ReportEntry:
        run = fine.main
        return pme.pressure_consistency(
            run.final, fine.saturation_level, fine.config.tolerance.pressure_consistency
        )

    def _sweep_cauchy(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return limit.l1_cauchy(fine.runs, fine.reference_run)

    def _support_nesting(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return limit.support_nesting(fine.runs)

    def _ab_uniformity(self, fine: Pipeline, coarse, store) -> ReportEntry:
        moments = [limit.ab_moment(run, fine.b) for run in fine.runs]
        return limit.ab_uniformity(moments, fine.config.tolerance.ab_uniformity)

    def _ab_monotone(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return limit.ab_monotone(fine.main, [fine.b * fraction for fraction in MONOTONE_B_FRACTIONS])

    def _obstacle_residual(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return fine.obstacle_entry()

    def _obstacle_refinement(self, fine: Pipeline, coarse: Optional[Pipeline], store) -> ReportEntry:
        if coarse is None:
            return ReportEntry.skipped(CheckName.OBSTACLE_REFINEMENT)
        return refinement_entry(
            CheckName.OBSTACLE_REFINEMENT,
            fine.obstacle_entry(),
            coarse.obstacle_entry(),
            fine.config.tolerance.refinement_ratio,
        )

    def _eta_consistency(self, fine: Pipeline, coarse, store) -> ReportEntry:
        last = fine.history[-1]
        recomputed = baiocchi.eta_from_T(fine.hitting, fine.main.nutrient_history(), last.t)
        return baiocchi.eta_consistency(recomputed, last.eta, fine.config.tolerance.eta_consistency)

    def _containment(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return baiocchi.containment_check(fine.history, fine.w_min)

    def _patch_agreement(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return baiocchi.patch_agreement(
            fine.history[-1],
            fine.main.final.rho,
            fine.main.gamma,
            fine.config.tolerance.patch_agreement,
            fine.w_min,
            fine.config.run.saturation_margin,
        )

    def _front_speed(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return baiocchi.front_speed_check(fine.hitting, fine.main.snapshots)

    def _holder_exponent(self, fine: Pipeline, coarse, store) -> ReportEntry:
        radius = HOLDER_RADIUS_CELLS * fine.grid.spacing
        fits = []
        for point in baiocchi.holder_points(fine.hitting, radius, fine.config.classify.max_points):
            try:
                fits.append(baiocchi.holder_exponent(fine.hitting, point))
            except DegenerateFitError as e:
                logger.debug("Holder fit skipped", point=point, error=str(e))
        return baiocchi.holder_report(fits, barrier.holder_alpha(fine.grid.dim), fine.config.tolerance.holder_slack)

    def _hopf_lax(self, fine: Pipeline, coarse, store) -> ReportEntry:
        scan = fine.hopf_lax_scan
        store.write_frame("hopflax_pairs.csv", hopflax.hopf_lax_rows(scan.rows))
        return scan.entry

    def _hopf_lax_refinement(self, fine: Pipeline, coarse: Optional[Pipeline], store) -> ReportEntry:
        if coarse is None:
            return ReportEntry.skipped(CheckName.HOPF_LAX_REFINEMENT)
        return hopflax.constant_drift(
            fine.hopf_lax_scan, coarse.hopf_lax_scan, fine.config.tolerance.hopf_lax_drift_steps
        )

    def _hjb_residual(self, fine: Pipeline, coarse, store) -> ReportEntry:
        return fine.hjb_entry()

    def _hjb_refinement(self, fine: Pipeline, coarse: Optional[Pipeline], store) -> ReportEntry:
        if coarse is None:
            return ReportEntry.skipped(CheckName.HJB_REFINEMENT)
        return refinement_entry(
            CheckName.HJB_REFINEMENT, fine.hjb_entry(), coarse.hjb_entry(), fine.config.tolerance.refinement_ratio
        )

    def _barrier_comparison(self, fine: Pipeline, coarse, store) -> ReportEntry:
        entry, trajectory = barrier.verify_comparison(
            fine.main,
            fine.barrier_config(),
            fine.barrier_start_index(),
            fine.config.tolerance.barrier,
            fine.config.barrier.ode_substeps,
            fine.config.run.saturation_margin,
        )
        store.write_frame("trajectory.csv", trajectory.frame())
        return entry

    def _barrier_mechanics(self, fine: Pipeline, coarse, store) -> ReportEntry:
        config = fine.barrier_config()
        outer = config.m * config.r0
        start = fine.main.times[fine.barrier_start_index()]
        span = fine.main.times[-1] - start
        if span <= 0:
            return ReportEntry.skipped(CheckName.BARRIER_MECHANICS)

        def H(t: float) -> float:
            return config.pbar(t, outer) / outer ** 2

        dt = fine.config.run.snapshot_interval / fine.config.barrier.ode_substeps
        return barrier.lower_bound_mechanics(config.dim, config.r0, config.nbar0, H, span, dt, config.m)

    def _classification(self, fine: Pipeline, coarse: Optional[Pipeline], store) -> ReportEntry:
        reference = coarse.normal_map().seminorm if coarse is not None and coarse.boundary_points else None
        result = fine.normal_map(reference)
        store.write_frame(
            "classification.csv", obstacle_lab.classification_rows(fine.classified, fine.hitting.at)
        )
        return result.entry

    def _nondegeneracy(self, fine: Pipeline, coarse, store) -> ReportEntry:
        if not fine.boundary_points:
            return ReportEntry.skipped(CheckName.NONDEGENERACY)
        entries = [
            obstacle_lab.nondegeneracy_check(
                fine.w, point, fine.ladder(), fine.source(point), fine.config.tolerance.nondegeneracy
            )
            for point in fine.boundary_points
        ]
        evaluated = [entry for entry in entries if not np.isnan(entry.tolerance)]
        return min(evaluated, key=lambda entry: entry.measured) if evaluated else entries[0]

    def _quadratic_bound(self, fine: Pipeline, coarse, store) -> ReportEntry:
        if not fine.boundary_points:
            return ReportEntry.skipped(CheckName.QUADRATIC_BOUND)
        mu = max(abs(fine.source(point)) for point in fine.boundary_points)
        entries = [
            obstacle_lab.quadratic_bound_check(fine.w, point, fine.ladder(), mu) for point in fine.boundary_points
        ]
        return max(entries, key=lambda entry: entry.measured)


experiment_runner = ExperimentRunner()
