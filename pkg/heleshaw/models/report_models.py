# File: heleshaw/models/report_models.py

from enum import Enum
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, Field


class CheckName(str, Enum):
    EXPONENT_CONSTANTS = "exponent_constants"
    NUTRIENT_LOWER_BOUND = "nutrient_lower_bound"
    MASS_BALANCE = "mass_balance"
    PRESSURE_CONSISTENCY = "pressure_consistency"
    SWEEP_CAUCHY = "sweep_cauchy"
    SUPPORT_NESTING = "support_nesting"
    AB_MOMENT_UNIFORMITY = "ab_moment_uniformity"
    AB_MOMENT_MONOTONE = "ab_moment_monotone"
    OBSTACLE_RESIDUAL = "obstacle_residual"
    OBSTACLE_REFINEMENT = "obstacle_refinement"
    ETA_CONSISTENCY = "eta_consistency"
    POSITIVITY_CONTAINMENT = "positivity_containment"
    PATCH_AGREEMENT = "patch_agreement"
    FRONT_SPEED = "front_speed"
    HOLDER_EXPONENT = "holder_exponent"
    HOPF_LAX = "hopf_lax"
    HOPF_LAX_REFINEMENT = "hopf_lax_refinement"
    HJB_RESIDUAL = "hjb_residual"
    HJB_REFINEMENT = "hjb_refinement"
    BARRIER_COMPARISON = "barrier_comparison"
    BARRIER_MECHANICS = "barrier_mechanics"
    CLASSIFICATION = "classification"
    NONDEGENERACY = "nondegeneracy"
    QUADRATIC_BOUND = "quadratic_bound"


class ReportStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"
    INFO = "info"


# Reference each check is measured against, as cited in the report
HOPF_LAX_ANCHOR = (
    'Prop. 3.7 / eq:hj_bound_limit, "p(x_0,t_0) ≤ e^{Λ(t_1−t_0)}( p(x_1,t_1) + |x_1−x_0|²/(4∫_0^{t_1−t_0} e^{Λ(s)} ds) + C(t_1−t_0)^{7/10} e^{−λ(t_1−t_0)} )"'
)

ANCHORS: Dict[str, str] = {
    CheckName.EXPONENT_CONSTANTS: 'Theorem 4.2 proof, "ξ_d=(d/2)^{d/(d−2)}"',
    CheckName.NUTRIENT_LOWER_BOUND: r'Lemma 2.3, "$\bar{n}(t)\geq e^{-t} \bar{n}(0)$"',
    CheckName.MASS_BALANCE: 'Eq. (1.3), "∂_t ρ_γ − ∇·(ρ_γ ∇p_γ) = ρ_γ n_γ"',
    CheckName.PRESSURE_CONSISTENCY: 'Lemma 2.5, "the pressure is a solution to the variational problem"',
    CheckName.SWEEP_CAUCHY: 'Prop. 3.1, "converges strongly in"',
    CheckName.SUPPORT_NESTING: 'Prop. 3.1, "sequence of smooth solutions"',
    CheckName.AB_MOMENT_UNIFORMITY: 'Prop. 3.2, "(b[u_γ]_+ −1)exp(b[u_γ]_+)+1 is uniformly bounded"',
    CheckName.AB_MOMENT_MONOTONE: 'Prop. 3.2, "is uniformly bounded in"',
    CheckName.OBSTACLE_RESIDUAL: 'eq:w_obst_eqn, "Δw = (1 − ρ_0 − η)χ_{w>0}"',
    CheckName.OBSTACLE_REFINEMENT: 'eq:w_obst_eqn, "Δw = (1 − ρ_0 − η)χ_{w>0}"',
    CheckName.ETA_CONSISTENCY: 'eq:eta_alternate, "η(x,t) = sgn₊(t−T(x)) ∫_{T(x)}^t n(x,s) ds"',
    CheckName.POSITIVITY_CONTAINMENT: 'eq:hitting_time, "records the first time that"',
    CheckName.PATCH_AGREEMENT: 'eq:w_def "w(x,t):=∫_0^t p(x,s) ds"',
    CheckName.FRONT_SPEED: 'eq:hitting_time, "T(x):= inf{t>0: w(x,t)>0}"',
    CheckName.HOLDER_EXPONENT: 'Theorem 4.2, "sup_{y∈B_R(x_1)} T(x_1)−T(y) ≲ R^{α_d}"',
    CheckName.HOPF_LAX: HOPF_LAX_ANCHOR,
    CheckName.HOPF_LAX_REFINEMENT: HOPF_LAX_ANCHOR,
    CheckName.HJB_RESIDUAL: 'Cor. 3.3 / eq:p_hjb, "∂_t p − |∇p|² + u₊ p ≥ 0"',
    CheckName.HJB_REFINEMENT: 'Cor. 3.3 / eq:p_hjb, "∂_t p − |∇p|² + u₊ p ≥ 0"',
    CheckName.BARRIER_COMPARISON: 'Lemma 4.1, "then p(t_0+t,x) ≤ ψ(t,x)"',
    CheckName.BARRIER_MECHANICS: 'eq:radius_ode "r\'(t) = −|∇ψ(t,y)|, |y−x0| = r(t)"',
    CheckName.CLASSIFICATION: 'Prop. 5.8, "ν ∈ C^{0,α/(1+α)}_{loc}(R)"',
    CheckName.NONDEGENERACY: 'Lemma A.1 (Blank Thm 2.1), "sup_{B_r} u ≥ (λ/2d) r²"',
    CheckName.QUADRATIC_BOUND: 'Lemma quad_blowup_cpt, "the quadratic blowup sequence"',
}


class ReportEntry(BaseModel):
    check: str
    measured: float
    tolerance: float
    status: ReportStatus
    anchor: str
    details: Dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != ReportStatus.FAIL

    @classmethod
    def compare(
        cls,
        check: CheckName,
        measured: float,
        tolerance: float,
        at_least: bool = False,
        details: Optional[Dict[str, float]] = None,
    ) -> "ReportEntry":
        ok = measured >= tolerance if at_least else measured <= tolerance
        return cls(
            check=check.value,
            measured=float(measured),
            tolerance=float(tolerance),
            status=ReportStatus.PASS if ok else ReportStatus.FAIL,
            anchor=ANCHORS[check],
            details=details or {},
        )

    @classmethod
    def skipped(cls, check: CheckName, reason_value: float = float("nan")) -> "ReportEntry":
        return cls(
            check=check.value,
            measured=reason_value,
            tolerance=float("nan"),
            status=ReportStatus.SKIPPED,
            anchor=ANCHORS[check],
        )

    @classmethod
    def info(cls, check: CheckName, measured: float, details: Optional[Dict[str, float]] = None) -> "ReportEntry":
        return cls(
            check=check.value,
            measured=float(measured),
            tolerance=float("nan"),
            status=ReportStatus.INFO,
            anchor=ANCHORS[check],
            details=details or {},
        )


class VerificationReport(BaseModel):
    entries: List[ReportEntry] = Field(default_factory=list)

    def add(self, entry: ReportEntry) -> ReportEntry:
        self.entries.append(entry)
        return entry

    def extend(self, entries: Iterable[ReportEntry]):
        for entry in entries:
            self.add(entry)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    def failures(self) -> List[ReportEntry]:
        return [entry for entry in self.entries if not entry.passed]

    def skipped(self) -> List[ReportEntry]:
        return [entry for entry in self.entries if entry.status == ReportStatus.SKIPPED]

    def counts(self) -> Dict[str, int]:
        return {status.value: sum(1 for entry in self.entries if entry.status == status) for status in ReportStatus}

    def names(self) -> List[str]:
        return [entry.check for entry in self.entries]

    @classmethod
    def merge(cls, reports: Iterable["VerificationReport"]) -> "VerificationReport":
        """Union of partial reports; later reports win on duplicate check names."""
        by_name: Dict[str, ReportEntry] = {}
        for report in reports:
            for entry in report.entries:
                by_name[entry.check] = entry
        return cls(entries=[by_name[name] for name in sorted(by_name)])


def refinement_entry(check: CheckName, fine: ReportEntry, coarse: ReportEntry, ratio_tol: float = 0.7) -> ReportEntry:
    """Ratio of a measured defect on the fine grid to the same defect one level coarser."""
    if coarse.measured > 0:
        ratio = fine.measured / coarse.measured
    else:
        ratio = 0.0 if fine.measured == 0 else float("inf")
    return ReportEntry.compare(check, ratio, ratio_tol, details={"fine": fine.measured, "coarse": coarse.measured})
