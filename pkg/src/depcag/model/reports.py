"""
Filename: reports.py
Description:
    Reports produced by verification and certification operations. Every
    report carries a `report_type` discriminator and holds plain JSON-ready
    values so that identical inputs serialise to identical bytes.

License: Apache 2.0
"""
from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field


class ReportType(str, Enum):
    """Report kinds produced by depcag.

    """
    CONDITION_C = "condition_c"
    THEOREM_CONDITIONS = "theorem_conditions"
    ED1 = "ed1"
    EDP = "edp"
    KERNEL_DISCREPANCY = "kernel_discrepancy"
    BOUNDED = "bounded"
    LIPSCHITZ_BOUND = "lipschitz_bound"
    SERIES_TAIL = "series_tail"
    DIFFERENCE_RESIDUAL = "difference_residual"
    ENVELOPE = "envelope"
    MAP_VALUE = "map_value"
    INVERSE = "inverse"
    SOLUTION_MAPPING = "solution_mapping"
    HOLDER = "holder"
    UNIFORM_CONTINUITY = "uniform_continuity"
    TOLERANCE_SCALING = "tolerance_scaling"
    CHECK = "check"
    DICHOTOMY = "dichotomy"
    CERTIFY_ALL = "certify_all"
    BOUNDED_SET = "bounded_set"
    CONJUGACY = "conjugacy"


class Regime(str, Enum):
    """Which corollary constants apply."""
    GENERAL = "general"
    ODE_LIMIT = "ode_limit"      # A0 == 0
    PURE_PCA = "pure_pca"        # A == 0


class Report(BaseModel):
    """Base class for all reports

    """
    report_type: ReportType


class ConditionCRow(BaseModel):
    k: int
    rho_plus_A: float
    rho_minus_A: float
    rho_plus_A0: float
    rho_minus_A0: float


class ConditionCReport(Report):
    """Condition (C) and rho(A) over an index window."""
    report_type: Literal[ReportType.CONDITION_C] = Field(default=ReportType.CONDITION_C)
    window: tuple[int, int]
    nu_plus: float
    nu_minus: float
    rho_A: float
    satisfied: bool
    per_interval: list[ConditionCRow]


class TheoremConditions(Report):
    """Scalar hypotheses of the conjugacy theorems and the constants they derive."""
    report_type: Literal[ReportType.THEOREM_CONDITIONS] = Field(default=ReportType.THEOREM_CONDITIONS)
    regime: Regime
    # inputs
    M: float
    M0: float
    mu: float
    ell1: float
    ell2: float
    K: float
    alpha: float
    theta: float
    rho_A: float
    rho_star: float
    # general constants
    F1_theta: float
    F0_theta: float
    v: float
    v_tilde: float
    fpt_lhs: float
    gamma_star: float
    alpha_upper: Optional[float]
    p1: Optional[float]
    p2: Optional[float]
    # corollary constants
    F1_tilde_theta: float
    v0: float
    v_tilde0: float
    u_tilde0: float
    p1_tilde: Optional[float]
    p2_tilde: Optional[float]
    # constants used by the regime
    p1_applicable: Optional[float]
    p2_applicable: Optional[float]
    flags: dict[str, bool]
    strong_ok: bool
    holder_ok: bool


class ED1Report(Report):
    """Sampled check of ||Z_p(t,s)|| <= K exp(-alpha |t-s|)."""
    report_type: Literal[ReportType.ED1] = Field(default=ReportType.ED1)
    window: tuple[int, int]
    samples_per_interval: int
    K: float
    K_auto: bool
    alpha: float
    worst_ratio: float
    worst_t: float
    worst_s: float
    growth_ok: bool
    passed: bool


class EDPReport(Report):
    """Discrete dichotomy of the one-step reduction."""
    report_type: Literal[ReportType.EDP] = Field(default=ReportType.EDP)
    window: tuple[int, int]
    P_hat: list[list[float]]
    K_hat: Optional[float]
    r: Optional[float]
    worst_ratio: Optional[float]
    constant_reduction: bool
    passed: bool
    detail: str = ""


class KernelDiscrepancyReport(Report):
    report_type: Literal[ReportType.KERNEL_DISCREPANCY] = Field(default=ReportType.KERNEL_DISCREPANCY)
    max_difference: float
    worst_t: float
    worst_s: float


class BoundedValue(Report):
    """A value of the bounded-solution operator with its error bar."""
    report_type: Literal[ReportType.BOUNDED] = Field(default=ReportType.BOUNDED)
    t: float
    value: list[float]
    error_bar: float
    horizon: float
    tail_bound: float
    quadrature_error: float


class LipschitzBoundRow(BaseModel):
    t: float
    norm: float
    error_bar: float
    passed: bool


class LipschitzBoundReport(Report):
    """|x*_g| <= (2 K rho* / alpha) |g| at sample times."""
    report_type: Literal[ReportType.LIPSCHITZ_BOUND] = Field(default=ReportType.LIPSCHITZ_BOUND)
    bound: float
    rows: list[LipschitzBoundRow]
    violations: list[float]
    passed: bool


class SeriesTailReport(Report):
    """Partial sums of the four series whose convergence the bounded operator needs."""
    report_type: Literal[ReportType.SERIES_TAIL] = Field(default=ReportType.SERIES_TAIL)
    k: int
    terms: int
    partial_sums: list[float]
    last_terms: list[float]
    fitted_ratios: list[Optional[float]]
    passed: bool


class DifferenceResidualReport(Report):
    report_type: Literal[ReportType.DIFFERENCE_RESIDUAL] = Field(default=ReportType.DIFFERENCE_RESIDUAL)
    residuals: list[float]
    max_residual: float
    passed: bool


class EnvelopeRow(BaseModel):
    xi: list[float]
    xi_prime: list[float]
    t: float
    difference: float
    envelope: float
    margin: float


class EnvelopeReport(Report):
    """|x(t,tau,xi') - x(t,tau,xi)| <= |xi - xi'| exp(p |t - tau|)."""
    report_type: Literal[ReportType.ENVELOPE] = Field(default=ReportType.ENVELOPE)
    p_name: str
    p: float
    tau: float
    rows: list[EnvelopeRow]
    passed: bool


class MapValue(Report):
    """A value of chi, vartheta, H or L."""
    report_type: Literal[ReportType.MAP_VALUE] = Field(default=ReportType.MAP_VALUE)
    map: str
    t: float
    argument: list[float]
    value: list[float]
    error_bar: float
    iterations: Optional[int] = None
    increments: list[float] = Field(default_factory=list)


class InverseRow(BaseModel):
    xi: list[float]
    residual_LH: float
    residual_HL: float
    error_bar: float
    passed: bool


class InverseReport(Report):
    report_type: Literal[ReportType.INVERSE] = Field(default=ReportType.INVERSE)
    t: float
    rows: list[InverseRow]
    max_residual: float
    passed: bool


class SolutionMappingRow(BaseModel):
    t: float
    residual: float
    distance: float


class SolutionMappingReport(Report):
    """H along a nonlinear trajectory solves the linear system."""
    report_type: Literal[ReportType.SOLUTION_MAPPING] = Field(default=ReportType.SOLUTION_MAPPING)
    tau: float
    xi: list[float]
    rows: list[SolutionMappingRow]
    max_residual: float
    residual_tolerance: float
    max_distance: float
    distance_bound: float
    passed: bool


class HolderSample(BaseModel):
    map: Literal["H", "L"]
    delta: float
    d_input: float
    d_output: float
    bound: float
    implied_exponent: Optional[float]
    passed: bool


class HolderReport(Report):
    report_type: Literal[ReportType.HOLDER] = Field(default=ReportType.HOLDER)
    t: float
    exponent_H: float
    coeff_H: float
    exponent_L: float
    coeff_L: float
    empirical: list[HolderSample]
    passed: bool


class UniformContinuityReport(Report):
    report_type: Literal[ReportType.UNIFORM_CONTINUITY] = Field(default=ReportType.UNIFORM_CONTINUITY)
    t: float
    eps: float
    L_param: float
    suggested_L: Optional[float]
    D_H: float
    delta_H: float
    D_L: float
    delta_L: float
    max_change_H: float
    max_change_L: float
    pairs: int
    passed: bool


class ToleranceScalingReport(Report):
    report_type: Literal[ReportType.TOLERANCE_SCALING] = Field(default=ReportType.TOLERANCE_SCALING)
    tolerances: tuple[float, float]
    residuals: tuple[float, float]
    error_bars: tuple[float, float]
    ladder: list[float] = Field(default_factory=list)
    picard_errors: list[float] = Field(default_factory=list)
    ratio: Optional[float]


class CheckReport(Report):
    report_type: Literal[ReportType.CHECK] = Field(default=ReportType.CHECK)
    condition_c: ConditionCReport
    conditions: TheoremConditions
    passed: bool


class DichotomyReport(Report):
    """ED1 and EDP verdicts, reported side by side and never merged."""
    report_type: Literal[ReportType.DICHOTOMY] = Field(default=ReportType.DICHOTOMY)
    ed1: ED1Report
    edp: Optional[EDPReport] = None
    kernel: Optional[KernelDiscrepancyReport] = None
    passed: bool


class BoundedReport(Report):
    """Bounded-solution values at the requested times."""
    report_type: Literal[ReportType.BOUNDED_SET] = Field(default=ReportType.BOUNDED_SET)
    forcing: list[str]
    values: list[BoundedValue]
    lipschitz: LipschitzBoundReport
    passed: bool


class ConjugacyReport(Report):
    """One conjugacy sub-command and its outcome."""
    report_type: Literal[ReportType.CONJUGACY] = Field(default=ReportType.CONJUGACY)
    cmd: str
    conditions: TheoremConditions
    result: Annotated[
        Union[MapValue, InverseReport, HolderReport, SolutionMappingReport, UniformContinuityReport,
              ToleranceScalingReport],
        Field(discriminator="report_type"),
    ]
    passed: bool


class CertificationItem(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class CertifyAllReport(Report):
    report_type: Literal[ReportType.CERTIFY_ALL] = Field(default=ReportType.CERTIFY_ALL)
    items: list[CertificationItem]
    passed: bool


AnyReport = Annotated[
    Union[
        ConditionCReport, TheoremConditions, ED1Report, EDPReport, KernelDiscrepancyReport,
        BoundedValue, LipschitzBoundReport, SeriesTailReport, DifferenceResidualReport,
        EnvelopeReport, MapValue, InverseReport, SolutionMappingReport, HolderReport,
        UniformContinuityReport, ToleranceScalingReport, CheckReport, DichotomyReport,
        CertifyAllReport, BoundedReport, ConjugacyReport,
    ],
    Field(discriminator="report_type"),
]


class RunRecord(BaseModel):
    """What a command writes: the report plus everything needed to reproduce it."""
    command: str
    config_hash: str
    seed: int
    constants: dict[str, float]
    report: AnyReport
