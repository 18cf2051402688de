"""
Filename: commands.py
Description:
    Command implementations behind the depcag CLI. Each command takes a
    validated RunConfig (through a Run) and returns a report; exit codes,
    option parsing and output placement live in main.py.

License: Apache 2.0
"""
import time
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from ..config import config
from ..engine.bounded import TruncationPolicy, bounded_values, lipschitz_bound_check
from ..engine.conjugacy import (
    ConjugacyEngine,
    certify_inverse,
    certify_solution_mapping,
    holder_certify,
    tolerance_scaling,
    uniform_continuity_certify,
)
from ..engine.dichotomy import (
    GreenContext,
    certified_dichotomy,
    edp_verdict,
    green_bound_ratio,
    kernel_discrepancy,
    promote_discrete_projection,
    verify_ed1,
)
from ..engine.dynamics import Trajectory, continuity_envelope_check, evaluate_conditions, integrate_depcag
from ..engine.error import DepcagError, DomainError
from ..engine.flow import (
    check_condition_c,
    closed_form_reduction,
    discrete_reduction,
    table_for,
    transition_residual,
)
from ..model.dichotomy import DichotomySpec
from ..model.reports import (
    BoundedReport,
    CertificationItem,
    CertifyAllReport,
    CheckReport,
    ConjugacyReport,
    DichotomyReport,
    ED1Report,
    EDPReport,
    Report,
    RunRecord,
    ToleranceScalingReport,
)
from ..model.runconfig import RunConfig
from ..model.system import ForcingTerm, Nonlinearity
from ..utils.log import setup_logger

logger = setup_logger("depcag.cli")

_COCYCLE_TOL = 1e-6
_TRANSITION_TOL = 1e-4
_ORACLE_TOL = 1e-6
_SCALING_RANGE = (0.2, 0.9)
_GREEN_SLACK = 1e-6
_HOLDER_DELTAS = (1e-2, 1e-3, 1e-4)


class ConjugacyCommand(str, Enum):
    H = "H"
    L = "L"
    INVERSE = "inverse"
    HOLDER = "holder"
    MAP_CHECK = "map-check"
    CONTINUITY = "continuity"
    SCALING = "scaling"


class Resolved:
    """A dichotomy with certified K, the context it was verified on and the verdicts."""

    def __init__(self, ctx: GreenContext, ed1: ED1Report, edp: Optional[EDPReport]):
        self.ctx = ctx
        self.ed1 = ed1
        self.edp = edp

    @property
    def dicho(self) -> DichotomySpec:
        return self.ctx.dicho


class Run:
    """One command invocation: the built system, nonlinearity and the constants it used."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.seed = cfg.seed
        self.sys = cfg.build_system()
        self.f = cfg.build_nonlinearity()
        self.engine = cfg.engine
        self.constants: dict[str, float] = {"M": self.sys.M.value, "M0": self.sys.M0.value, "theta": self.sys.theta}
        if self.f is not None:
            self.constants.update(mu=self.f.mu.value, ell1=self.f.ell1.value, ell2=self.f.ell2.value)
        self._resolved: Optional[Resolved] = None

    @property
    def window(self) -> tuple[int, int]:
        return self.engine.window

    @property
    def window_times(self) -> tuple[float, float]:
        lo, hi = self.window
        return float(self.sys.grid.t(lo)), float(self.sys.grid.t(hi + 1))

    @property
    def nonlinearity(self) -> Nonlinearity:
        return self.f if self.f is not None else Nonlinearity.zero(self.sys.dim)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def resolve_dichotomy(self) -> Resolved:
        """
        The configured dichotomy with K certified on the index window.

        With P = "discrete-auto" the projection is promoted from the spectral
        splitting of the one-step reduction, which must be constant.
        """
        if self._resolved is not None:
            return self._resolved
        lo, hi = self.window
        t_lo, t_hi = self.window_times
        dicho = self.cfg.build_dichotomy()
        edp = None
        if dicho is None:
            table = table_for(self.sys, t_lo, t_hi, self.engine.quad_step, margin=1)
            mats = discrete_reduction(self.sys, lo, hi, table)
            edp, dd = edp_verdict(mats, (lo, hi))
            if dd is None:
                raise DomainError(f"discrete-auto projection unavailable: {edp.detail}")
            dicho = promote_discrete_projection(table, dd, self.cfg.dichotomy.alpha)
            cc = check_condition_c(self.sys, table.lo, table.hi, table.h)
            ctx = GreenContext(self.sys, dicho, table, cc)
        else:
            ctx = GreenContext.build(self.sys, dicho, t_lo, t_hi, self.engine.quad_step)
        ed1 = verify_ed1(ctx, lo, hi, self.engine.samples_per_interval)
        ctx = ctx.with_dichotomy(certified_dichotomy(ctx, ed1))
        self.constants.update(K=ctx.K, alpha=ctx.alpha, rho_A=ctx.rho_A, rho_star=ctx.rho_star)
        self._resolved = Resolved(ctx, ed1, edp)
        return self._resolved

    def context_for(self, t_lo: float, t_hi: float) -> GreenContext:
        """Green context with the certified dichotomy whose table covers [t_lo - T, t_hi + T]."""
        dicho = self.resolve_dichotomy().dicho
        T = self.horizon(dicho)
        theta = self.sys.theta
        return GreenContext.build(self.sys, dicho, t_lo - T - theta, t_hi + T + theta, self.engine.quad_step)

    def horizon(self, dicho: DichotomySpec) -> float:
        if self.engine.horizon_T is not None:
            return self.engine.horizon_T
        return TruncationPolicy.default_horizon(dicho.alpha, self.sys.theta)

    def conjugacy_engine(self, t_lo: float, t_hi: float) -> ConjugacyEngine:
        e = self.engine
        t_range = (min(t_lo, e.t_range[0]), max(t_hi, e.t_range[1]))
        return ConjugacyEngine.build(self.sys, self.nonlinearity, self.resolve_dichotomy().dicho, t_range,
                                     e.horizon_T, e.picard_tol, e.mesh_step)

    def record(self, command: str, report: Report) -> RunRecord:
        return RunRecord(command=command, config_hash=self.cfg.config_hash(), seed=self.seed,
                         constants=dict(sorted(self.constants.items())), report=report)


# commands

def check(run: Run) -> CheckReport:
    lo, hi = run.window
    cc = check_condition_c(run.sys, lo, hi, run.engine.quad_step)
    resolved = run.resolve_dichotomy()
    cond = evaluate_conditions(run.sys, run.f, resolved.dicho, cc.rho_A)
    return CheckReport(condition_c=cc, conditions=cond, passed=cc.satisfied and cond.strong_ok)


def dichotomy(run: Run) -> DichotomyReport:
    resolved = run.resolve_dichotomy()
    lo, hi = run.window
    edp = resolved.edp
    if edp is None:
        try:
            edp, _ = edp_verdict(discrete_reduction(run.sys, lo, hi, resolved.ctx.table), (lo, hi))
        except DomainError as e:
            # non-constant reduction: no spectral splitting to report
            logger.info(f"edp skipped: {e.message}")
    t_lo, t_hi = run.window_times
    ts = np.linspace(t_lo, t_hi, 41)
    kernel = kernel_discrepancy(resolved.ctx, ts, ts + 0.5 * (ts[1] - ts[0]))
    return DichotomyReport(ed1=resolved.ed1, edp=edp, kernel=kernel, passed=resolved.ed1.passed)


def solve(run: Run, xi: Sequence[float], tau: float, t_end: float) -> Trajectory:
    """Trajectory of the configured (possibly nonlinear) system through (tau, xi)."""
    if len(xi) != run.sys.dim:
        raise DomainError(f"xi has {len(xi)} components, system has dim={run.sys.dim}")
    return integrate_depcag(run.sys, run.f, tau, list(xi), t_end, step=run.engine.quad_step)


def forcing(run: Run, components: Sequence[str]) -> ForcingTerm:
    if len(components) != run.sys.dim:
        raise DomainError(f"g has {len(components)} components, system has dim={run.sys.dim}")
    return ForcingTerm.certify(list(components), run.cfg.system.t_range, config.samples, config.inflation)


def bounded(run: Run, components: Sequence[str], ts: Sequence[float]) -> BoundedReport:
    g = forcing(run, components)
    ctx = run.context_for(min(ts), max(ts))
    policy = TruncationPolicy.build(ctx, g.g_sup.value, run.horizon(ctx.dicho))
    values = bounded_values(ctx, g, ts, policy)
    lipschitz = lipschitz_bound_check(ctx, g, ts, policy)
    return BoundedReport(forcing=list(components), values=values, lipschitz=lipschitz, passed=lipschitz.passed)


def _random_states(run: Run, count: int, scale: float = 1.0) -> np.ndarray:
    return run.rng().uniform(-scale, scale, size=(count, run.sys.dim))


def conjugacy(run: Run, cmd: ConjugacyCommand, t: float, xi: Optional[Sequence[float]] = None,
              eps: float = 1e-2, L_param: Optional[float] = None) -> ConjugacyReport:
    engine = run.conjugacy_engine(t, t)
    point = np.asarray(xi if xi is not None else [0.5] * run.sys.dim, dtype=float)
    match cmd:
        case ConjugacyCommand.H | ConjugacyCommand.L:
            value = engine.H_map(t, point) if cmd is ConjugacyCommand.H else engine.L_map(t, point)
            distance = float(np.linalg.norm(np.asarray(value.value) - point))
            result, passed = value, distance <= engine.proximity_bound + value.error_bar
        case ConjugacyCommand.INVERSE:
            result = certify_inverse(engine, _random_states(run, 20), t)
            passed = result.passed
        case ConjugacyCommand.HOLDER:
            result = holder_certify(engine, t, _HOLDER_DELTAS, seed=run.seed)
            passed = result.passed
        case ConjugacyCommand.MAP_CHECK:
            t_lo, t_hi = run.engine.t_range
            result = certify_solution_mapping(engine, t, point, np.linspace(min(t, t_lo), max(t, t_hi), 50))
            passed = result.passed
        case ConjugacyCommand.CONTINUITY:
            result = uniform_continuity_certify(engine, t, eps, L_param, seed=run.seed)
            passed = result.passed
        case ConjugacyCommand.SCALING:
            result = tolerance_scaling(engine, _random_states(run, 20), t)
            passed = _scaling_ok(result)
        case _:
            raise DomainError(f"unknown conjugacy command {cmd!r}")
    return ConjugacyReport(cmd=cmd.value, conditions=engine.cond, result=result, passed=passed)


def _scaling_ok(report: ToleranceScalingReport) -> bool:
    low, high = _SCALING_RANGE
    return report.ratio is None or low <= report.ratio <= high


# certify-all

def _item(name: str, fn: Callable[[], tuple[bool, str]]) -> CertificationItem:
    started = time.perf_counter()
    try:
        passed, detail = fn()
    except DepcagError as e:
        passed, detail = False, e.message
    logger.info(f"certify {name} passed={passed} elapsed={time.perf_counter() - started:.2f}s")
    return CertificationItem(name=name, passed=passed, detail=detail)


def _cocycle(run: Run, ctx: GreenContext, count: int = 100) -> tuple[bool, str]:
    """||Z(t,tau) Z(tau,s) - Z(t,s)|| on random triples within ten time units of each other."""
    t_lo, t_hi = run.window_times
    rng = run.rng()
    worst = 0.0
    for _ in range(count):
        centre = rng.uniform(t_lo + 5.0, t_hi - 5.0) if t_hi - t_lo > 10.0 else 0.5 * (t_lo + t_hi)
        t, tau, s = np.clip(centre + rng.uniform(-5.0, 5.0, size=3), t_lo, t_hi)
        table = ctx.table
        left, right = table.z(t, tau), table.z(tau, s)
        scale = max(1.0, float(np.linalg.norm(left, 2) * np.linalg.norm(right, 2)))
        worst = max(worst, float(np.linalg.norm(left @ right - table.z(t, s), 2)) / scale)
    return worst <= _COCYCLE_TOL, f"max relative defect {worst:.3e}"


def _transition(run: Run, ctx: GreenContext, count: int = 200) -> tuple[bool, str]:
    """Finite-difference residual of the linear equation for Z(t, tau) at random interior times."""
    t_lo, t_hi = run.window_times
    rng = run.rng()
    ts = rng.uniform(t_lo, t_hi, size=count)
    worst = float(transition_residual(run.sys, ctx.table, ts, 0.5 * (t_lo + t_hi)).max())
    return worst <= _TRANSITION_TOL, f"max relative residual {worst:.3e} at {count} times"


def _edp_oracle(run: Run, ctx: GreenContext) -> tuple[bool, str]:
    """One-step reduction against its matrix-exponential form and the discrete dichotomy it carries."""
    lo, hi = run.window
    mats = discrete_reduction(run.sys, lo, hi, ctx.table)
    edp, _ = edp_verdict(mats, (lo, hi))
    if not (run.sys.A.is_constant and run.sys.A0.is_constant):
        return edp.passed, f"r={edp.r} closed form not applicable: coefficients depend on t"
    exact = closed_form_reduction(run.sys, lo, hi)
    defect = max(float(np.linalg.norm(m - e, 2)) / max(1.0, float(np.linalg.norm(e, 2))) for m, e in zip(mats, exact))
    return edp.passed and defect <= _ORACLE_TOL, f"r={edp.r} max relative defect {defect:.3e}"


def certify_all(run: Run) -> CertifyAllReport:
    """Every acceptance check on one configuration, each recorded as a pass/fail item."""
    lo, hi = run.window
    cc = check_condition_c(run.sys, lo, hi, run.engine.quad_step)
    items = [CertificationItem(name="condition_c", passed=cc.satisfied,
                               detail=f"nu+={cc.nu_plus:.4g} nu-={cc.nu_minus:.4g} rho(A)={cc.rho_A:.6g}")]
    if not cc.satisfied:
        return CertifyAllReport(items=items, passed=False)

    resolved = run.resolve_dichotomy()
    ed1 = resolved.ed1
    items.append(CertificationItem(name="ed1", passed=ed1.passed,
                                   detail=f"K={ed1.K:.6g} worst_ratio={ed1.worst_ratio:.6g}"))
    if not ed1.passed:
        return CertifyAllReport(items=items, passed=False)

    cond = evaluate_conditions(run.sys, run.f, resolved.dicho, cc.rho_A)
    items.append(CertificationItem(name="strong_conditions", passed=cond.strong_ok,
                                   detail=f"flags={dict(sorted(cond.flags.items()))} gamma*={cond.gamma_star:.6g}"))
    items.append(_item("cocycle", lambda: _cocycle(run, resolved.ctx)))
    items.append(_item("transition_residual", lambda: _transition(run, resolved.ctx)))
    items.append(_item("edp_oracle", lambda: _edp_oracle(run, resolved.ctx)))

    def green_bound() -> tuple[bool, str]:
        w_lo, w_hi = run.window_times
        ts = np.linspace(w_lo, w_hi, 100, endpoint=False)
        ratio = green_bound_ratio(resolved.ctx, ts, ts + 0.37 * (ts[1] - ts[0]))
        return ratio <= 1.0 + _GREEN_SLACK, f"max ||G|| / (K rho* exp(-alpha|t-s|)) = {ratio:.6g}"

    items.append(_item("green_bound", green_bound))

    t_lo, t_hi = run.engine.t_range
    times = np.linspace(t_lo, t_hi, 5)

    def bounded_bound() -> tuple[bool, str]:
        report = bounded(run, ["1"] * run.sys.dim, times.tolist())
        bar = max(v.error_bar for v in report.values)
        return report.passed, f"bound={report.lipschitz.bound:.6g} error_bar={bar:.3e}"

    items.append(_item("bounded_solution_bound", bounded_bound))

    try:
        engine = run.conjugacy_engine(t_lo, t_hi)
    except DepcagError as e:
        items.append(CertificationItem(name="fixed_point_contraction", passed=False, detail=e.message))
        engine = None
    else:
        items.append(CertificationItem(name="fixed_point_contraction", passed=True,
                                       detail=f"gamma*={engine.cond.gamma_star:.6g}"))

    if engine is not None:
        items.extend(_conjugacy_items(run, engine, times))
    items.append(_item("continuity_envelope", lambda: _envelope(run, 0.5 * (t_lo + t_hi))))
    return CertifyAllReport(items=items, passed=all(i.passed for i in items))


def _envelope(run: Run, tau: float) -> tuple[bool, str]:
    rng = run.rng()
    base = rng.uniform(-1.0, 1.0, size=(20, run.sys.dim))
    shifted = base + rng.uniform(-0.1, 0.1, size=base.shape)
    r = continuity_envelope_check(run.sys, run.f, list(zip(base, shifted)), tau,
                                  tau + np.linspace(-5.0, 5.0, 11), run.engine.quad_step)
    return r.passed, f"{r.p_name}={r.p:.6g} min margin {min(row.margin for row in r.rows):.3e}"


def _conjugacy_items(run: Run, engine: ConjugacyEngine, times: np.ndarray) -> list[CertificationItem]:
    samples = _random_states(run, 50)
    t0 = float(times[0])

    def proximity(name: str) -> Callable[[], tuple[bool, str]]:
        def check_map() -> tuple[bool, str]:
            batch = engine.H_batch(t0, samples) if name == "H" else engine.L_batch(t0, samples)
            dist = np.linalg.norm(batch.values - samples, axis=-1)
            ok = bool(np.all(dist <= engine.proximity_bound + batch.error_bars))
            return ok, f"max |{name} - id| = {dist.max():.6g} bound={engine.proximity_bound:.6g}"
        return check_map

    def inverse() -> tuple[bool, str]:
        reports = [certify_inverse(engine, samples[:20], float(t)) for t in times]
        return all(r.passed for r in reports), f"max residual {max(r.max_residual for r in reports):.3e}"

    def mapping() -> tuple[bool, str]:
        r = certify_solution_mapping(engine, t0, samples[0], np.linspace(t0, float(times[-1]), 50))
        return r.passed, f"max residual {r.max_residual:.3e} max distance {r.max_distance:.3e}"

    def scaling() -> tuple[bool, str]:
        r = tolerance_scaling(engine, samples[:5], t0)
        return _scaling_ok(r), f"ratio={r.ratio} over {len(r.ladder)} tolerances residuals={r.residuals}"

    def holder() -> tuple[bool, str]:
        r = holder_certify(engine, t0, _HOLDER_DELTAS, seed=run.seed)
        return r.passed, f"C1={r.coeff_H:.6g} D1={r.coeff_L:.6g}"

    items = [
        _item("proximity_H", proximity("H")),
        _item("proximity_L", proximity("L")),
        _item("inverse", inverse),
        _item("solution_mapping", mapping),
        _item("tolerance_scaling", scaling),
    ]
    if engine.cond.holder_ok:
        items.append(_item("holder", holder))
    else:
        items.append(CertificationItem(name="holder", passed=True, detail="not applicable: alpha condition fails"))
    return items
