"""
Filename: conjugacy.py
Description:
    Grobman-Hartman maps between the quasilinear DEPCAG and its linear part.

        chi(t; tau, xi)   = -int G(t,s) f(s, x(s), x(gamma(s))) ds    along x(., tau, xi)
        vartheta(t; tau, nu) = int G(t,s) f(s, y(s) + vartheta(s), y(gamma(s)) + vartheta(gamma(s))) ds
        H(t, xi) = xi + chi(t; t, xi)
        L(t, nu) = nu + vartheta(t; t, nu)

    vartheta is the fixed point of a Gamma*-contraction and is found by
    Picard iteration on the Green-operator nodes. Every value carries an
    error bar made of the truncation tail, the quadrature estimate and, for
    vartheta, the contraction remainder.

License: Apache 2.0
"""
import math
import time
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..config import config
from ..model.dichotomy import DichotomySpec
from ..model.reports import (
    HolderReport,
    HolderSample,
    InverseReport,
    InverseRow,
    MapValue,
    SolutionMappingReport,
    SolutionMappingRow,
    TheoremConditions,
    ToleranceScalingReport,
    UniformContinuityReport,
)
from ..model.system import LinearSystem, Nonlinearity
from ..utils.log import numerical_warning, setup_logger
from .bounded import TruncationPolicy
from .dichotomy import GreenContext
from .dynamics import evaluate_conditions, integrate_span
from .error import ConditionViolationError, ConvergenceError, DomainError
from .green import GreenOperator

logger = setup_logger("depcag.conjugacy")

# Residual floor of composed maps, scaled by max(1, |xi|).
_INVERSE_FLOOR = 1e-8
_FD_DELTA = 1e-4
_MAPPING_TOLERANCE = 1e-3
_LADDER_MAX = 64


class MapBatch(NamedTuple):
    values: np.ndarray          # (B, n)
    error_bars: np.ndarray      # (B,)
    iterations: Optional[int] = None
    increments: tuple[float, ...] = ()


def _beta_tail(ctx: GreenContext, cond: TheoremConditions, T: float) -> float:
    """(2 K rho* mu / alpha) exp(-beta T) / (1 - Gamma_beta) for the largest beta = alpha / 2^m with Gamma_beta < 1."""
    if cond.mu == 0:
        return 0.0
    scale = 2.0 * ctx.K * ctx.rho_star
    beta = ctx.alpha / 2.0
    for _ in range(60):
        gamma_beta = scale * (cond.ell1 + cond.ell2 * math.exp(beta * cond.theta)) / (ctx.alpha - beta)
        if gamma_beta < 1:
            return scale * cond.mu / ctx.alpha * math.exp(-beta * T) / (1.0 - gamma_beta)
        beta /= 2.0
    return math.inf


class ConjugacyEngine:
    """Green context, nonlinearity and theorem constants for evaluating H and L.

    Immutable once built; `with_picard_tol` derives a copy.
    """

    def __init__(self, ctx: GreenContext, f: Nonlinearity, cond: TheoremConditions,
                 policy: TruncationPolicy, picard_tol: float):
        if picard_tol <= 0:
            raise DomainError(f"picard_tol must be positive, got {picard_tol}")
        self.ctx = ctx
        self.f = f
        self.cond = cond
        self.policy = policy
        self.picard_tol = picard_tol
        self.h = ctx.table.h

    @classmethod
    def build(cls, sys: LinearSystem, f: Nonlinearity, dicho: DichotomySpec, t_range: tuple[float, float],
              horizon_T: Optional[float] = None, picard_tol: Optional[float] = None,
              step: Optional[float] = None) -> "ConjugacyEngine":
        """
        :param t_range: times at which H and L will be evaluated
        :raises ConditionViolationError: K not certified, or Gamma* >= 1
        """
        if dicho.K_auto:
            raise ConditionViolationError("ED1", "K is still marked auto; certify it with verify_ed1 first")
        started = time.perf_counter()
        T = horizon_T if horizon_T is not None else TruncationPolicy.default_horizon(dicho.alpha, sys.theta)
        h = step or min(sys.theta / 50.0, config.mesh_step_cap)
        ctx = GreenContext.build(sys, dicho, t_range[0] - T - sys.theta, t_range[1] + T + sys.theta, h)
        cond = evaluate_conditions(sys, f, dicho, ctx.rho_A)
        if cond.gamma_star >= 1:
            raise ConditionViolationError("FPT", f"Gamma* = {cond.gamma_star:.6g} >= 1")
        policy = TruncationPolicy.build(ctx, f.mu.value, T)
        logger.info(
            f"conjugacy engine window=({ctx.table.lo},{ctx.table.hi}) step={h:.4g} T={T:.4g} "
            f"gamma*={cond.gamma_star:.6g} elapsed={time.perf_counter() - started:.3f}s"
        )
        return cls(ctx, f, cond, policy, picard_tol or config.picard_tol)

    def with_picard_tol(self, picard_tol: float) -> "ConjugacyEngine":
        return ConjugacyEngine(self.ctx, self.f, self.cond, self.policy, picard_tol)

    @property
    def n(self) -> int:
        return self.ctx.n

    @property
    def proximity_bound(self) -> float:
        """2 mu K rho* / alpha, the bound on |H - id| and |L - id|."""
        return 2.0 * self.ctx.green_scale() * self.f.mu.value

    def _operator(self, t_lo: float, t_hi: float) -> GreenOperator:
        T = self.policy.horizon_T
        return GreenOperator.covering(self.ctx, t_lo - T, t_hi + T)

    def _states(self, xi) -> np.ndarray:
        arr = np.atleast_2d(np.asarray(xi, dtype=float))
        if arr.shape[-1] != self.n:
            raise DomainError(f"state has dimension {arr.shape[-1]}, system has {self.n}")
        return arr

    def _f_along(self, traj):
        def forcing(k: int, nodes: np.ndarray) -> np.ndarray:
            return self.f.f.at(nodes[None, :], traj.at(nodes), traj.frozen(k)[:, None, :])
        return forcing

    # chi and H

    def chi_batch(self, tau: float, xis, t: float) -> MapBatch:
        """chi(t; tau, xi) for a batch of initial states (B, n)."""
        xis = self._states(xis)
        if self.f.is_zero:
            return MapBatch(np.zeros_like(xis), np.zeros(len(xis)))
        op = self._operator(t, t)
        lo, hi = op.time_window
        traj = integrate_span(self.ctx.sys, self.f, tau, xis, min(lo, tau), max(hi, tau), step=self.h)
        sol = op.apply(self._f_along(traj))
        values = -sol.at([t])[:, 0]
        return MapBatch(values, self.policy.tail_bound + sol.quadrature_error)

    def chi(self, tau: float, xi, t: float) -> MapValue:
        batch = self.chi_batch(tau, [xi], t)
        return MapValue(map="chi", t=t, argument=list(np.atleast_1d(xi).astype(float)),
                        value=batch.values[0].tolist(), error_bar=float(batch.error_bars[0]))

    def H_batch(self, t: float, xis) -> MapBatch:
        xis = self._states(xis)
        chi = self.chi_batch(t, xis, t)
        return MapBatch(xis + chi.values, chi.error_bars)

    def H_map(self, t: float, xi) -> MapValue:
        batch = self.H_batch(t, [xi])
        return MapValue(map="H", t=t, argument=list(np.atleast_1d(xi).astype(float)),
                        value=batch.values[0].tolist(), error_bar=float(batch.error_bars[0]))

    # vartheta and L

    def vartheta_batch(self, tau: float, nus, t: float, trace: Optional[list] = None) -> MapBatch:
        """
        Fixed point of the vartheta equation along y(s) = Z(s, tau) nu.

        :param trace: receives the iterate at t after every Picard step
        :raises ConvergenceError: picard_max_iter iterations without meeting picard_tol (1 - Gamma*)
        """
        nus = self._states(nus)
        if self.f.is_zero:
            return MapBatch(np.zeros_like(nus), np.zeros(len(nus)), iterations=1, increments=(0.0,))
        op = self._operator(min(t, tau), max(t, tau))
        w = nus @ self.ctx.table.z_to_origin([tau])[0].T
        linear = [np.einsum("nij,bj->bni", zt, w) for zt in op.zt_nodes]
        zis = [m.zeta_index for m in op.meshes]
        phi = [np.zeros_like(y) for y in linear]
        gamma = self.cond.gamma_star
        stop = self.picard_tol * (1.0 - gamma)
        increments: list[float] = []

        def forcing(k: int, nodes: np.ndarray) -> np.ndarray:
            c = k - op.lo
            x = linear[c] + phi[c]
            return self.f.f.at(nodes[None, :], x, x[:, zis[c]][:, None, :])

        started = time.perf_counter()
        for it in range(1, config.picard_max_iter + 1):
            sol = op.apply(forcing)
            increment = max(float(np.linalg.norm(new - old, axis=-1).max()) for new, old in zip(sol.values, phi))
            phi = sol.values
            increments.append(increment)
            if trace is not None:
                trace.append(sol.at([t])[:, 0])
            if increment < stop:
                break
        else:
            numerical_warning(logger, "vartheta Picard iteration stalled", iterations=config.picard_max_iter,
                              increment=increments[-1], stop=stop)
            raise ConvergenceError("vartheta Picard iteration", config.picard_max_iter, increments[-1])
        logger.debug(
            f"vartheta tau={tau} t={t} batch={len(nus)} iterations={it} increment={increments[-1]:.3e} "
            f"elapsed={time.perf_counter() - started:.3f}s"
        )
        remainder = increments[-1] * gamma / (1.0 - gamma)
        tail = _beta_tail(self.ctx, self.cond, self.policy.horizon_T)
        values = sol.at([t])[:, 0]
        return MapBatch(values, remainder + tail + sol.quadrature_error, it, tuple(increments))

    def vartheta(self, tau: float, nu, t: float) -> MapValue:
        batch = self.vartheta_batch(tau, [nu], t)
        return MapValue(map="vartheta", t=t, argument=list(np.atleast_1d(nu).astype(float)),
                        value=batch.values[0].tolist(), error_bar=float(batch.error_bars[0]),
                        iterations=batch.iterations, increments=list(batch.increments))

    def L_batch(self, t: float, nus) -> MapBatch:
        nus = self._states(nus)
        theta = self.vartheta_batch(t, nus, t)
        return MapBatch(nus + theta.values, theta.error_bars, theta.iterations, theta.increments)

    def L_map(self, t: float, nu) -> MapValue:
        batch = self.L_batch(t, [nu])
        return MapValue(map="L", t=t, argument=list(np.atleast_1d(nu).astype(float)),
                        value=batch.values[0].tolist(), error_bar=float(batch.error_bars[0]),
                        iterations=batch.iterations, increments=list(batch.increments))


# certification

def certify_inverse(engine: ConjugacyEngine, samples, t: float) -> InverseReport:
    """|L(t, H(t, xi)) - xi| and |H(t, L(t, xi)) - xi| for every sample."""
    xis = engine._states(samples)
    h = engine.H_batch(t, xis)
    lh = engine.L_batch(t, h.values)
    l_ = engine.L_batch(t, xis)
    hl = engine.H_batch(t, l_.values)
    res_lh = np.linalg.norm(lh.values - xis, axis=-1)
    res_hl = np.linalg.norm(hl.values - xis, axis=-1)
    bars = np.maximum(h.error_bars + lh.error_bars, l_.error_bars + hl.error_bars)
    floor = _INVERSE_FLOOR * np.maximum(1.0, np.linalg.norm(xis, axis=-1))
    rows = [
        InverseRow(xi=xis[b].tolist(), residual_LH=float(res_lh[b]), residual_HL=float(res_hl[b]),
                   error_bar=float(bars[b]),
                   passed=bool(max(res_lh[b], res_hl[b]) <= 10.0 * bars[b] + floor[b]))
        for b in range(len(xis))
    ]
    worst = float(max(res_lh.max(), res_hl.max()))
    report = InverseReport(t=t, rows=rows, max_residual=worst, passed=all(r.passed for r in rows))
    logger.info(f"inverse t={t} samples={len(rows)} max_residual={worst:.3e} passed={report.passed}")
    return report


def certify_solution_mapping(engine: ConjugacyEngine, tau: float, xi, t_samples: Sequence[float]) -> SolutionMappingReport:
    """
    h(t) = H[t, x(t, tau, xi)] = x(t) + chi(t; tau, xi) must solve the linear DEPCAG
    and stay within 2 mu K rho* / alpha of x(t).
    """
    ctx = engine.ctx
    sys = ctx.sys
    grid = sys.grid
    ts = np.sort(np.atleast_1d(np.asarray(t_samples, dtype=float)))
    xi = engine._states(xi)
    op = engine._operator(float(ts.min()), float(ts.max()))
    lo, hi = op.time_window
    traj = integrate_span(sys, engine.f, tau, xi, min(lo, tau), max(hi, tau), step=engine.h)
    sol = None if engine.f.is_zero else op.apply(engine._f_along(traj))
    quad = 0.0 if sol is None else float(sol.quadrature_error[0])

    def chi_at(s) -> np.ndarray:
        if sol is None:
            return np.zeros((len(np.atleast_1d(s)), engine.n))
        return -sol.at(s)[0]

    def h_at(s) -> np.ndarray:
        return traj.at(s)[0] + chi_at(s)

    js = np.asarray(grid.interval_index(ts), dtype=np.int64)
    t_k = np.asarray(grid.t(js), dtype=float)
    t_next = np.asarray(grid.t(js + 1), dtype=float)
    zetas = np.asarray(grid.zeta(js), dtype=float)
    lo_ok = ts - _FD_DELTA >= t_k
    hi_ok = ts + _FD_DELTA < t_next
    left = np.where(lo_ok, ts - _FD_DELTA, ts)
    right = np.where(hi_ok, ts + _FD_DELTA, ts)
    if np.any(left == right):
        raise DomainError("a sample interval is shorter than the finite-difference step")
    deriv = (h_at(right) - h_at(left)) / (right - left)[:, None]
    h_t = h_at(ts)
    # h(gamma(t)) = x(zeta_k) + chi(zeta_k), read from interval k
    frozen = np.stack([traj.frozen(int(k))[0] for k in js]) + chi_at(zetas)
    rhs = np.einsum("tij,tj->ti", sys.A.at(ts), h_t) + np.einsum("tij,tj->ti", sys.A0.at(ts), frozen)
    residuals = np.linalg.norm(deriv - rhs, axis=-1)
    distances = np.linalg.norm(h_t - traj.at(ts)[0], axis=-1)
    bar = engine.policy.tail_bound + quad
    rows = [SolutionMappingRow(t=float(t), residual=float(r), distance=float(d))
            for t, r, d in zip(ts, residuals, distances)]
    report = SolutionMappingReport(
        tau=tau,
        xi=xi[0].tolist(),
        rows=rows,
        max_residual=float(residuals.max()),
        residual_tolerance=_MAPPING_TOLERANCE,
        max_distance=float(distances.max()),
        distance_bound=engine.proximity_bound,
        passed=bool(residuals.max() <= _MAPPING_TOLERANCE and distances.max() <= engine.proximity_bound + bar),
    )
    logger.info(
        f"solution mapping tau={tau} samples={len(rows)} max_residual={report.max_residual:.3e} "
        f"max_distance={report.max_distance:.3e} passed={report.passed}"
    )
    return report


def _rates_for_holder(engine: ConjugacyEngine) -> tuple[float, float]:
    cond = engine.cond
    p1, p2 = cond.p1_applicable, cond.p2_applicable
    if not cond.flags.get("alfa") or p1 is None or p2 is None or p1 <= cond.alpha or p2 <= cond.alpha:
        raise ConditionViolationError(
            "alfa", f"alpha={cond.alpha:.6g} must lie below p1={p1} and p2={p2}; Holder exponents undefined"
        )
    return p1, p2


def holder_constants(engine: ConjugacyEngine) -> tuple[float, float, float, float]:
    """(alpha/p1, C1, alpha/p2, D1)."""
    p1, p2 = _rates_for_holder(engine)
    c = engine.cond
    krho = 2.0 * c.K * c.rho_star
    shift = 4.0 * c.mu * c.K * c.rho_star / c.alpha
    C1 = 1.0 + krho * (c.ell1 + c.ell2 * math.exp(p1 * c.theta)) / (p1 - c.alpha) + shift
    D1 = 1.0 + (krho * (c.ell1 + c.ell2 * math.exp(p2 * c.theta)) / (p2 - c.alpha) + shift) / (1.0 - c.gamma_star)
    return c.alpha / p1, C1, c.alpha / p2, D1


def _perturbed_pairs(rng: np.random.Generator, n: int, count: int, deltas: Sequence[float]):
    base = rng.uniform(-1.0, 1.0, size=(count, n))
    direction = rng.normal(size=(count, n))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    xs = np.repeat(base, len(deltas), axis=0)
    ds = np.tile(np.asarray(deltas, dtype=float), count)
    return xs, xs + ds[:, None] * np.repeat(direction, len(deltas), axis=0), ds


def holder_certify(engine: ConjugacyEngine, t: float, deltas: Sequence[float], samples: int = 5,
                   seed: int = 0) -> HolderReport:
    """
    |H(t,xi) - H(t,xi')| <= C1 delta^(alpha/p1) and |L(t,xi) - L(t,xi')| <= D1 delta^(alpha/p2)
    at |xi - xi'| = delta, on seeded random base points.

    :raises ConditionViolationError: alpha is not below both continuity rates
    :raises DomainError: a delta outside (0, 1)
    """
    if any(not 0 < d < 1 for d in deltas):
        raise DomainError(f"deltas must lie in (0, 1), got {list(deltas)}")
    e_H, C1, e_L, D1 = holder_constants(engine)
    rng = np.random.default_rng(seed)
    xs, xs_p, ds = _perturbed_pairs(rng, engine.n, samples, deltas)
    empirical = []
    for name, fn, exponent, coeff in (("H", engine.H_batch, e_H, C1), ("L", engine.L_batch, e_L, D1)):
        a, b = fn(t, xs), fn(t, xs_p)
        outs = np.linalg.norm(a.values - b.values, axis=-1)
        bars = a.error_bars + b.error_bars
        for i, d in enumerate(ds):
            bound = coeff * d ** exponent
            out = float(outs[i])
            empirical.append(HolderSample(
                map=name, delta=float(d), d_input=float(np.linalg.norm(xs[i] - xs_p[i])), d_output=out,
                bound=bound, implied_exponent=math.log(out) / math.log(d) if out > 0 else None,
                passed=bool(out <= bound + bars[i]),
            ))
    report = HolderReport(t=t, exponent_H=e_H, coeff_H=C1, exponent_L=e_L, coeff_L=D1,
                          empirical=empirical, passed=all(s.passed for s in empirical))
    logger.info(f"holder t={t} C1={C1:.6g} exp_H={e_H:.4g} D1={D1:.6g} exp_L={e_L:.4g} passed={report.passed}")
    return report


def uniform_continuity_certify(engine: ConjugacyEngine, t: float, eps: float, L_param: Optional[float] = None,
                               pairs: int = 20, seed: int = 0) -> UniformContinuityReport:
    """
    delta = eps / (4 D) for H and eps (1 - Gamma*) / (4 D~) for L, with
    D = K rho* exp(p L)(1 - exp(-alpha L))(l1 + l2 exp(p theta)) / alpha,
    spot-checked on seeded random pairs at distance just below delta. Without
    L_param the suggested L = ln(8 K mu rho* / (alpha eps)) / alpha is used, or 1
    when that is not positive.

    :raises ConditionViolationError: p1 or p2 undefined
    """
    if eps <= 0 or (L_param is not None and L_param <= 0):
        raise DomainError(f"eps and L must be positive, got eps={eps}, L={L_param}")
    c = engine.cond
    p1, p2 = c.p1_applicable, c.p2_applicable
    if p1 is None or p2 is None:
        raise ConditionViolationError("schema0", "continuity rates p1 and p2 are undefined")
    kr = c.K * c.rho_star
    arg = 8.0 * c.K * c.mu * c.rho_star / (c.alpha * eps)
    suggested = math.log(arg) / c.alpha if c.mu > 0 and arg > 1 else None
    if L_param is None:
        L_param = suggested or 1.0

    def D(p: float) -> float:
        return kr * math.exp(p * L_param) * -math.expm1(-c.alpha * L_param) * (
            c.ell1 + c.ell2 * math.exp(p * c.theta)) / c.alpha

    D_H, D_L = D(p1), D(p2)
    # no Lipschitz coupling: any distance below 1 keeps the change below eps
    delta_H = eps / (4.0 * D_H) if D_H > 0 else 1.0
    delta_L = eps * (1.0 - c.gamma_star) / (4.0 * D_L) if D_L > 0 else 1.0

    rng = np.random.default_rng(seed)
    changes = []
    for fn, delta in ((engine.H_batch, delta_H), (engine.L_batch, delta_L)):
        xs, xs_p, _ = _perturbed_pairs(rng, engine.n, pairs, [0.99 * min(delta, 1.0)])
        a, b = fn(t, xs), fn(t, xs_p)
        changes.append((np.linalg.norm(a.values - b.values, axis=-1), a.error_bars + b.error_bars))
    (ch_H, bar_H), (ch_L, bar_L) = changes
    passed = bool(np.all(ch_H < eps + bar_H) and np.all(ch_L < eps + bar_L))
    logger.info(f"uniform continuity t={t} eps={eps} delta_H={delta_H:.3e} delta_L={delta_L:.3e} passed={passed}")
    return UniformContinuityReport(
        t=t, eps=eps, L_param=L_param, suggested_L=suggested,
        D_H=D_H, delta_H=delta_H, D_L=D_L, delta_L=delta_L,
        max_change_H=float(ch_H.max()), max_change_L=float(ch_L.max()),
        pairs=pairs, passed=passed,
    )


def _picard_ladder(engine: ConjugacyEngine, samples, t: float, factor: float) -> tuple[list[float], list[float]]:
    """
    Picard error of vartheta at t on the ladder picard_tol / factor^j, up to the first increment.

    One iteration at factor * picard_tol is traced; a tolerance stops it at the first
    iterate whose increment falls below tol (1 - Gamma*), and its error is the distance
    of that iterate from the last one.
    """
    if engine.f.is_zero:
        return [], []
    trace: list[np.ndarray] = []
    batch = engine.with_picard_tol(engine.picard_tol * factor).vartheta_batch(t, samples, t, trace=trace)
    increments = np.asarray(batch.increments)
    error_at = [float(np.linalg.norm(v - trace[-1], axis=-1).max()) for v in trace]
    keep = 1.0 - engine.cond.gamma_star
    ladder: list[float] = []
    errors: list[float] = []
    tol = engine.picard_tol
    while tol * keep <= increments[0] and len(ladder) < _LADDER_MAX:
        k = int(np.argmax(increments < tol * keep))
        ladder.append(tol)
        errors.append(error_at[k])
        tol /= factor
    return ladder, errors


def _fitted_ratio(ladder: Sequence[float], errors: Sequence[float], factor: float) -> Optional[float]:
    """factor ** slope of log error against log tolerance; None below three resolved points."""
    pts = np.array([(math.log(tol), math.log(err)) for tol, err in zip(ladder, errors) if err > 0])
    if len(pts) < 3 or np.ptp(pts[:, 1]) == 0:
        return None
    slope = float(np.polyfit(pts[:, 0], pts[:, 1], 1)[0])
    return factor ** slope


def tolerance_scaling(engine: ConjugacyEngine, samples, t: float, factor: float = 0.5) -> ToleranceScalingReport:
    """
    Inverse residuals and error bars at picard_tol and factor * picard_tol, and the
    shrink ratio of the Picard error per factor step of the tolerance.

    The ratio is fitted on the Picard error of vartheta over a tolerance ladder;
    the composed-map residuals reach the quadrature floor at small picard_tol.
    """
    if not 0 < factor < 1:
        raise DomainError(f"factor must lie in (0, 1), got {factor}")
    tols = (engine.picard_tol, engine.picard_tol * factor)
    reports = [certify_inverse(engine.with_picard_tol(tol), samples, t) for tol in tols]
    residuals = tuple(r.max_residual for r in reports)
    bars = tuple(max(row.error_bar for row in r.rows) for r in reports)
    ladder, errors = _picard_ladder(engine, engine._states(samples), t, factor)
    ratio = _fitted_ratio(ladder, errors, factor)
    logger.info(f"tolerance scaling t={t} ladder={len(ladder)} ratio={ratio}")
    return ToleranceScalingReport(tolerances=tols, residuals=residuals, error_bars=bars,
                                  ladder=ladder, picard_errors=errors, ratio=ratio)
