"""
Filename: bounded.py
Description:
    Bounded solutions of the forced linear DEPCAG

        x'(t) = A(t) x(t) + A0(t) x(gamma(t)) + g(t),

    by truncated Green integrals with a rigorous tail bound, the
    variation-of-parameters formula for tau in [t_i, zeta_i], the
    convergence report of the series the bounded-solution operator needs,
    and the one-step difference-equation check.

License: Apache 2.0
"""
import math
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import simpson

from ..model.reports import (
    BoundedValue,
    DifferenceResidualReport,
    LipschitzBoundReport,
    LipschitzBoundRow,
    SeriesTailReport,
)
from ..model.system import ForcingTerm, LinearSystem
from ..utils.log import numerical_warning, setup_logger
from .dichotomy import GreenContext
from .error import ConditionViolationError, DomainError
from .flow import FlowTable, table_for
from .green import GreenOperator
from .integrator import default_step, segment_mesh

logger = setup_logger("depcag.bounded")


class TruncationPolicy(BaseModel):
    """Finite horizon T of the Green integral and the analytic bound on what it drops.

    tail_bound = 2 K rho* sup|g| exp(-alpha T) / alpha.
    """
    model_config = ConfigDict(frozen=True)

    horizon_T: float = Field(gt=0)
    tail_bound: float = Field(ge=0)

    @staticmethod
    def default_horizon(alpha: float, theta: float) -> float:
        return max(20.0 / alpha, 10.0 * theta)

    @classmethod
    def build(cls, ctx: GreenContext, sup: float, horizon_T: Optional[float] = None) -> "TruncationPolicy":
        T = horizon_T if horizon_T is not None else cls.default_horizon(ctx.alpha, ctx.sys.theta)
        return cls(horizon_T=T, tail_bound=2.0 * ctx.green_scale() * sup * math.exp(-ctx.alpha * T))


def _require_certified(ctx: GreenContext) -> None:
    if ctx.dicho.K_auto:
        raise ConditionViolationError("ED1", "K is still marked auto; certify it with verify_ed1 first")


def _forcing(g: ForcingTerm):
    return lambda k, nodes: g.g.at(nodes)


def bounded_values(ctx: GreenContext, g: ForcingTerm, ts: Sequence[float],
                   policy: Optional[TruncationPolicy] = None) -> list[BoundedValue]:
    """
    Bounded solution at several times from one operator application.

    :raises WindowExceededError: the context's table does not cover [min t - T, max t + T]
    """
    _require_certified(ctx)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    policy = policy or TruncationPolicy.build(ctx, g.g_sup.value)
    T = policy.horizon_T
    if g.is_zero:
        return [BoundedValue(t=float(t), value=[0.0] * ctx.n, error_bar=0.0, horizon=T,
                             tail_bound=policy.tail_bound, quadrature_error=0.0) for t in ts]
    op = GreenOperator.covering(ctx, float(ts.min()) - T, float(ts.max()) + T)
    sol = op.apply(_forcing(g))
    values = sol.at(ts)[0]
    quad = float(sol.quadrature_error[0])
    logger.debug(f"bounded values count={len(ts)} window=({op.lo},{op.hi}) quad_err={quad:.3e}")
    return [
        BoundedValue(
            t=float(t),
            value=values[i].tolist(),
            error_bar=policy.tail_bound + quad,
            horizon=T,
            tail_bound=policy.tail_bound,
            quadrature_error=quad,
        )
        for i, t in enumerate(ts)
    ]


def bounded_solution(ctx: GreenContext, g: ForcingTerm, t: float,
                     policy: Optional[TruncationPolicy] = None) -> BoundedValue:
    """
    x*_g(t) = int G(t,s) g(s) ds truncated to [t - T, t + T] (rounded out to breakpoints).

    :raises ConditionViolationError: K not yet certified
    :raises WindowExceededError: the context's table is too small for the horizon
    """
    return bounded_values(ctx, g, [t], policy)[0]


def lipschitz_bound_check(ctx: GreenContext, g: ForcingTerm, sample_ts: Sequence[float],
                          policy: Optional[TruncationPolicy] = None) -> LipschitzBoundReport:
    """|x*_g(t)| <= 2 K rho* sup|g| / alpha at every sample, up to the error bars."""
    bound = 2.0 * ctx.green_scale() * g.g_sup.value
    rows = []
    for v in bounded_values(ctx, g, sample_ts, policy):
        norm = float(np.linalg.norm(v.value))
        rows.append(LipschitzBoundRow(t=v.t, norm=norm, error_bar=v.error_bar,
                                      passed=norm <= bound + v.error_bar))
    violations = [r.t for r in rows if not r.passed]
    if violations:
        numerical_warning(logger, "bounded-solution bound violated", bound=bound, times=violations)
    return LipschitzBoundReport(bound=bound, rows=rows, violations=violations, passed=not violations)


def _phi_integral(table: FlowTable, k: int, a: float, b: float, base: float, g: Optional[ForcingTerm]) -> np.ndarray:
    """int_a^b Phi(base, s) g(s) ds for a, b, base in interval k (signed)."""
    if g is None or g.is_zero or a == b:
        return np.zeros(table.n)
    nodes = segment_mesh(table.sys.grid, a, b, table.h)
    _, _, V, _ = table.local(nodes, k)
    integrand = np.einsum("nij,nj->ni", V, g.g.at(nodes))
    if a > b:
        integral = -simpson(integrand[::-1], x=nodes[::-1], axis=0)
    else:
        integral = simpson(integrand, x=nodes, axis=0)
    _, u, _, _ = table.local(np.array([base]), k)
    return u[0] @ integral


def variation_of_parameters(sys: LinearSystem, g: Optional[ForcingTerm], tau: float, xi, t: float,
                            table: Optional[FlowTable] = None, step: Optional[float] = None) -> np.ndarray:
    """
    Solution of the forced system through (tau, xi), for tau in [t_i, zeta_i] and t >= tau:

        x(t) = Z(t,tau)(xi + int_tau^{zeta_i} Phi(tau,s) g)
               + sum_{r=i+1}^{j} Z(t,t_r) int_{t_r}^{zeta_r} Phi(t_r,s) g
               + sum_{r=i}^{j-1} Z(t,t_{r+1}) int_{zeta_r}^{t_{r+1}} Phi(t_{r+1},s) g
               + int_{zeta_j}^{t} Phi(t,s) g.

    :raises DomainError: tau in (zeta_i, t_{i+1}) or t < tau
    """
    grid = sys.grid
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    i = int(grid.interval_index(tau))
    t_i, zeta_i, _ = grid.interval(i)
    if tau > zeta_i:
        raise DomainError(f"tau={tau} lies in ({zeta_i}, t_{i + 1}); only tau in [t_i, zeta_i] is supported")
    if t < tau:
        raise DomainError(f"t={t} precedes tau={tau}")
    table = table or table_for(sys, tau, t, step)
    j = int(table.owner([t])[0])

    x = table.z(t, tau) @ (xi + _phi_integral(table, i, tau, zeta_i, tau, g))
    for r in range(i, j):
        t_r, zeta_r, t_next = grid.interval(r)
        if r > i:
            x = x + table.z(t, t_r) @ _phi_integral(table, r, t_r, zeta_r, t_r, g)
        x = x + table.z(t, t_next) @ _phi_integral(table, r, zeta_r, t_next, t_next, g)
    if j > i:
        t_j, zeta_j, _ = grid.interval(j)
        x = x + table.z(t, t_j) @ _phi_integral(table, j, t_j, zeta_j, t_j, g)
    zeta_j = float(grid.zeta(j))
    return x + _phi_integral(table, j, zeta_j, t, t, g)


def _fit_ratio(terms: np.ndarray) -> Optional[float]:
    positive = terms > 0
    if positive.sum() < 2:
        return None
    idx = np.arange(len(terms))[positive]
    slope = np.polyfit(idx, np.log(terms[positive]), 1)[0]
    return float(np.exp(slope))


def series_tail_report(ctx: GreenContext, k: int, terms: int = 20) -> SeriesTailReport:
    """
    Partial sums of the norms of the four series

        sum_{r<=k} P Z(0,t_r) int_{t_r}^{zeta_r} Phi(t_r,s) ds,
        sum_{r<=k} P Z(0,t_{r+1}) int_{zeta_r}^{t_{r+1}} Phi(t_{r+1},s) ds,
        sum_{r>=k} (I-P) Z(0,t_r) int_{t_r}^{zeta_r} Phi(t_r,s) ds,
        sum_{r>=k} (I-P) Z(0,t_{r+1}) int_{zeta_r}^{t_{r+1}} Phi(t_{r+1},s) ds,

    each over `terms` terms, with the last term and a geometric fit of the decay.
    Passes when every series has last term < 1e-8 or fitted ratio < 1.
    """
    if terms < 10:
        raise DomainError(f"terms must be >= 10, got {terms}")
    lo, hi = k - terms + 1, k + terms - 1
    table = ctx.table
    if lo < table.lo or hi > table.hi:
        table = FlowTable(ctx.sys, lo, hi, ctx.table.h)

    def piece_integrals(r: int) -> tuple[np.ndarray, np.ndarray]:
        tab = table.table(r)
        zi = tab.mesh.zeta_index
        left, right = tab.mesh.nodes[: zi + 1], tab.mesh.nodes[zi:]
        il = simpson(tab.V[: zi + 1], x=left, axis=0) if zi else np.zeros((ctx.n, ctx.n))
        ir = simpson(tab.V[zi:], x=right, axis=0) if tab.mesh.n_right else np.zeros((ctx.n, ctx.n))
        c = r - table.lo
        return table.z0t[c] @ tab.U[0] @ il, table.z0t[c + 1] @ tab.U[-1] @ ir

    past = [piece_integrals(r) for r in range(k, lo - 1, -1)]
    future = [piece_integrals(r) for r in range(k, hi + 1)]
    series = [
        np.array([np.linalg.norm(ctx.P @ a, ord=2) for a, _ in past]),
        np.array([np.linalg.norm(ctx.P @ b, ord=2) for _, b in past]),
        np.array([np.linalg.norm(ctx.Q @ a, ord=2) for a, _ in future]),
        np.array([np.linalg.norm(ctx.Q @ b, ord=2) for _, b in future]),
    ]
    ratios = [_fit_ratio(s) for s in series]
    last = [float(s[-1]) for s in series]
    passed = all(l < 1e-8 or (q is not None and q < 1) for l, q in zip(last, ratios))
    if not passed:
        numerical_warning(logger, "series tails do not decay", k=k, terms=terms, last=max(last))
    logger.info(f"series tails k={k} terms={terms} last={[f'{v:.3e}' for v in last]} passed={passed}")
    return SeriesTailReport(
        k=k,
        terms=terms,
        partial_sums=[float(s.sum()) for s in series],
        last_terms=last,
        fitted_ratios=ratios,
        passed=passed,
    )


def difference_equation_residual(sys: LinearSystem, g: Optional[ForcingTerm], tau: float, xi,
                                 n_steps: int, tol: float = 1e-6,
                                 step: Optional[float] = None) -> DifferenceResidualReport:
    """
    Check x(t_{n+1}) = Z(t_{n+1},t_n)(x(t_n) + int_{t_n}^{zeta_n} Phi(t_n,s) g)
    + int_{zeta_n}^{t_{n+1}} Phi(t_{n+1},s) g along an integrated trajectory.
    """
    # imported here: dynamics builds on this module's forcing type
    from .dynamics import integrate_depcag

    grid = sys.grid
    first = int(grid.interval_index(tau)) + 1
    last = first + n_steps
    t_end = float(grid.t(last))
    h = step or default_step(grid)
    traj = integrate_depcag(sys, None, tau, xi, t_end, g=g, step=h)
    table = FlowTable(sys, first, last - 1, h)
    breaks = np.asarray(grid.t(np.arange(first, last + 1)), dtype=float)
    states = traj.at(breaks)[0]
    residuals = []
    for m, r in enumerate(range(first, last)):
        t_r, zeta_r, t_next = grid.interval(r)
        c = r - table.lo
        pred = table.fwd[c] @ (states[m] + _phi_integral(table, r, t_r, zeta_r, t_r, g))
        pred = pred + _phi_integral(table, r, zeta_r, t_next, t_next, g)
        residuals.append(float(np.linalg.norm(states[m + 1] - pred)))
    worst = max(residuals)
    return DifferenceResidualReport(residuals=residuals, max_residual=worst, passed=worst <= tol)
