"""
Filename: dichotomy.py
Description:
    Exponential dichotomies of the linear DEPCAG. Builds Z_p and the Green
    function, samples the ED1 inequality, and searches for a discrete
    dichotomy of the one-step reduction.

License: Apache 2.0
"""
import math
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import schur, solve_sylvester

from ..config import config
from ..model.dichotomy import DichotomySource, DichotomySpec, DiscreteDichotomy, GreenKernel
from ..model.reports import ConditionCReport, ED1Report, EDPReport, KernelDiscrepancyReport
from ..model.system import LinearSystem
from ..utils.log import numerical_warning, setup_logger
from ..utils.parallel import ordered_map
from .error import DomainError, NoDichotomyError, SingularFactorError
from .flow import FlowTable, check_condition_c, table_for

logger = setup_logger("depcag.dichotomy")

_UNIT_CIRCLE_TOL = 1e-9
_PASS_SLACK = 1e-6


class GreenContext:
    """Linear system, dichotomy data and the flow table they are evaluated on.

    rho_star = rho(A) exp(alpha theta), with rho(A) taken over the table window.
    """

    def __init__(self, sys: LinearSystem, dicho: DichotomySpec, table: FlowTable,
                 condition_c: ConditionCReport):
        if dicho.P_matrix.shape != (sys.dim, sys.dim):
            raise DomainError(f"projection shape {dicho.P_matrix.shape} does not match dim={sys.dim}")
        self.sys = sys
        self.dicho = dicho
        self.table = table
        self.condition_c = condition_c
        self.P = dicho.P_matrix
        self.Q = np.eye(sys.dim) - self.P
        self.rho_A = condition_c.rho_A
        self.rho_star = self.rho_A * math.exp(dicho.alpha * sys.theta)

    @classmethod
    def build(cls, sys: LinearSystem, dicho: DichotomySpec, t_lo: float, t_hi: float,
              step: Optional[float] = None) -> "GreenContext":
        table = table_for(sys, t_lo, t_hi, step, margin=1)
        report = check_condition_c(sys, table.lo, table.hi, table.h)
        return cls(sys, dicho, table, report)

    def with_dichotomy(self, dicho: DichotomySpec) -> "GreenContext":
        return GreenContext(self.sys, dicho, self.table, self.condition_c)

    @property
    def K(self) -> float:
        return self.dicho.K

    @property
    def alpha(self) -> float:
        return self.dicho.alpha

    @property
    def n(self) -> int:
        return self.sys.dim

    def green_scale(self) -> float:
        """K rho* / alpha, the factor in every Green-integral estimate."""
        return self.K * self.rho_star / self.alpha


def zp_batch(ctx: GreenContext, ts, ss, t_js=None, s_js=None) -> np.ndarray:
    """Z_p(t_b, s_b) for paired samples, shape (B, n, n)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    ss = np.atleast_1d(np.asarray(ss, dtype=float))
    left = ctx.table.z_from_origin(ts, t_js)
    right = ctx.table.z_to_origin(ss, s_js)
    forward = (ts >= ss)[:, None, None]
    return np.where(forward, left @ ctx.P @ right, -(left @ ctx.Q @ right))


def zp(ctx: GreenContext, t: float, s: float) -> np.ndarray:
    """
    Z_p(t, s) = Z(t,0) P Z(0,s) for t >= s and -Z(t,0)(I-P)Z(0,s) for s > t.

    :raises WindowExceededError: t or s outside the context's table
    """
    return zp_batch(ctx, [t], [s])[0]


def _sample_times(ctx: GreenContext, lo: int, hi: int, m: int) -> np.ndarray:
    grid = ctx.sys.grid
    chunks = []
    for k in range(lo, hi + 1):
        t_k, _, t_next = grid.interval(k)
        chunks.append(np.linspace(t_k, t_next, m, endpoint=False))
    return np.concatenate(chunks)


def _growth_ok(ratios: np.ndarray, dist: np.ndarray, span: float) -> bool:
    """A ratio that keeps growing with |t - s| means no finite K exists."""
    far = dist >= 0.5 * span
    near = dist <= 0.25 * span
    if not np.any(far) or not np.any(near):
        return True
    return bool(ratios[far].max() <= ratios[near].max() * (1 + _PASS_SLACK))


def verify_ed1(ctx: GreenContext, lo: int, hi: int, samples_per_interval: int = 8) -> ED1Report:
    """
    Sample ||Z_p(t,s)|| exp(alpha |t-s|) over all pairs of sample times in [t_lo, t_hi+1).

    With `K_auto` the certified K is max(1, 1.05 * worst ratio); otherwise the
    supplied K is checked. Either way the verdict also requires the ratio not
    to grow with |t - s| across the window.

    :raises DomainError: fewer than 4 samples per interval
    """
    if samples_per_interval < 4:
        raise DomainError(f"samples_per_interval must be >= 4, got {samples_per_interval}")
    ctx.table._require(lo, hi)
    ts = _sample_times(ctx, lo, hi, samples_per_interval)
    left_p = ctx.table.z_from_origin(ts) @ ctx.P
    left_q = ctx.table.z_from_origin(ts) @ ctx.Q
    right = ctx.table.z_to_origin(ts)
    alpha = ctx.alpha

    def row(i: int) -> np.ndarray:
        forward = (ts[i] >= ts)[:, None, None]
        m = np.where(forward, left_p[i] @ right, -(left_q[i] @ right))
        return np.linalg.norm(m, ord=2, axis=(-2, -1)) * np.exp(alpha * np.abs(ts[i] - ts))

    ratios = np.stack(ordered_map(row, range(len(ts))))
    flat = int(np.argmax(ratios))
    i, j = divmod(flat, len(ts))
    worst = float(ratios[i, j])
    dist = np.abs(ts[:, None] - ts[None, :])
    growth_ok = _growth_ok(ratios, dist, float(ts[-1] - ts[0]))
    K = max(1.0, 1.05 * worst) if ctx.dicho.K_auto else ctx.K
    report = ED1Report(
        window=(lo, hi),
        samples_per_interval=samples_per_interval,
        K=K,
        K_auto=ctx.dicho.K_auto,
        alpha=alpha,
        worst_ratio=worst,
        worst_t=float(ts[i]),
        worst_s=float(ts[j]),
        growth_ok=growth_ok,
        passed=bool(worst <= K * (1 + _PASS_SLACK) and growth_ok),
    )
    logger.info(
        f"ed1 window=({lo},{hi}) pairs={ratios.size} worst={worst:.6g} at=({report.worst_t:.4g},"
        f"{report.worst_s:.4g}) K={K:.6g} growth_ok={growth_ok} passed={report.passed}"
    )
    return report


def certified_dichotomy(ctx: GreenContext, report: ED1Report) -> DichotomySpec:
    """The dichotomy with K replaced by the certified value of an auto-K report."""
    if not ctx.dicho.K_auto:
        return ctx.dicho
    return ctx.dicho.model_copy(update={"K": report.K, "K_auto": False})


# discrete dichotomy

def _cauchy_products(mats: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Y_n = B_{n-1} ... B_0 and Y_n^-1 for 0 <= n <= len(mats)."""
    n = mats[0].shape[0]
    count = len(mats) + 1
    Y, Y_inv = np.empty((count, n, n)), np.empty((count, n, n))
    Y[0] = Y_inv[0] = np.eye(n)
    for k, b in enumerate(mats):
        Y[k + 1] = b @ Y[k]
        Y_inv[k + 1] = Y_inv[k] @ np.linalg.inv(b)
    return Y, Y_inv


def _discrete_ratios(mats: Sequence[np.ndarray], P_hat: np.ndarray, r: float):
    """Ratios |Y_n P Y_m^-1| / r^(n-m) (n >= m) and |Y_n (I-P) Y_m^-1| / r^(m-n) (m > n)."""
    Y, Y_inv = _cauchy_products(mats)
    Q_hat = np.eye(P_hat.shape[0]) - P_hat
    idx = np.arange(len(Y))
    forward = (idx[:, None] >= idx[None, :])[..., None, None]
    prod = np.where(forward, Y[:, None] @ P_hat @ Y_inv[None, :], Y[:, None] @ Q_hat @ Y_inv[None, :])
    dist = np.abs(idx[:, None] - idx[None, :])
    ratios = np.linalg.norm(prod, ord=2, axis=(-2, -1)) / np.power(r, dist)
    return ratios, dist


def _spectral_projection(b: np.ndarray) -> tuple[np.ndarray, float]:
    """Projection onto the |lambda| < 1 invariant subspace along the |lambda| > 1 one."""
    moduli = np.abs(np.linalg.eigvals(b))
    if np.any(np.abs(moduli - 1.0) < _UNIT_CIRCLE_TOL):
        raise NoDichotomyError(f"eigenvalue on the unit circle (moduli {np.sort(moduli).tolist()})")
    n = b.shape[0]
    T, Zs, sdim = schur(b, output="real", sort="iuc")
    if sdim == n:
        p = np.eye(n)
    elif sdim == 0:
        p = np.zeros((n, n))
    else:
        k = sdim
        X = solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
        p_t = np.zeros((n, n))
        p_t[:k, :k] = np.eye(k)
        p_t[:k, k:] = -X
        p = Zs @ p_t @ Zs.T
    rates = [float(moduli[moduli < 1].max())] if np.any(moduli < 1) else []
    if np.any(moduli > 1):
        rates.append(float(1.0 / moduli[moduli > 1].min()))
    worst = max(rates)
    r = worst * 1.01
    if r >= 1.0:
        r = 0.5 * (worst + 1.0)
    return p, r


def _is_constant(mats: Sequence[np.ndarray]) -> bool:
    return all(np.allclose(m, mats[0], rtol=1e-10, atol=1e-12) for m in mats[1:])


def find_discrete_dichotomy(mats: Sequence[np.ndarray], P_hat: Optional[np.ndarray] = None,
                            r: Optional[float] = None) -> DiscreteDichotomy:
    """
    Discrete dichotomy (P_hat, K_hat, r) of y_{n+1} = B_n y_n.

    A constant reduction gets P_hat from the spectral splitting of B and r from
    its eigenvalue moduli, inflated by 1.01. Otherwise the caller supplies P_hat
    and r and only K_hat is measured.

    :raises NoDichotomyError: unit-circle spectrum, or ratios that grow with |n - m|
    :raises SingularFactorError: a non-invertible factor
    """
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    if not mats:
        raise DomainError("empty reduction")
    for k, m in enumerate(mats):
        cond = float(np.linalg.cond(m))
        if not np.isfinite(cond) or cond > config.singular_cond:
            numerical_warning(logger, "singular factor", k=k, cond=cond)
            raise SingularFactorError(k, cond)

    if P_hat is None or r is None:
        if not _is_constant(mats):
            raise DomainError("a non-constant reduction needs a supplied P_hat and r")
        spectral_p, spectral_r = _spectral_projection(mats[0])
        P_hat = spectral_p if P_hat is None else P_hat
        r = spectral_r if r is None else r
    P_hat = np.atleast_2d(np.asarray(P_hat, dtype=float))

    ratios, dist = _discrete_ratios(mats, P_hat, r)
    if not _growth_ok(ratios, dist, float(len(mats))):
        raise NoDichotomyError(f"sampled ratios grow with |n - m| at r={r:.6g}")
    K_hat = max(1.0, float(ratios.max()))
    logger.debug(f"discrete dichotomy steps={len(mats)} r={r:.6g} K_hat={K_hat:.6g}")
    return DiscreteDichotomy(P_hat=P_hat.tolist(), K_hat=K_hat, r=r)


def edp_verdict(mats: Sequence[np.ndarray], window: tuple[int, int], P_hat: Optional[np.ndarray] = None,
                r: Optional[float] = None) -> tuple[EDPReport, Optional[DiscreteDichotomy]]:
    """Discrete-dichotomy search as a report; failure is a verdict, not an exception."""
    constant = _is_constant([np.atleast_2d(m) for m in mats])
    try:
        dd = find_discrete_dichotomy(mats, P_hat, r)
    except NoDichotomyError as e:
        logger.info(f"edp window={window} passed=False detail={e.message}")
        return EDPReport(window=window, P_hat=[], K_hat=None, r=None, worst_ratio=None,
                         constant_reduction=constant, passed=False, detail=e.message), None
    report = EDPReport(
        window=window, P_hat=dd.P_hat, K_hat=dd.K_hat, r=dd.r, worst_ratio=dd.K_hat,
        constant_reduction=constant, passed=True,
    )
    logger.info(f"edp window={window} r={dd.r:.6g} K_hat={dd.K_hat:.6g} passed=True")
    return report, dd


def promote_discrete_projection(table: FlowTable, dd: DiscreteDichotomy, alpha: float,
                                anchor: Optional[int] = None) -> DichotomySpec:
    """
    ED1 candidate from a discrete dichotomy anchored at t_anchor (default i(0)):
    P = Z(0, t_anchor) P_hat Z(t_anchor, 0), with K left to certification.
    """
    k = table.i0 if anchor is None else anchor
    table._require(k, k)
    c = k - table.lo
    p = table.z0t[c] @ dd.P_matrix @ table.zt0[c]
    # transport keeps idempotence only up to rounding
    p = np.where(np.abs(p) < 1e-14, 0.0, p)
    return DichotomySpec(P=p.tolist(), K=1.0, alpha=alpha, K_auto=True,
                         source=DichotomySource.DISCRETE_SPECTRAL)


# Green function

def _pieces(ctx: GreenContext, ss: np.ndarray):
    """Interval r of each s and whether s lies in [t_r, zeta_r)."""
    grid = ctx.sys.grid
    rs = np.asarray(grid.interval_index(ss), dtype=np.int64)
    left = ss < np.asarray(grid.zeta(rs), dtype=float)
    return rs, left


def green_matrix(ctx: GreenContext, ts, ss, kernel: GreenKernel = GreenKernel.CONSISTENT) -> np.ndarray:
    """
    Green function on the product of two sample sets, shape (T, S, n, n).

    With j = i(t), r = i(s) and the base point b = t_r for s in [t_r, zeta_r),
    b = t_{r+1} for s in [zeta_r, t_{r+1}), the kernel is Z_p(t, b) Phi(b, s),
    plus Phi(t, s) for s in [zeta_j, t) when t > zeta_j and minus Phi(t, s)
    for s in [t, zeta_j) when t < zeta_j. AS_PRINTED uses the printed branch
    table for r = j instead.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    ss = np.atleast_1d(np.asarray(ss, dtype=float))
    grid = ctx.sys.grid
    table = ctx.table
    n = ctx.n
    rs, left = _pieces(ctx, ss)
    base_idx = np.where(left, rs, rs + 1)
    base = np.asarray(grid.t(base_idx), dtype=float)
    table._require(int(rs.min()), int(rs.max()))
    # Phi(b, s) with s and b in interval r
    phi_bs = table.phi_batch(base, ss, rs)
    z0_base = table.z0t[base_idx - table.lo]

    js = table.owner(ts)
    zt = table.z_from_origin(ts, js)
    zeta_t = np.asarray(grid.zeta(js), dtype=float)

    out = np.empty((len(ts), len(ss), n, n))
    for a, t in enumerate(ts):
        forward = (t >= base)[:, None, None]
        zp_tb = np.where(forward, zt[a] @ ctx.P @ z0_base, -(zt[a] @ ctx.Q @ z0_base))
        g = zp_tb @ phi_bs
        j = int(js[a])
        same = rs == j
        if np.any(same):
            g[same] = _local_branch(ctx, t, j, float(zeta_t[a]), ss[same], left[same], g[same], kernel)
        out[a] = g
    return out


def _local_branch(ctx: GreenContext, t: float, j: int, zeta_j: float, ss: np.ndarray,
                  left: np.ndarray, series: np.ndarray, kernel: GreenKernel) -> np.ndarray:
    """Kernel for s in the interval of t."""
    n = ctx.n
    phi_ts = ctx.table.phi_batch(np.full_like(ss, t), ss, j)
    zero = np.zeros((n, n))
    out = series.copy()
    if kernel is GreenKernel.CONSISTENT:
        if t > zeta_j:
            sel = (ss >= zeta_j) & (ss < t)
            out[sel] = series[sel] + phi_ts[sel]
        elif t < zeta_j:
            sel = (ss >= t) & (ss < zeta_j)
            out[sel] = series[sel] - phi_ts[sel]
        return out
    if t > zeta_j:
        # s < zeta_j keeps the series term
        out[(ss >= zeta_j) & (ss < t)] = phi_ts[(ss >= zeta_j) & (ss < t)]
        out[ss >= t] = zero
    else:
        # s >= zeta_j keeps the series term
        out[ss < t] = zero
        sel = (ss >= t) & left
        out[sel] = -phi_ts[sel]
    return out


def green(ctx: GreenContext, t: float, s: float, kernel: GreenKernel = GreenKernel.CONSISTENT) -> np.ndarray:
    """
    Green function G(t, s).

    :raises WindowExceededError: t or s outside the context's table
    """
    return green_matrix(ctx, [t], [s], kernel)[0, 0]


def kernel_discrepancy(ctx: GreenContext, t_samples, s_samples) -> KernelDiscrepancyReport:
    """Largest difference between the two Green kernels over a sample product."""
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    s_samples = np.atleast_1d(np.asarray(s_samples, dtype=float))
    diff = green_matrix(ctx, t_samples, s_samples) - green_matrix(ctx, t_samples, s_samples, GreenKernel.AS_PRINTED)
    norms = np.linalg.norm(diff, ord=2, axis=(-2, -1))
    a, b = divmod(int(np.argmax(norms)), len(s_samples))
    return KernelDiscrepancyReport(
        max_difference=float(norms[a, b]),
        worst_t=float(t_samples[a]),
        worst_s=float(s_samples[b]),
    )


def green_bound_ratio(ctx: GreenContext, ts, ss) -> float:
    """max ||G(t,s)|| / (K rho* exp(-alpha |t-s|)) over the sample product."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    ss = np.atleast_1d(np.asarray(ss, dtype=float))
    norms = np.linalg.norm(green_matrix(ctx, ts, ss), ord=2, axis=(-2, -1))
    envelope = ctx.K * ctx.rho_star * np.exp(-ctx.alpha * np.abs(ts[:, None] - ss[None, :]))
    return float((norms / envelope).max())
