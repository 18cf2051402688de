"""
Filename: dynamics.py
Description:
    Initial-value problems of the quasilinear DEPCAG

        x'(t) = A(t) x(t) + A0(t) x(gamma(t)) + f(t, x(t), x(gamma(t))) + g(t),

    integrated interval by interval with classical RK4. On each interval the
    frozen value c = x(zeta_k) is found before the interval is swept: the
    linear part of c -> x(zeta_k; c) is solved exactly and the nonlinear
    remainder is iterated to a fixed point.

    Also the DEPCAG Gronwall inequality, the scalar hypotheses of the
    conjugacy theorems and the continuity envelope check.

License: Apache 2.0
"""
import math
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import lu_factor, lu_solve

from ..config import config
from ..model.dichotomy import DichotomySpec
from ..model.reports import EnvelopeReport, EnvelopeRow, Regime, TheoremConditions
from ..model.system import ForcingTerm, LinearSystem, Nonlinearity
from ..utils.log import numerical_warning, setup_logger
from ..utils.parallel import ordered_map
from .error import (
    ConvergenceError,
    DomainError,
    InapplicableBoundError,
    IntegrationError,
    SingularFactorError,
)
from .flow import classify_regime
from .integrator import default_step, interval_mesh, propagate, segment_mesh

logger = setup_logger("depcag.dynamics")

Rate = Union[float, Callable[[np.ndarray], np.ndarray]]


class TrajectoryPiece(NamedTuple):
    """One grid interval of a trajectory; nodes ascend."""
    k: int
    nodes: np.ndarray
    states: np.ndarray      # (B, N, n)
    derivs: np.ndarray      # (B, N, n)
    frozen: np.ndarray      # (B, n)


class Trajectory:
    """Batched solution over [t_lo, t_hi] with cubic Hermite dense output."""

    def __init__(self, sys: LinearSystem, pieces: list[TrajectoryPiece], tau: float):
        self.sys = sys
        self.tau = tau
        self.pieces = sorted(pieces, key=lambda p: p.k)
        self._by_k = {p.k: p for p in self.pieces}
        self._splines: dict[int, CubicHermiteSpline] = {}

    @property
    def batch(self) -> int:
        return self.pieces[0].states.shape[0]

    @property
    def dim(self) -> int:
        return self.pieces[0].states.shape[2]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.pieces[0].nodes[0]), float(self.pieces[-1].nodes[-1])

    @property
    def intervals(self) -> tuple[int, int]:
        return self.pieces[0].k, self.pieces[-1].k

    def frozen(self, k: int) -> np.ndarray:
        """x(zeta_k), shape (B, n)."""
        if k not in self._by_k:
            raise DomainError(f"interval {k} outside trajectory intervals {self.intervals}")
        return self._by_k[k].frozen

    def _spline(self, k: int) -> CubicHermiteSpline:
        if k not in self._splines:
            p = self._by_k[k]
            self._splines[k] = CubicHermiteSpline(
                p.nodes, np.moveaxis(p.states, 1, 0), np.moveaxis(p.derivs, 1, 0), axis=0
            )
        return self._splines[k]

    def owner(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        lo, hi = self.span
        if np.any(ts < lo - 1e-12) or np.any(ts > hi + 1e-12):
            raise DomainError(f"times outside trajectory span [{lo}, {hi}]")
        end = ts >= hi
        js = np.asarray(self.sys.grid.interval_index(np.where(end, lo, ts)), dtype=np.int64)
        return np.where(end, self.pieces[-1].k, js)

    def at(self, ts) -> np.ndarray:
        """States at arbitrary times of the span, shape (B, T, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        js = self.owner(ts)
        out = np.empty((self.batch, len(ts), self.dim))
        for k in np.unique(js):
            sel = js == k
            out[:, sel] = np.moveaxis(self._spline(int(k))(ts[sel]), 0, 1)
        return out

    def frozen_at(self, ts) -> np.ndarray:
        """x(gamma(t)) at arbitrary times, shape (B, T, n)."""
        js = self.owner(ts)
        return np.stack([self._by_k[int(k)].frozen for k in js], axis=1)

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        """All mesh nodes with states (B, N, n); shared breakpoints appear once."""
        ts, xs = [], []
        for idx, p in enumerate(self.pieces):
            skip = 1 if idx else 0
            ts.append(p.nodes[skip:])
            xs.append(p.states[:, skip:])
        return np.concatenate(ts), np.concatenate(xs, axis=1)


class _Integrator:
    """RK4 sweeps of one system with fixed f and g."""

    def __init__(self, sys: LinearSystem, f: Optional[Nonlinearity], g: Optional[ForcingTerm], step: float):
        self.sys = sys
        self.f = None if f is None or f.is_zero else f
        self.g = None if g is None or g.is_zero else g
        self.h = step
        self.n = sys.dim

    def _extra(self, s, x, c):
        out = 0.0
        if self.f is not None:
            out = out + self.f.f.at(s, x, c)
        if self.g is not None:
            out = out + self.g.g.at(s)
        return out

    def rhs(self, s: float, a: np.ndarray, q: np.ndarray, x: np.ndarray, c: np.ndarray) -> np.ndarray:
        return x @ a.T + c @ q.T + self._extra(s, x, c)

    def march(self, nodes: np.ndarray, x0: np.ndarray, c: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """States and derivatives at `nodes` (monotone, either direction) from x0 at nodes[0]."""
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        a_n, a_m = self.sys.A.at(nodes), self.sys.A.at(mids)
        q_n, q_m = self.sys.A0.at(nodes), self.sys.A0.at(mids)
        states = np.empty((x0.shape[0], len(nodes), self.n))
        states[:, 0] = x = x0
        for i in range(len(nodes) - 1):
            s, h = nodes[i], nodes[i + 1] - nodes[i]
            k1 = self.rhs(s, a_n[i], q_n[i], x, c)
            k2 = self.rhs(mids[i], a_m[i], q_m[i], x + 0.5 * h * k1, c)
            k3 = self.rhs(mids[i], a_m[i], q_m[i], x + 0.5 * h * k2, c)
            k4 = self.rhs(nodes[i + 1], a_n[i + 1], q_n[i + 1], x + h * k3, c)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[:, i + 1] = x
        if not np.all(np.isfinite(states)):
            raise IntegrationError("non-finite state", k)
        derivs = (np.einsum("nij,bnj->bni", a_n, states) + np.einsum("nij,bj->bni", q_n, c)
                  + self._extra(nodes[None, :], states, c[:, None, :]))
        return states, np.broadcast_to(derivs, states.shape)

    def _slope(self, path: np.ndarray) -> np.ndarray:
        """d x(zeta)/d c of the linear part along path: X' = A X + A0, X(path[0]) = 0."""
        mids = 0.5 * (path[:-1] + path[1:])
        y = propagate(self.sys.A.at(path), self.sys.A.at(mids), np.zeros((self.n, self.n)), np.diff(path),
                      self.sys.A0.at(path), self.sys.A0.at(mids))
        return y[-1]

    def frozen_value(self, path: np.ndarray, x0: np.ndarray, k: int) -> np.ndarray:
        """
        c with x(zeta_k; c) = c, where path runs from the start point to zeta_k.

        :raises ConvergenceError: the nonlinear remainder does not settle
        """
        if len(path) < 2:
            return x0.copy()
        S = self._slope(path)
        m = np.eye(self.n) - S
        cond = float(np.linalg.cond(m))
        if not np.isfinite(cond) or cond > config.singular_cond:
            numerical_warning(logger, "singular factor", k=k, cond=cond)
            raise SingularFactorError(k, cond)
        lu = lu_factor(m)
        c = x0.copy()
        increment = math.inf
        for it in range(1, config.fixed_point_max_iter + 1):
            end = self.march(path, x0, c, k)[0][:, -1]
            # end = S c + R(c); solve c = S c + R(c_prev)
            c_next = lu_solve(lu, (end - c @ S.T).T).T
            increment = float(np.max(np.linalg.norm(c_next - c, axis=-1)))
            c = c_next
            if self.f is None:
                return c
            if increment < config.fixed_point_tol * max(1.0, float(np.max(np.linalg.norm(c, axis=-1)))):
                logger.debug(f"frozen value interval={k} iterations={it} increment={increment:.3e}")
                return c
        raise ConvergenceError(f"frozen value on interval {k}", config.fixed_point_max_iter, increment)

    def interval(self, k: int, s0: float, x0: np.ndarray, forward: bool, backward: bool) -> TrajectoryPiece:
        """Sweep interval k from (s0, x0) toward t_{k+1} and/or t_k."""
        grid = self.sys.grid
        t_k, zeta, t_next = grid.interval(k)
        if s0 in (t_k, t_next):
            mesh = interval_mesh(grid, k, self.h)
            zi = mesh.zeta_index
            path = mesh.nodes[: zi + 1] if s0 == t_k else mesh.nodes[zi:][::-1]
            c = self.frozen_value(path, x0, k)
            if s0 == t_k:
                states, derivs = self.march(mesh.nodes, x0, c, k)
            else:
                states, derivs = self.march(mesh.nodes[::-1], x0, c, k)
                states, derivs = states[:, ::-1], derivs[:, ::-1]
            return TrajectoryPiece(k, mesh.nodes, states, derivs, c)

        c = x0.copy() if s0 == zeta else self.frozen_value(segment_mesh(grid, s0, zeta, self.h), x0, k)
        parts_t, parts_x, parts_d = [], [], []
        if backward:
            back = segment_mesh(grid, s0, t_k, self.h)
            xs, ds = self.march(back, x0, c, k)
            parts_t.append(back[::-1][:-1])
            parts_x.append(xs[:, ::-1][:, :-1])
            parts_d.append(ds[:, ::-1][:, :-1])
        fwd = segment_mesh(grid, s0, t_next, self.h) if forward else np.array([s0])
        xs, ds = self.march(fwd, x0, c, k) if len(fwd) > 1 else (x0[:, None], self._deriv(s0, k, x0, c))
        parts_t.append(fwd)
        parts_x.append(xs)
        parts_d.append(ds)
        return TrajectoryPiece(k, np.concatenate(parts_t), np.concatenate(parts_x, axis=1),
                               np.concatenate(parts_d, axis=1), c)

    def _deriv(self, s: float, k: int, x: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.rhs(s, self.sys.A.at(s), self.sys.A0.at(s), x, c)[:, None]


def _as_batch(xi, n: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xi, dtype=float)
    single = arr.ndim <= 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != n:
        raise DomainError(f"initial state has dimension {arr.shape[-1]}, system has {n}")
    return arr, single


def integrate_span(sys: LinearSystem, f: Optional[Nonlinearity], tau: float, xi, t_lo: float, t_hi: float,
                   g: Optional[ForcingTerm] = None, step: Optional[float] = None) -> Trajectory:
    """
    Solution through (tau, xi) on every grid interval meeting [t_lo, t_hi].

    :param xi: initial state (n,) or a batch (B, n)
    :raises DomainError: tau outside [t_lo, t_hi]
    :raises ConvergenceError: a frozen-value iteration does not converge
    :raises IntegrationError: non-finite state
    """
    if not t_lo <= tau <= t_hi:
        raise DomainError(f"tau={tau} outside [{t_lo}, {t_hi}]")
    grid = sys.grid
    x0, _ = _as_batch(xi, sys.dim)
    engine = _Integrator(sys, f, g, step or default_step(grid))
    k0 = int(grid.interval_index(tau))
    k_lo, k_hi = grid.covering_indices(t_lo, t_hi)
    if float(grid.t(k_hi)) == t_hi and k_hi > k0:
        k_hi -= 1
    grid.require_indices(k_lo, k_hi)

    central = engine.interval(k0, tau, x0, forward=True, backward=True)
    pieces = [central]

    x, last = central.states[:, -1], central
    for k in range(k0 + 1, k_hi + 1):
        last = engine.interval(k, float(grid.t(k)), x, True, False)
        x = last.states[:, -1]
        pieces.append(last)

    x = central.states[:, 0]
    for k in range(k0 - 1, k_lo - 1, -1):
        piece = engine.interval(k, float(grid.t(k + 1)), x, False, True)
        x = piece.states[:, 0]
        pieces.append(piece)

    logger.debug(f"trajectory tau={tau} span=({t_lo},{t_hi}) intervals=({k_lo},{k_hi}) batch={x0.shape[0]}")
    return Trajectory(sys, pieces, tau)


def integrate_depcag(sys: LinearSystem, f: Optional[Nonlinearity], tau: float, xi, t_end: float,
                     g: Optional[ForcingTerm] = None, step: Optional[float] = None) -> Trajectory:
    """Solution through (tau, xi) up to t_end, forward or backward."""
    return integrate_span(sys, f, tau, xi, min(tau, t_end), max(tau, t_end), g, step)


# Gronwall inequality

def _rate(fn: Rate, s: np.ndarray) -> np.ndarray:
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(s), dtype=float), s.shape)
    return np.full(s.shape, float(fn))


def gronwall_bound(eta1: Rate, eta2: Rate, C: float, grid, tau: float, t: float,
                   step: Optional[float] = None) -> float:
    """
    Bound on u(t) for u(t) <= C + int_tau^t (eta1 u(s) + eta2 u(gamma(s))) ds:

        C exp(int_tau^t eta1 + (1/(1-w)) int_tau^t eta2(s) exp(int_{t_i(s)}^{gamma(s)} eta1) ds),

    w = sup_i int_{t_i}^{zeta_i} eta2(s) exp(int_s^{zeta_i} eta1) ds over the intervals met.

    :raises InapplicableBoundError: w >= 1
    :raises DomainError: t < tau
    """
    if t < tau:
        raise DomainError(f"gronwall_bound needs tau <= t, got ({tau}, {t})")
    if t == tau:
        return float(C)
    h = step or default_step(grid)
    k_lo, k_hi = grid.covering_indices(tau, t)
    w = 0.0
    growth = 0.0
    for k in range(k_lo, k_hi + 1):
        t_k, zeta, t_next = grid.interval(k)
        mesh = interval_mesh(grid, k, h)
        zi = mesh.zeta_index
        left = mesh.nodes[: zi + 1]
        if zi:
            e1 = cumulative_simpson(_rate(eta1, left), x=left, initial=0)
            w = max(w, float(simpson(_rate(eta2, left) * np.exp(e1[-1] - e1), x=left)))
            lift = math.exp(float(e1[-1]))
        else:
            lift = 1.0
        a, b = max(tau, t_k), min(t, t_next)
        if b > a:
            piece = segment_mesh(grid, a, b, h)
            growth += lift * float(simpson(_rate(eta2, piece), x=piece))
    if w >= 1.0:
        raise InapplicableBoundError(f"w = {w:.6g} >= 1")
    nodes = segment_mesh(grid, tau, t, h)
    direct = float(simpson(_rate(eta1, nodes), x=nodes))
    return float(C * math.exp(direct + growth / (1.0 - w)))


# theorem hypotheses

def _F(x: float) -> float:
    return 1.0 if x == 0 else math.expm1(x) / x


class Rates(NamedTuple):
    """Continuity constants of the general theorems and their corollary variants."""
    F1: float
    F0: float
    v: float
    v_tilde: float
    p1: Optional[float]
    p2: Optional[float]
    F1_tilde: float
    v0: float
    v_tilde0: float
    u_tilde0: float
    p1_tilde: Optional[float]
    p2_tilde: Optional[float]


def rates(M: float, M0: float, ell1: float, ell2: float, theta: float) -> Rates:
    eta1, eta2 = M + ell1, M0 + ell2
    F1, F0 = _F(eta1 * theta), _F(M * theta)
    v, v_t = F1 * eta2 * theta, F0 * M0 * theta
    F1_t = _F(ell1 * theta)
    v0, v_t0, u_t0 = F1 * ell2 * theta, F1_t * eta2 * theta, eta2 * theta
    return Rates(
        F1=F1, F0=F0, v=v, v_tilde=v_t,
        p1=eta1 + eta2 * math.exp(eta1 * theta) / (1 - v) if v < 1 else None,
        p2=M + M0 * math.exp(M * theta) / (1 - v_t) if v_t < 1 else None,
        F1_tilde=F1_t, v0=v0, v_tilde0=v_t0, u_tilde0=u_t0,
        p1_tilde=ell1 + eta2 * math.exp(ell1 * theta) / (1 - v_t0) if v_t0 < 1 else None,
        p2_tilde=M0 / (1 - u_t0) if u_t0 < 1 else None,
    )


def _nonlinear_constants(f: Optional[Nonlinearity]) -> tuple[float, float, float]:
    if f is None:
        return 0.0, 0.0, 0.0
    return f.mu.value, f.ell1.value, f.ell2.value


def applicable_rates(sys: LinearSystem, f: Optional[Nonlinearity]) -> tuple[Optional[float], Optional[float]]:
    """(p1, p2) of the regime: the tilde constants when A == 0."""
    _, ell1, ell2 = _nonlinear_constants(f)
    r = rates(sys.M.value, sys.M0.value, ell1, ell2, sys.theta)
    if classify_regime(sys) is Regime.PURE_PCA:
        return r.p1_tilde, r.p2_tilde
    return r.p1, r.p2


def _min_defined(*values: Optional[float]) -> Optional[float]:
    if any(v is None for v in values):
        return None
    return min(values)


def evaluate_conditions(sys: LinearSystem, f: Optional[Nonlinearity], dicho: DichotomySpec,
                        rho_A: float) -> TheoremConditions:
    """
    Scalar hypotheses of the conjugacy theorems from certified constants.

    :param rho_A: rho(A) over the window the dichotomy is used on
    """
    mu, ell1, ell2 = _nonlinear_constants(f)
    M, M0, theta = sys.M.value, sys.M0.value, sys.theta
    K, alpha = dicho.K, dicho.alpha
    regime = classify_regime(sys)
    r = rates(M, M0, ell1, ell2, theta)
    rho_star = rho_A * math.exp(alpha * theta)
    fpt_lhs = 2.0 * (ell1 + ell2) * K * rho_star
    alpha_upper = _min_defined(r.p1, r.p2)

    match regime:
        case Regime.PURE_PCA:
            p1_app, p2_app = r.p1_tilde, r.p2_tilde
            upper = _min_defined(r.p1_tilde, r.p2_tilde)
            flags = {
                "fpt": fpt_lhs < alpha,
                "schema0": r.v_tilde0 < 1,
                "schema0B": r.u_tilde0 < 1,
                "alfa": upper is not None and alpha < upper,
            }
        case Regime.ODE_LIMIT:
            p1_app, p2_app = r.p1, r.p2
            flags = {
                "fpt": fpt_lhs < alpha,
                "schema0": r.v0 < 1,
                "schema0B": r.v_tilde < 1,
                "alfa": alpha < M,
            }
        case _:
            p1_app, p2_app = r.p1, r.p2
            flags = {
                "fpt": fpt_lhs < alpha,
                "schema0": r.v < 1,
                "schema0B": r.v_tilde < 1,
                "alfa": alpha_upper is not None and alpha < alpha_upper,
            }
    strong_ok = flags["fpt"] and flags["schema0"] and flags["schema0B"]
    report = TheoremConditions(
        regime=regime,
        M=M, M0=M0, mu=mu, ell1=ell1, ell2=ell2, K=K, alpha=alpha, theta=theta,
        rho_A=rho_A, rho_star=rho_star,
        F1_theta=r.F1, F0_theta=r.F0, v=r.v, v_tilde=r.v_tilde,
        fpt_lhs=fpt_lhs, gamma_star=fpt_lhs / alpha, alpha_upper=alpha_upper,
        p1=r.p1, p2=r.p2,
        F1_tilde_theta=r.F1_tilde, v0=r.v0, v_tilde0=r.v_tilde0, u_tilde0=r.u_tilde0,
        p1_tilde=r.p1_tilde, p2_tilde=r.p2_tilde,
        p1_applicable=p1_app, p2_applicable=p2_app,
        flags=flags,
        strong_ok=strong_ok,
        holder_ok=strong_ok and flags["alfa"],
    )
    logger.info(
        f"conditions regime={regime.value} fpt_lhs={fpt_lhs:.6g} gamma*={report.gamma_star:.6g} "
        f"v={r.v:.6g} v~={r.v_tilde:.6g} flags={flags}"
    )
    return report


# continuity envelope

def continuity_envelope_check(sys: LinearSystem, f: Optional[Nonlinearity], pairs: Sequence[tuple],
                              tau: float, ts: Sequence[float], step: Optional[float] = None) -> EnvelopeReport:
    """
    |x(t,tau,xi') - x(t,tau,xi)| <= |xi - xi'| exp(p |t - tau|) for every pair and time,
    with p the nonlinear rate when f is present and the linear one otherwise.

    :raises InapplicableBoundError: the applicable rate is undefined
    """
    p1, p2 = applicable_rates(sys, f)
    nonlinear = f is not None and not f.is_zero
    tilde = classify_regime(sys) is Regime.PURE_PCA
    name = ("p1" if nonlinear else "p2") + ("_tilde" if tilde else "")
    p = p1 if nonlinear else p2
    if p is None:
        raise InapplicableBoundError(f"{name} is undefined because its contraction budget is >= 1")
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    xi = np.array([np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in pairs])
    xi_p = np.array([np.atleast_1d(np.asarray(b, dtype=float)) for _, b in pairs])
    t_lo, t_hi = min(tau, float(ts.min())), max(tau, float(ts.max()))
    trajs = ordered_map(
        lambda x: integrate_span(sys, f, tau, x, t_lo, t_hi, step=step).at(ts),
        [xi, xi_p],
    )
    gaps = np.linalg.norm(trajs[1] - trajs[0], axis=-1)
    rows = []
    for b in range(len(pairs)):
        d0 = float(np.linalg.norm(xi[b] - xi_p[b]))
        for i, t in enumerate(ts):
            envelope = d0 * math.exp(p * abs(t - tau))
            diff = float(gaps[b, i])
            rows.append(EnvelopeRow(xi=xi[b].tolist(), xi_prime=xi_p[b].tolist(), t=float(t),
                                    difference=diff, envelope=envelope, margin=envelope - diff))
    passed = all(r.difference <= r.envelope * (1 + 1e-9) + 1e-12 for r in rows)
    logger.info(f"envelope {name}={p:.6g} pairs={len(pairs)} times={len(ts)} "
                f"min_margin={min(r.margin for r in rows):.3e} passed={passed}")
    return EnvelopeReport(p_name=name, p=p, tau=tau, rows=rows, passed=passed)
