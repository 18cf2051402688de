"""
Filename: flow.py
Description:
    Linear flow of a DEPCAG: the Cauchy matrix Phi(t,s), the matrices J(t,tau)
    and E(t,tau), the transition matrix Z(t,tau), condition (C) and rho(A).

    FlowTable integrates every interval of an index window once, outward
    from zeta_k, and stores at the interval nodes

        U(s) = Phi(s, zeta_k),   V(s) = Phi(zeta_k, s),   E(s, zeta_k).

    Transition matrices are assembled from the local one-interval maps
    Z(t_{k+1}, t_k) = E(t_{k+1}, zeta_k) E(t_k, zeta_k)^-1 and their
    separately factored inverses; Phi^-1 is never formed globally.

License: Apache 2.0
"""
import time
from collections import defaultdict
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm, lu_factor, lu_solve

from ..config import config
from ..model.reports import ConditionCReport, ConditionCRow, Regime
from ..model.system import LinearSystem
from ..utils.log import numerical_warning, setup_logger
from ..utils.parallel import ordered_map
from .error import DomainError, SingularFactorError, WindowExceededError
from .integrator import IntervalMesh, affine_step, default_step, interval_mesh, propagate, segment_mesh

logger = setup_logger("depcag.flow")


def _t(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2)


class IntervalTable(NamedTuple):
    mesh: IntervalMesh
    U: np.ndarray
    V: np.ndarray
    E: np.ndarray


class FlowTable:
    """Per-interval flow data over the index window [lo, hi].

    The window is widened to contain i(0) because the anchors Z(t_k, 0) and
    Z(0, t_k) are built outward from the interval holding 0.
    """

    def __init__(self, sys: LinearSystem, lo: int, hi: int, step: Optional[float] = None):
        grid = sys.grid
        self.sys = sys
        self.n = sys.dim
        self.i0 = int(grid.interval_index(0.0))
        self.lo, self.hi = min(lo, self.i0), max(hi, self.i0)
        grid.require_indices(self.lo, self.hi)
        self.h = step or default_step(grid)

        started = time.perf_counter()
        meshes = [interval_mesh(grid, k, self.h) for k in range(self.lo, self.hi + 1)]
        self.tables: list[Optional[IntervalTable]] = [None] * len(meshes)
        groups: dict[tuple[int, int], list[int]] = defaultdict(list)
        for idx, m in enumerate(meshes):
            groups[(m.n_left, m.n_right)].append(idx)
        for (n1, n2), members in groups.items():
            self._integrate_group([meshes[i] for i in members], n1, n2, members)
        self._factorize()
        self._anchor()
        logger.debug(
            f"flow table window=({self.lo},{self.hi}) step={self.h:.4g} "
            f"elapsed={time.perf_counter() - started:.3f}s"
        )

    # construction

    def _integrate_group(self, meshes: list[IntervalMesh], n1: int, n2: int, members: list[int]):
        n = self.n
        nodes = np.stack([m.nodes for m in meshes])
        mids = 0.5 * (nodes[:, :-1] + nodes[:, 1:])
        a_n, a_m = self.sys.A.at(nodes), self.sys.A.at(mids)
        q_n, q_m = self.sys.A0.at(nodes), self.sys.A0.at(mids)
        # [U | E]' = A [U | E] + [0 | A0]
        b_n = np.concatenate([np.zeros_like(q_n), q_n], axis=-1)
        b_m = np.concatenate([np.zeros_like(q_m), q_m], axis=-1)
        count = len(meshes)
        eye = np.broadcast_to(np.eye(n), (count, n, n))
        y0 = np.concatenate([eye, eye], axis=-1)
        shape = (count, nodes.shape[1], n, n)
        U, V, E = np.empty(shape), np.empty(shape), np.empty(shape)
        interval = meshes[0].k if count == 1 else None

        if n2:
            h = ((nodes[:, -1] - nodes[:, n1]) / n2)[:, None, None]
            y = propagate(a_n[:, n1:], a_m[:, n1:], y0, h, b_n[:, n1:], b_m[:, n1:], interval)
            U[:, n1:], E[:, n1:] = y[..., :n], y[..., n:]
            w = propagate(-_t(a_n[:, n1:]), -_t(a_m[:, n1:]), eye, h, interval=interval)
            V[:, n1:] = _t(w)
        if n1:
            h = (-(nodes[:, n1] - nodes[:, 0]) / n1)[:, None, None]
            rev_m = slice(n1 - 1, None, -1)
            y = propagate(a_n[:, n1::-1], a_m[:, rev_m], y0, h, b_n[:, n1::-1], b_m[:, rev_m], interval)
            U[:, n1::-1], E[:, n1::-1] = y[..., :n], y[..., n:]
            w = propagate(-_t(a_n[:, n1::-1]), -_t(a_m[:, rev_m]), eye, h, interval=interval)
            V[:, n1::-1] = _t(w)

        for g, idx in enumerate(members):
            self.tables[idx] = IntervalTable(meshes[g], U[g], V[g], E[g])

    def _inverse(self, m: np.ndarray, k: int) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = float(np.linalg.cond(m))
        if not np.isfinite(cond) or cond > config.singular_cond:
            numerical_warning(logger, "singular E-factor", k=k, cond=cond)
            raise SingularFactorError(k, cond)
        return lu_solve(lu_factor(m), np.eye(self.n))

    def _inverses(self, ms: np.ndarray, js: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            conds = np.linalg.cond(ms)
        bad = ~np.isfinite(conds) | (conds > config.singular_cond)
        if np.any(bad):
            first = int(np.argmax(bad))
            numerical_warning(logger, "singular E-factor", k=int(js[first]), cond=float(conds[first]))
            raise SingularFactorError(int(js[first]), float(conds[first]))
        return np.linalg.solve(ms, np.broadcast_to(np.eye(self.n), ms.shape))

    def _factorize(self):
        self.E_t = np.stack([tab.E[0] for tab in self.tables])
        self.E_next = np.stack([tab.E[-1] for tab in self.tables])
        self.inv_t = np.stack([self._inverse(m, self.lo + i) for i, m in enumerate(self.E_t)])
        self.inv_next = np.stack([self._inverse(m, self.lo + i) for i, m in enumerate(self.E_next)])
        self.fwd = self.E_next @ self.inv_t     # Z(t_{k+1}, t_k)
        self.bwd = self.E_t @ self.inv_next     # Z(t_k, t_{k+1})

    def _anchor(self):
        """zt0[k - lo] = Z(t_k, 0) and z0t[k - lo] = Z(0, t_k) for lo <= k <= hi + 1."""
        count = self.hi - self.lo + 2
        zt0 = np.empty((count, self.n, self.n))
        z0t = np.empty((count, self.n, self.n))
        _, _, _, e0 = self.local(np.array([0.0]), np.array([self.i0]))
        e0 = e0[0]
        e0_inv = self._inverse(e0, self.i0)
        c = self.i0 - self.lo
        zt0[c], zt0[c + 1] = self.E_t[c] @ e0_inv, self.E_next[c] @ e0_inv
        z0t[c], z0t[c + 1] = e0 @ self.inv_t[c], e0 @ self.inv_next[c]
        for i in range(c + 2, count):
            zt0[i] = self.fwd[i - 1] @ zt0[i - 1]
            z0t[i] = z0t[i - 1] @ self.bwd[i - 1]
        for i in range(c - 1, -1, -1):
            zt0[i] = self.bwd[i] @ zt0[i + 1]
            z0t[i] = z0t[i + 1] @ self.fwd[i]
        self.zt0, self.z0t = zt0, z0t

    # lookup

    def table(self, k: int) -> IntervalTable:
        self._require(k, k)
        return self.tables[k - self.lo]

    @property
    def time_window(self) -> tuple[float, float]:
        return float(self.sys.grid.t(self.lo)), float(self.sys.grid.t(self.hi + 1))

    def _require(self, a: int, b: int):
        if a < self.lo or b > self.hi:
            raise WindowExceededError((int(a), int(b)), (self.lo, self.hi))

    def owner(self, ts) -> np.ndarray:
        """Interval index of each time; the right end of the window maps to hi."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_lo, t_hi = self.time_window
        if np.any(ts < t_lo) or np.any(ts > t_hi):
            lo_k = int(self.sys.grid.interval_index(float(np.min(ts)))) if np.min(ts) >= t_lo else self.lo - 1
            hi_k = int(self.sys.grid.interval_index(float(np.max(ts)))) if np.max(ts) <= t_hi else self.hi + 1
            raise WindowExceededError((lo_k, hi_k), (self.lo, self.hi))
        end = ts == t_hi
        inner = np.where(end, t_lo, ts)
        js = np.asarray(self.sys.grid.interval_index(inner), dtype=np.int64)
        return np.where(end, self.hi, js)

    def local(self, ts, js=None):
        """
        U, V and E at arbitrary times, one RK4 step from the nearest node.

        :param ts: times, shape (B,)
        :param js: interval of each time; needed for a time equal to t_{k+1}
            that should be read from interval k
        :return: (js, U, V, E), matrices of shape (B, n, n)
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if js is None:
            js = self.owner(ts)
        else:
            js = np.broadcast_to(np.asarray(js, dtype=np.int64), ts.shape)
            self._require(int(js.min()), int(js.max()))
        n = self.n
        s_p = np.empty_like(ts)
        u_p, v_p, e_p = (np.empty((len(ts), n, n)) for _ in range(3))
        for j in np.unique(js):
            sel = js == j
            tab = self.tables[j - self.lo]
            nodes = tab.mesh.nodes
            if np.any(ts[sel] < nodes[0] - 1e-12) or np.any(ts[sel] > nodes[-1] + 1e-12):
                raise DomainError(f"time outside interval {int(j)} = [{nodes[0]}, {nodes[-1]}]")
            p = np.clip(np.searchsorted(nodes, ts[sel]), 1, len(nodes) - 1)
            p = np.where(np.abs(nodes[p - 1] - ts[sel]) <= np.abs(nodes[p] - ts[sel]), p - 1, p)
            s_p[sel] = nodes[p]
            u_p[sel], v_p[sel], e_p[sel] = tab.U[p], tab.V[p], tab.E[p]
        dt = ts - s_p
        if not np.any(dt):
            return js, u_p, v_p, e_p
        mid = s_p + 0.5 * dt
        a0, am, a1 = self.sys.A.at(s_p), self.sys.A.at(mid), self.sys.A.at(ts)
        q0, qm, q1 = self.sys.A0.at(s_p), self.sys.A0.at(mid), self.sys.A0.at(ts)
        zero = np.zeros_like(q0)
        h = dt[:, None, None]
        y = affine_step(
            np.concatenate([u_p, e_p], axis=-1), a0, am, a1, h,
            np.concatenate([zero, q0], axis=-1),
            np.concatenate([zero, qm], axis=-1),
            np.concatenate([zero, q1], axis=-1),
        )
        w = affine_step(_t(v_p), -_t(a0), -_t(am), -_t(a1), h)
        return js, y[..., :n], _t(w), y[..., n:]

    # matrices

    def z_from_origin(self, ts, js=None) -> np.ndarray:
        """Z(t, 0) for each t, shape (B, n, n)."""
        js, _, _, e = self.local(ts, js)
        c = js - self.lo
        return e @ self.inv_t[c] @ self.zt0[c]

    def z_to_origin(self, ss, js=None) -> np.ndarray:
        """Z(0, s) for each s, shape (B, n, n)."""
        js, _, _, e = self.local(ss, js)
        c = js - self.lo
        return self.z0t[c] @ self.E_t[c] @ self._inverses(e, js)

    def z_from_origin_nodes(self, k: int) -> np.ndarray:
        """Z(s, 0) at every node of interval k."""
        tab = self.table(k)
        c = k - self.lo
        return tab.E @ (self.inv_t[c] @ self.zt0[c])

    def z(self, t: float, tau: float) -> np.ndarray:
        """Transition matrix Z(t, tau) as a product of local one-interval maps."""
        if t == tau:
            return np.eye(self.n)
        j, i = (int(v) for v in self.owner([t, tau]))
        _, _, _, e = self.local(np.array([t, tau]), np.array([j, i]))
        e_t, e_tau_inv = e[0], self._inverse(e[1], i)
        if j == i:
            # Same interval, including t and tau on opposite sides of zeta_i.
            return e_t @ e_tau_inv
        ci, cj = i - self.lo, j - self.lo
        if j > i:
            m = self.E_next[ci] @ e_tau_inv
            for c in range(ci + 1, cj):
                m = self.fwd[c] @ m
            return e_t @ self.inv_t[cj] @ m
        m = self.E_t[ci] @ e_tau_inv
        for c in range(ci - 1, cj, -1):
            m = self.bwd[c] @ m
        return e_t @ self.inv_next[cj] @ m

    def _same_interval(self, t: float, s: float) -> int:
        a, b = min(t, s), max(t, s)
        k = int(self.owner([a])[0])
        if b > float(self.sys.grid.t(k + 1)):
            raise DomainError(f"t={t} and s={s} do not lie in one grid interval")
        return k

    def phi(self, t: float, s: float) -> np.ndarray:
        """Phi(t, s) for t, s in one closed interval."""
        k = self._same_interval(t, s)
        _, u, v, _ = self.local(np.array([t, s]), k)
        return u[0] @ v[1]

    def phi_batch(self, ts, ss, js) -> np.ndarray:
        """Phi(t_b, s_b) for pairs that share interval js[b]."""
        _, u, _, _ = self.local(ts, js)
        _, _, v, _ = self.local(ss, js)
        return u @ v

    def e(self, t: float, tau: float) -> np.ndarray:
        """E(t, tau) = E(t, zeta) + Phi(t, tau)(I - E(tau, zeta)) within one interval."""
        k = self._same_interval(t, tau)
        _, u, v, e = self.local(np.array([t, tau]), k)
        return e[0] + u[0] @ v[1] @ (np.eye(self.n) - e[1])


def table_for(sys: LinearSystem, t_lo: float, t_hi: float, step: Optional[float] = None,
              margin: int = 0) -> FlowTable:
    """FlowTable whose window covers [t_lo, t_hi] plus `margin` intervals on each side."""
    lo, hi = sys.grid.covering_indices(t_lo, t_hi)
    return FlowTable(sys, lo - margin, hi + margin, step)


def _check_same_interval(sys: LinearSystem, t: float, tau: float) -> None:
    a, b = min(t, tau), max(t, tau)
    k = int(sys.grid.interval_index(a))
    if b > float(sys.grid.t(k + 1)):
        raise DomainError(f"t={t} and tau={tau} do not lie in one grid interval")


def _segment(sys: LinearSystem, a: float, b: float, step: Optional[float]):
    nodes = segment_mesh(sys.grid, a, b, step or default_step(sys.grid))
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    return nodes, mids, np.diff(nodes)


def fundamental_matrix(sys: LinearSystem, t: float, s: float, step: Optional[float] = None) -> np.ndarray:
    """
    Phi(t, s), integrating X' = A(t) X from s to t with X(s) = I.

    :raises IntegrationError: non-finite values
    """
    if t == s:
        return np.eye(sys.dim)
    nodes, mids, hs = _segment(sys, s, t, step)
    return propagate(sys.A.at(nodes), sys.A.at(mids), np.eye(sys.dim), hs)[-1]


def j_matrix(sys: LinearSystem, t: float, tau: float, step: Optional[float] = None) -> np.ndarray:
    """
    J(t, tau) = I + int_tau^t Phi(tau, s) A0(s) ds by composite Simpson.

    :raises DomainError: t and tau in different grid intervals
    """
    _check_same_interval(sys, t, tau)
    if t == tau:
        return np.eye(sys.dim)
    nodes, mids, hs = _segment(sys, tau, t, step)
    # s -> Phi(tau, s) solves W' = -W A
    w = _t(propagate(-_t(sys.A.at(nodes)), -_t(sys.A.at(mids)), np.eye(sys.dim), hs))
    return np.eye(sys.dim) + simpson(w @ sys.A0.at(nodes), x=nodes, axis=0)


def e_matrix(sys: LinearSystem, t: float, tau: float, step: Optional[float] = None) -> np.ndarray:
    """
    E(t, tau) = Phi(t, tau) + int_tau^t Phi(t, s) A0(s) ds, integrating
    X' = A X + A0 from X(tau) = I.

    :raises DomainError: t and tau in different grid intervals
    """
    _check_same_interval(sys, t, tau)
    if t == tau:
        return np.eye(sys.dim)
    nodes, mids, hs = _segment(sys, tau, t, step)
    return propagate(sys.A.at(nodes), sys.A.at(mids), np.eye(sys.dim), hs,
                     sys.A0.at(nodes), sys.A0.at(mids))[-1]


def _norm_integrals(sys: LinearSystem, k: int, h: float) -> ConditionCRow:
    mesh = interval_mesh(sys.grid, k, h)
    zi = mesh.zeta_index
    left, right = mesh.nodes[: zi + 1], mesh.nodes[zi:]

    def integral(q, piece):
        if len(piece) < 2:
            return 0.0
        return float(simpson(np.linalg.norm(q.at(piece), ord=2, axis=(-2, -1)), x=piece))

    return ConditionCRow(
        k=k,
        rho_plus_A=float(np.exp(integral(sys.A, left))),
        rho_minus_A=float(np.exp(integral(sys.A, right))),
        rho_plus_A0=float(np.exp(integral(sys.A0, left))),
        rho_minus_A0=float(np.exp(integral(sys.A0, right))),
    )


def check_condition_c(sys: LinearSystem, lo: int, hi: int, step: Optional[float] = None) -> ConditionCReport:
    """
    Condition (C) and rho(A) on the index window [lo, hi].

    rho_k^+(Q) = exp(int_{t_k}^{zeta_k} ||Q||), rho_k^-(Q) = exp(int_{zeta_k}^{t_{k+1}} ||Q||),
    nu^+- = sup_k rho_k^+-(A) ln rho_k^+-(A0), rho(A) = sup_k rho_k^+(A) rho_k^-(A).
    """
    if hi < lo:
        raise DomainError(f"empty index window ({lo}, {hi})")
    sys.grid.require_indices(lo, hi)
    h = step or default_step(sys.grid)
    rows = ordered_map(lambda k: _norm_integrals(sys, k, h), range(lo, hi + 1))
    nu_plus = max(r.rho_plus_A * np.log(r.rho_plus_A0) for r in rows)
    nu_minus = max(r.rho_minus_A * np.log(r.rho_minus_A0) for r in rows)
    rho_A = max(r.rho_plus_A * r.rho_minus_A for r in rows)
    report = ConditionCReport(
        window=(lo, hi),
        nu_plus=float(nu_plus),
        nu_minus=float(nu_minus),
        rho_A=float(rho_A),
        satisfied=bool(nu_plus < 1 and nu_minus < 1),
        per_interval=rows,
    )
    logger.info(
        f"condition (C) window=({lo},{hi}) nu+={report.nu_plus:.4g} nu-={report.nu_minus:.4g} "
        f"rho(A)={report.rho_A:.6g} satisfied={report.satisfied}"
    )
    return report


def transition_matrix(sys: LinearSystem, t: float, tau: float, table: Optional[FlowTable] = None,
                      step: Optional[float] = None) -> np.ndarray:
    """
    Z(t, tau): z(t) = Z(t, tau) xi solves the linear DEPCAG with z(tau) = xi.

    :raises SingularFactorError: an E-factor is singular (condition (C) fails)
    :raises WindowExceededError: t or tau outside the table window
    """
    if t == tau:
        return np.eye(sys.dim)
    table = table or table_for(sys, min(t, tau), max(t, tau), step)
    return table.z(t, tau)


def transition_residual(sys: LinearSystem, table: FlowTable, ts, tau: float, h: float = 1e-5) -> np.ndarray:
    """
    |dZ/dt - A(t) Z(t, tau) - A0(t) Z(gamma(t), tau)| / max(1, |Z(t, tau)|) at each t,
    with dZ/dt a central difference kept inside the interval of t.

    :raises DomainError: t is a breakpoint
    :raises WindowExceededError: t or tau outside the table window
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    grid = sys.grid
    out = np.empty(len(ts))
    for b, t in enumerate(ts):
        k = int(grid.interval_index(float(t)))
        d = min(h, 0.5 * (t - float(grid.t(k))), 0.5 * (float(grid.t(k + 1)) - t))
        if d <= 0:
            raise DomainError(f"t={t} is a grid breakpoint")
        z = table.z(float(t), tau)
        dz = (table.z(float(t + d), tau) - table.z(float(t - d), tau)) / (2.0 * d)
        rhs = sys.A.at(float(t)) @ z + sys.A0.at(float(t)) @ table.z(float(grid.zeta(k)), tau)
        out[b] = np.linalg.norm(dz - rhs, 2) / max(1.0, float(np.linalg.norm(z, 2)))
    return out


def discrete_reduction(sys: LinearSystem, lo: int, hi: int, table: Optional[FlowTable] = None,
                       step: Optional[float] = None) -> list[np.ndarray]:
    """[Z(t_{n+1}, t_n) for lo <= n <= hi]."""
    table = table or FlowTable(sys, lo, hi, step)
    table._require(lo, hi)
    return [table.fwd[k - table.lo].copy() for k in range(lo, hi + 1)]


def closed_form_reduction(sys: LinearSystem, lo: int, hi: int) -> list[np.ndarray]:
    """
    [Z(t_{n+1}, t_n) for lo <= n <= hi] of a constant-coefficient system from
    E(t, zeta) = exp(A (t - zeta)) + int_0^{t - zeta} exp(A u) du A0, read off the
    exponential of the block matrix [[A, A0], [0, 0]].

    :raises DomainError: A or A0 depends on t
    """
    if not (sys.A.is_constant and sys.A0.is_constant):
        raise DomainError("closed-form reduction needs constant A and A0")
    n = sys.dim
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n], block[:n, n:] = sys.A.constant_value, sys.A0.constant_value

    def e_factor(span: float) -> np.ndarray:
        m = expm(span * block)
        return m[:n, :n] + m[:n, n:]

    grid = sys.grid
    out = []
    for k in range(lo, hi + 1):
        zeta = float(grid.zeta(k))
        e_t, e_next = e_factor(float(grid.t(k)) - zeta), e_factor(float(grid.t(k + 1)) - zeta)
        out.append(np.linalg.solve(e_t.T, e_next.T).T)
    return out


def classify_regime(sys: LinearSystem) -> Regime:
    if sys.A0.is_zero:
        return Regime.ODE_LIMIT
    if sys.A.is_zero:
        return Regime.PURE_PCA
    return Regime.GENERAL
