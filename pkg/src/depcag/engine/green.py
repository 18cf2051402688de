"""
Filename: green.py
Description:
    Green-integral operator over a finite index window. For forcing g given
    at the flow-table nodes it returns

        x(s) = Z(s,0) S_j + U(s) int_{zeta_j}^{s} V g,      s in [t_j, t_{j+1}],

    with S_j = P (sum_{r<=j} a_r + sum_{r<j} b_r) - (I-P)(sum_{r>j} a_r + sum_{r>=j} b_r),
    a_r = Z(0,t_r) U(t_r) int_{t_r}^{zeta_r} V g and
    b_r = Z(0,t_{r+1}) U(t_{r+1}) int_{zeta_r}^{t_{r+1}} V g. This is the
    integral of the consistent Green kernel truncated to the window; it is
    continuous at every t_r and solves x' = A x + A0 x(gamma) + g.

License: Apache 2.0
"""
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline

from ..utils.log import setup_logger
from ..utils.parallel import ordered_map
from .dichotomy import GreenContext
from .error import WindowExceededError

logger = setup_logger("depcag.bounded")

Forcing = Callable[[int, np.ndarray], np.ndarray]


def _piece_integrals(w: np.ndarray, dx: float):
    """Total and cumulative Simpson integrals of w (B, N, n) along axis 1, at h and 2h."""
    if w.shape[1] < 2:
        zero = np.zeros((w.shape[0], w.shape[2]))
        return zero, zero, np.zeros_like(w), np.zeros_like(w[:, ::2])
    fine = cumulative_simpson(w, dx=dx, axis=1, initial=0)
    coarse = cumulative_simpson(w[:, ::2], dx=2 * dx, axis=1, initial=0)
    return simpson(w, dx=dx, axis=1), simpson(w[:, ::2], dx=2 * dx, axis=1), fine, coarse


class GreenSolution:
    """Node values of one operator application, with dense output."""

    def __init__(self, op: "GreenOperator", values: list[np.ndarray], forcing: list[np.ndarray],
                 quadrature_error: np.ndarray):
        self.op = op
        self.values = values
        self.forcing = forcing
        self.quadrature_error = quadrature_error
        self._splines: dict[tuple[int, bool], CubicHermiteSpline] = {}

    @property
    def batch(self) -> int:
        return self.values[0].shape[0]

    def node_values(self, k: int) -> np.ndarray:
        """(B, N, n) at the nodes of interval k."""
        return self.values[k - self.op.lo]

    def frozen(self, k: int) -> np.ndarray:
        """x(zeta_k), shape (B, n)."""
        return self.values[k - self.op.lo][:, self.op.meshes[k - self.op.lo].zeta_index]

    def _spline(self, k: int, left: bool) -> CubicHermiteSpline:
        key = (k, left)
        if key not in self._splines:
            c = k - self.op.lo
            mesh = self.op.meshes[c]
            zi = mesh.zeta_index
            part = slice(0, zi + 1) if left else slice(zi, None)
            x = self.values[c]
            dx = (np.einsum("nij,bnj->bni", self.op.a_nodes[c], x)
                  + np.einsum("nij,bj->bni", self.op.q_nodes[c], x[:, zi])
                  + self.forcing[c])
            self._splines[key] = CubicHermiteSpline(
                mesh.nodes[part], np.moveaxis(x[:, part], 1, 0), np.moveaxis(dx[:, part], 1, 0), axis=0
            )
        return self._splines[key]

    def at(self, ts) -> np.ndarray:
        """Values at arbitrary times of the window, shape (B, T, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        js = self.op.owner(ts)
        out = np.empty((self.batch, len(ts), self.op.n))
        for idx, (t, j) in enumerate(zip(ts, js)):
            mesh = self.op.meshes[int(j) - self.op.lo]
            zeta = mesh.nodes[mesh.zeta_index]
            left = mesh.n_right == 0 or (mesh.n_left > 0 and t <= zeta)
            out[:, idx] = self._spline(int(j), left)(t)
        return out

    def tail(self, ts, sup: float) -> np.ndarray:
        """Bound on the Green integral over the complement of the window."""
        return self.op.tail(ts, sup)


class GreenOperator:
    """Green integral over the intervals lo..hi of a context's flow table."""

    def __init__(self, ctx: GreenContext, lo: int, hi: int):
        table = ctx.table
        table._require(lo, hi)
        self.ctx = ctx
        self.lo, self.hi = lo, hi
        self.n = ctx.n
        sys = ctx.sys
        self.meshes, self.U, self.V = [], [], []
        self.a_nodes, self.q_nodes, self.zt_nodes = [], [], []
        self.ca, self.cb = [], []
        for k in range(lo, hi + 1):
            tab = table.table(k)
            c = k - table.lo
            self.meshes.append(tab.mesh)
            self.U.append(tab.U)
            self.V.append(tab.V)
            self.a_nodes.append(sys.A.at(tab.mesh.nodes))
            self.q_nodes.append(sys.A0.at(tab.mesh.nodes))
            self.zt_nodes.append(table.z_from_origin_nodes(k))
            self.ca.append(table.z0t[c] @ tab.U[0])
            self.cb.append(table.z0t[c + 1] @ tab.U[-1])
        grid = sys.grid
        self.time_window = (float(grid.t(lo)), float(grid.t(hi + 1)))

    @classmethod
    def covering(cls, ctx: GreenContext, t_lo: float, t_hi: float) -> "GreenOperator":
        lo, hi = ctx.sys.grid.covering_indices(t_lo, t_hi)
        return cls(ctx, lo, hi)

    def nodes(self, k: int) -> np.ndarray:
        return self.meshes[k - self.lo].nodes

    def owner(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_lo, t_hi = self.time_window
        if np.any(ts < t_lo) or np.any(ts > t_hi):
            raise WindowExceededError(
                (int(self.ctx.sys.grid.interval_index(float(ts.min()))),
                 int(self.ctx.sys.grid.interval_index(float(ts.max())))),
                (self.lo, self.hi),
            )
        end = ts >= t_hi
        js = np.asarray(self.ctx.sys.grid.interval_index(np.where(end, t_lo, ts)), dtype=np.int64)
        return np.where(end, self.hi, js)

    def tail(self, ts, sup: float) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        t_lo, t_hi = self.time_window
        ctx = self.ctx
        return ctx.green_scale() * sup * (np.exp(-ctx.alpha * (ts - t_lo)) + np.exp(-ctx.alpha * (t_hi - ts)))

    def _interval(self, c: int, g: np.ndarray):
        mesh = self.meshes[c]
        zi = mesh.zeta_index
        nodes = mesh.nodes
        w = np.einsum("nij,bnj->bni", self.V[c], g)
        dl = (nodes[zi] - nodes[0]) / mesh.n_left if mesh.n_left else 0.0
        dr = (nodes[-1] - nodes[zi]) / mesh.n_right if mesh.n_right else 0.0
        il, il_c, cl, cl_c = _piece_integrals(w[:, : zi + 1], dl)
        ir, ir_c, cr, cr_c = _piece_integrals(w[:, zi:], dr)
        # int_{zeta}^{s} V g at every node, fine and at even nodes
        local = np.concatenate([cl - il[:, None], cr[:, 1:]], axis=1)
        local_c = np.concatenate([cl_c - il_c[:, None], cr_c[:, 1:]], axis=1)
        a = np.einsum("ij,bj->bi", self.ca[c], il)
        b = np.einsum("ij,bj->bi", self.cb[c], ir)
        a_c = np.einsum("ij,bj->bi", self.ca[c], il_c)
        b_c = np.einsum("ij,bj->bi", self.cb[c], ir_c)
        return a, b, local, a_c, b_c, local_c

    def _combine(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        cum_a, cum_b = np.cumsum(A, axis=0), np.cumsum(B, axis=0)
        past = cum_a + cum_b - B
        future = (cum_a[-1] - cum_a) + (cum_b[-1] - cum_b + B)
        return (np.einsum("ij,rbj->rbi", self.ctx.P, past)
                - np.einsum("ij,rbj->rbi", self.ctx.Q, future))

    def apply(self, forcing: Forcing) -> GreenSolution:
        """
        Apply the operator to a forcing given per interval.

        :param forcing: forcing(k, nodes) -> (N, n) or (B, N, n) node values on interval k
        :return: GreenSolution with node values of shape (B, N, n) per interval
        """
        count = self.hi - self.lo + 1
        g_list = []
        for c in range(count):
            g = np.asarray(forcing(self.lo + c, self.meshes[c].nodes), dtype=float)
            g_list.append(g[None] if g.ndim == 2 else g)
        batch = max(g.shape[0] for g in g_list)
        g_list = [np.broadcast_to(g, (batch,) + g.shape[1:]) for g in g_list]

        parts = ordered_map(lambda c: self._interval(c, g_list[c]), range(count))
        S = self._combine(np.stack([p[0] for p in parts]), np.stack([p[1] for p in parts]))
        S_c = self._combine(np.stack([p[3] for p in parts]), np.stack([p[4] for p in parts]))

        values = []
        quad = np.zeros(batch)
        for c, (_, _, local, _, _, local_c) in enumerate(parts):
            zt, U = self.zt_nodes[c], self.U[c]
            x = np.einsum("nij,bj->bni", zt, S[c]) + np.einsum("nij,bnj->bni", U, local)
            x_c = np.einsum("nij,bj->bni", zt[::2], S_c[c]) + np.einsum("nij,bnj->bni", U[::2], local_c)
            quad = np.maximum(quad, np.linalg.norm(x[:, ::2] - x_c, axis=-1).max(axis=1))
            values.append(x)
        logger.debug(f"green operator window=({self.lo},{self.hi}) batch={batch} quad_err={quad.max():.3e}")
        return GreenSolution(self, values, g_list, quad)
