"""
Filename: integrator.py
Description:
    Fixed-step classical RK4 building blocks and breakpoint-aligned meshes.
    Steps never cross a breakpoint t_i; interval meshes are also aligned with
    zeta_i so that the frozen argument is always a node.

License: Apache 2.0
"""
import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from ..config import config
from ..model.grid import Grid
from .error import IntegrationError


def default_step(grid: Grid, cap: Optional[float] = None) -> float:
    """h = min(theta / 200, cap)."""
    return min(grid.theta / 200.0, config.ode_step_cap if cap is None else cap)


def piece_steps(length: float, h: float) -> int:
    """Step count of a mesh piece: a multiple of 4 so h and 2h Simpson both apply."""
    if length <= 0:
        return 0
    return 4 * math.ceil(length / (4 * h) - 1e-9)


class IntervalMesh(NamedTuple):
    """Nodes of [t_k, t_{k+1}]; nodes[zeta_index] == zeta_k."""
    k: int
    nodes: np.ndarray
    zeta_index: int

    @property
    def n_left(self) -> int:
        return self.zeta_index

    @property
    def n_right(self) -> int:
        return len(self.nodes) - 1 - self.zeta_index


def interval_mesh(grid: Grid, k: int, h: float) -> IntervalMesh:
    t_k, z_k, t_next = grid.interval(k)
    n1 = piece_steps(z_k - t_k, h)
    n2 = piece_steps(t_next - z_k, h)
    left = np.linspace(t_k, z_k, n1 + 1) if n1 else np.array([t_k])
    right = np.linspace(z_k, t_next, n2 + 1)[1:] if n2 else np.array([])
    nodes = np.concatenate([left, right])
    nodes[n1] = z_k
    return IntervalMesh(k=k, nodes=nodes, zeta_index=n1)


def segment_mesh(grid: Grid, a: float, b: float, h: float) -> np.ndarray:
    """Nodes from a to b (either order) clipped at every breakpoint in between."""
    lo, hi = min(a, b), max(a, b)
    k_lo, k_hi = grid.covering_indices(lo, hi)
    cuts = [lo]
    if k_hi > k_lo:
        cuts.extend(float(v) for v in np.atleast_1d(grid.t(np.arange(k_lo + 1, k_hi + 1))) if lo < v < hi)
    cuts.append(hi)
    pieces = [np.array([lo])]
    for u, v in zip(cuts[:-1], cuts[1:]):
        n = max(2, 2 * math.ceil((v - u) / (2 * h) - 1e-9))
        pieces.append(np.linspace(u, v, n + 1)[1:])
    nodes = np.concatenate(pieces)
    return nodes if a <= b else nodes[::-1]


def affine_step(y, a0, am, a1, h, b0=None, bm=None, b1=None):
    """
    One RK4 step of y' = a(s) y + b(s).

    All arguments broadcast over leading batch axes; a* are (..., n, n) at the
    step start, midpoint and end, y is (..., n, m) and h is scalar or (..., 1, 1).
    """
    def rhs(a, b, state):
        out = a @ state
        return out if b is None else out + b

    k1 = rhs(a0, b0, y)
    k2 = rhs(am, bm, y + 0.5 * h * k1)
    k3 = rhs(am, bm, y + 0.5 * h * k2)
    k4 = rhs(a1, b1, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(a_nodes, a_mid, y0, h, b_nodes=None, b_mid=None, interval: Optional[int] = None):
    """
    States of y' = a y + b at every node of a uniform mesh.

    :param a_nodes: (..., N+1, n, n) coefficient at the nodes
    :param a_mid: (..., N, n, n) coefficient at step midpoints
    :param y0: (..., n, m) state at node 0
    :param h: signed step, scalar, per-step (N,) or batched (..., 1, 1)
    :return: (..., N+1, n, m)
    """
    steps = a_mid.shape[-3]
    out = np.empty(a_nodes.shape[:-2] + y0.shape[-2:])
    y = np.asarray(y0, dtype=float)
    out[..., 0, :, :] = y
    per_step = np.ndim(h) == 1
    for i in range(steps):
        y = affine_step(
            y,
            a_nodes[..., i, :, :], a_mid[..., i, :, :], a_nodes[..., i + 1, :, :],
            h[i] if per_step else h,
            None if b_nodes is None else b_nodes[..., i, :, :],
            None if b_mid is None else b_mid[..., i, :, :],
            None if b_nodes is None else b_nodes[..., i + 1, :, :],
        )
        out[..., i + 1, :, :] = y
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite state in linear propagation", interval)
    return out


def rk4_step(fun: Callable, s: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of y' = fun(s, y)."""
    k1 = fun(s, y)
    k2 = fun(s + 0.5 * h, y + 0.5 * h * k1)
    k3 = fun(s + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(s + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
