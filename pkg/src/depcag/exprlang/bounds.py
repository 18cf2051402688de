"""
Filename: bounds.py
Description:
    Bound certification by dense sampling. Every variable of an expression is
    swept over a uniform grid of its range (endpoints included), finest along
    the block of a Lipschitz estimate; the sampled maximum is multiplied by a
    user-visible inflation factor and the method is recorded in the returned
    CertifiedBound.

    Ranges are looked up by exact variable name first ("x1"), then by block
    letter ("x" covers x1, x2, ...).

License: Apache 2.0
"""
import math
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..engine.error import DomainError
from ..model.bounds import CertifiedBound
from ..utils.log import setup_logger
from .ast import Expr, free_variables
from .evaluate import evaluate

logger = setup_logger("depcag.expr")

Ranges = Mapping[str, tuple[float, float]]
ExprOrVector = Union[Expr, Sequence[Expr]]

_COARSE_SHARE = 10


def _as_vector(e: ExprOrVector) -> list[Expr]:
    if isinstance(e, (list, tuple)):
        return list(e)
    return [e]


def _range_of(name: str, ranges: Ranges) -> tuple[float, float]:
    if name in ranges:
        lo, hi = ranges[name]
    elif name[0] in ranges:
        lo, hi = ranges[name[0]]
    else:
        raise DomainError(f"no sampling range for variable '{name}'")
    if hi < lo:
        raise DomainError(f"empty range [{lo}, {hi}] for variable '{name}'")
    return float(lo), float(hi)


def _check_budget(samples: int, inflation: float) -> None:
    if samples < 100:
        raise DomainError(f"sampled bounds need samples >= 100, got {samples}")
    if inflation < 1.0:
        raise DomainError(f"inflation must be >= 1, got {inflation}")


def _sample(exprs: list[Expr], ranges: Ranges, samples: int, dense: Optional[str] = None):
    """
    Values of every component on a tensor grid: (components, m_1, ..., m_d).

    Without `dense` every axis gets samples^(1/d) points. With a block letter,
    the block's variables share the full budget and every other variable is
    swept on a coarse grid of samples / _COARSE_SHARE points.
    """
    names = sorted(set().union(*(free_variables(e) for e in exprs)))
    if not names:
        values = np.array([evaluate(e, {}) for e in exprs], dtype=float)
        return names, [], values
    inside = [n for n in names if dense is None or n[0] == dense]
    outside = [n for n in names if n not in inside]
    fine = _per_axis(samples, len(inside))
    coarse = _per_axis(max(1, samples // _COARSE_SHARE), len(outside))
    axes = [np.linspace(*_range_of(n, ranges), fine if n in inside else coarse) for n in names]
    mesh = np.meshgrid(*axes, indexing="ij")
    env = dict(zip(names, mesh))
    values = np.stack([np.broadcast_to(evaluate(e, env), mesh[0].shape) for e in exprs])
    return names, axes, values


def _per_axis(budget: int, dims: int) -> int:
    if dims == 0:
        return 1
    return max(3, math.ceil(budget ** (1.0 / dims) - 1e-9))


def bound_abs(e: ExprOrVector, var_ranges: Ranges, samples: int, inflation: float) -> CertifiedBound:
    """
    Certified bound of sup |e| (Euclidean norm for a vector of expressions).

    :param e: expression or sequence of component expressions
    :param var_ranges: sampling interval per variable or block letter
    :param samples: total sample budget, at least 100
    :param inflation: factor >= 1 applied to the sampled maximum
    """
    _check_budget(samples, inflation)
    _, _, values = _sample(_as_vector(e), var_ranges, samples)
    peak = float(np.max(np.linalg.norm(values.reshape(values.shape[0], -1), axis=0)))
    return CertifiedBound.sampled(peak, samples, inflation)


def lipschitz_estimate(e: ExprOrVector, wrt: str, var_ranges: Ranges, samples: int,
                       inflation: float) -> CertifiedBound:
    """
    Certified Lipschitz constant of e with respect to one variable block.

    The block gets the full sample budget and the remaining variables a coarse
    grid. Difference quotients are taken between axis-adjacent and
    diagonal-adjacent sample points that differ only in the named block; all
    other variables are held fixed on each pair.

    :param e: expression or sequence of component expressions
    :param wrt: "x" or "y"
    :return: candidate l1 (x block) or l2 (y block); zero when e does not
        depend on the block
    """
    if wrt not in ("x", "y"):
        raise DomainError(f"Lipschitz block must be 'x' or 'y', got '{wrt}'")
    _check_budget(samples, inflation)
    exprs = _as_vector(e)
    names, axes, values = _sample(exprs, var_ranges, samples, dense=wrt)
    block = [i for i, n in enumerate(names) if n[0] == wrt]
    steps = {i: axes[i][1] - axes[i][0] for i in block}
    block = [i for i in block if steps[i] > 0]
    if not block:
        return CertifiedBound.sampled(0.0, samples, inflation)

    def shifted(axes_moved: list[int]) -> float:
        hi = [slice(None)] + [slice(None)] * len(names)
        lo = [slice(None)] + [slice(None)] * len(names)
        for a in axes_moved:
            hi[a + 1] = slice(1, None)
            lo[a + 1] = slice(None, -1)
        diff = np.linalg.norm(values[tuple(hi)] - values[tuple(lo)], axis=0)
        dist = math.sqrt(sum(steps[a] ** 2 for a in axes_moved))
        return float(np.max(diff)) / dist

    peak = max(shifted([a]) for a in block)
    if len(block) > 1:
        peak = max(peak, shifted(block))
    logger.debug(f"lipschitz block={wrt} vars={names} peak={peak:.6g}")
    return CertifiedBound.sampled(peak, samples, inflation)


def bound_matrix_norm(entries: Sequence[Sequence[Expr]], t_range: tuple[float, float],
                      samples: int, inflation: float) -> CertifiedBound:
    """Certified bound of sup_t ||Q(t)||_2 for a matrix of expressions in t."""
    _check_budget(samples, inflation)
    ts = np.linspace(float(t_range[0]), float(t_range[1]), samples)
    n_rows, n_cols = len(entries), len(entries[0])
    mats = np.empty((samples, n_rows, n_cols))
    for i, row in enumerate(entries):
        for j, entry in enumerate(row):
            mats[:, i, j] = np.broadcast_to(evaluate(entry, {"t": ts}), ts.shape)
    peak = float(np.max(np.linalg.norm(mats, ord=2, axis=(1, 2))))
    return CertifiedBound.sampled(peak, samples, inflation)
