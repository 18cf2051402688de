"""
Filename: system.py
Description:
    System definitions built from expression text: time-dependent matrices
    A(t), A0(t), the nonlinearity f(t, x, y) and forcing terms g(t), each with
    the certified constants the theorems consume.

License: Apache 2.0
"""
import re
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr, model_validator

from ..engine.error import DomainError, ExprNameError
from ..exprlang import Expr, evaluate, free_variables, is_constant, parse
from ..exprlang.bounds import bound_abs, bound_matrix_norm, lipschitz_estimate
from .bounds import CertifiedBound
from .grid import AnyGrid

_STATE_VAR = re.compile(r"([xy])([1-9]\d*)")


class MatrixFunction(BaseModel):
    """n x n matrix of expressions in t."""
    model_config = ConfigDict(frozen=True)

    entries: tuple[tuple[str, ...], ...]

    _trees: tuple[tuple[Expr, ...], ...] = PrivateAttr()
    _constant: Optional[np.ndarray] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _parse_entries(self) -> "MatrixFunction":
        n = len(self.entries)
        if n == 0 or any(len(row) != n for row in self.entries):
            raise ValueError(f"matrix must be square and non-empty, got rows {[len(r) for r in self.entries]}")
        trees = tuple(tuple(parse(src) for src in row) for row in self.entries)
        for row in trees:
            for e in row:
                extra = free_variables(e) - {"t"}
                if extra:
                    name = sorted(extra)[0]
                    raise ExprNameError(name, 0, kind="matrix variable")
        self._trees = trees
        if all(is_constant(e) for row in trees for e in row):
            self._constant = np.array([[evaluate(e, {}) for e in row] for row in trees], dtype=float)
        return self

    @classmethod
    def constant(cls, matrix) -> "MatrixFunction":
        arr = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(entries=tuple(tuple(repr(float(v)) for v in row) for row in arr))

    @classmethod
    def zeros(cls, n: int) -> "MatrixFunction":
        return cls.constant(np.zeros((n, n)))

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def trees(self) -> tuple[tuple[Expr, ...], ...]:
        return self._trees

    @property
    def is_constant(self) -> bool:
        return self._constant is not None

    @property
    def constant_value(self) -> Optional[np.ndarray]:
        return None if self._constant is None else self._constant.copy()

    @property
    def is_zero(self) -> bool:
        return self._constant is not None and not np.any(self._constant)

    def at(self, t):
        """Matrix at a time (n, n) or at an array of times (m, n, n)."""
        if np.ndim(t) == 0:
            if self._constant is not None:
                return self._constant.copy()
            return np.array([[evaluate(e, {"t": float(t)}) for e in row] for row in self._trees])
        ts = np.asarray(t, dtype=float)
        if self._constant is not None:
            return np.broadcast_to(self._constant, ts.shape + self._constant.shape).copy()
        out = np.empty(ts.shape + (self.dim, self.dim))
        for i, row in enumerate(self._trees):
            for j, e in enumerate(row):
                out[..., i, j] = evaluate(e, {"t": ts})
        return out

    def sup_norm_bound(self, t_range: tuple[float, float], samples: int,
                       inflation: float) -> CertifiedBound:
        """Analytic for constant matrices, otherwise sampled over t_range."""
        if self._constant is not None:
            return CertifiedBound.analytic(float(np.linalg.norm(self._constant, ord=2)))
        return bound_matrix_norm(self._trees, t_range, samples, inflation)


class VectorField(BaseModel):
    """Vector of expressions in t and the state blocks x1..xn, y1..yn."""
    model_config = ConfigDict(frozen=True)

    components: tuple[str, ...]
    state_dim: Optional[int] = None

    _trees: tuple[Expr, ...] = PrivateAttr()
    _constant: Optional[np.ndarray] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _parse_components(self) -> "VectorField":
        if not self.components:
            raise ValueError("vector field needs at least one component")
        n = self.state_dim if self.state_dim is not None else len(self.components)
        trees = tuple(parse(src) for src in self.components)
        for e in trees:
            for name in free_variables(e):
                if name == "t":
                    continue
                m = _STATE_VAR.fullmatch(name)
                if self.state_dim == 0 or m is None or int(m.group(2)) > n:
                    raise ExprNameError(name, 0, kind="state variable")
        self._trees = trees
        if all(is_constant(e) for e in trees):
            self._constant = np.array([evaluate(e, {}) for e in trees], dtype=float)
        return self

    @classmethod
    def constant(cls, vector, state_dim: Optional[int] = None) -> "VectorField":
        arr = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(components=tuple(repr(float(v)) for v in arr), state_dim=state_dim)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def trees(self) -> tuple[Expr, ...]:
        return self._trees

    @property
    def is_zero(self) -> bool:
        return self._constant is not None and not np.any(self._constant)

    @property
    def depends_on_state(self) -> bool:
        return any(free_variables(e) - {"t"} for e in self._trees)

    def at(self, t, x=None, y=None) -> np.ndarray:
        """
        Evaluate at broadcastable arguments.

        :param t: time, scalar or shape (B,)
        :param x: state, shape (n,) or (B, n)
        :param y: frozen state, shape (n,) or (B, n)
        :return: shape (dim,) or (B, dim)
        """
        shape = np.broadcast_shapes(
            np.shape(t),
            np.shape(x)[:-1] if x is not None else (),
            np.shape(y)[:-1] if y is not None else (),
        )
        if self._constant is not None:
            return np.broadcast_to(self._constant, shape + (self.dim,)).copy()
        env = {"t": np.asarray(t, dtype=float)}
        for letter, block in (("x", x), ("y", y)):
            if block is None:
                continue
            arr = np.asarray(block, dtype=float)
            for i in range(arr.shape[-1]):
                env[f"{letter}{i + 1}"] = arr[..., i]
        out = np.empty(shape + (self.dim,))
        for i, e in enumerate(self._trees):
            out[..., i] = evaluate(e, env)
        return out


class LinearSystem(BaseModel):
    """y'(t) = A(t) y(t) + A0(t) y(gamma(t)) on a breakpoint grid."""
    model_config = ConfigDict(frozen=True)

    A: MatrixFunction
    A0: MatrixFunction
    M: CertifiedBound
    M0: CertifiedBound
    grid: AnyGrid

    @model_validator(mode="after")
    def _check_dims(self) -> "LinearSystem":
        if self.A.dim != self.A0.dim:
            raise ValueError(f"A is {self.A.dim}x{self.A.dim} but A0 is {self.A0.dim}x{self.A0.dim}")
        return self

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def theta(self) -> float:
        return self.grid.theta

    @classmethod
    def build(cls, A, A0, grid, M: Optional[CertifiedBound] = None,
              M0: Optional[CertifiedBound] = None, t_range: tuple[float, float] = (-50.0, 50.0),
              samples: int = 1000, inflation: float = 1.1) -> "LinearSystem":
        """System from matrices or MatrixFunctions; missing bounds are certified here."""
        A = A if isinstance(A, MatrixFunction) else _matrix(A)
        A0 = A0 if isinstance(A0, MatrixFunction) else _matrix(A0)
        return cls(
            A=A,
            A0=A0,
            M=M or A.sup_norm_bound(t_range, samples, inflation),
            M0=M0 or A0.sup_norm_bound(t_range, samples, inflation),
            grid=grid,
        )


def _matrix(value) -> MatrixFunction:
    arr = np.atleast_2d(np.asarray(value, dtype=object))
    if all(isinstance(v, str) for v in arr.flat):
        return MatrixFunction(entries=tuple(tuple(row) for row in arr.tolist()))
    return MatrixFunction.constant(np.asarray(arr, dtype=float))


class Nonlinearity(BaseModel):
    """f(t, x, y) with sup bound mu and block Lipschitz constants l1, l2."""
    model_config = ConfigDict(frozen=True)

    f: VectorField
    mu: CertifiedBound
    ell1: CertifiedBound
    ell2: CertifiedBound

    @property
    def dim(self) -> int:
        return self.f.dim

    @property
    def is_zero(self) -> bool:
        return self.f.is_zero

    @classmethod
    def zero(cls, n: int) -> "Nonlinearity":
        nought = CertifiedBound.analytic(0.0)
        return cls(f=VectorField.constant(np.zeros(n), state_dim=n), mu=nought, ell1=nought, ell2=nought)

    @classmethod
    def certify(cls, components: Sequence[str], ranges: dict[str, tuple[float, float]],
                samples: int, inflation: float, mu: Optional[CertifiedBound] = None,
                ell1: Optional[CertifiedBound] = None,
                ell2: Optional[CertifiedBound] = None) -> "Nonlinearity":
        """
        Nonlinearity with sampled bounds for every constant not supplied.

        :param components: one expression per state component
        :param ranges: sampling ranges for t and the x/y blocks
        """
        f = VectorField(components=tuple(components), state_dim=len(components))
        trees = list(f.trees)
        return cls(
            f=f,
            mu=mu or bound_abs(trees, ranges, samples, inflation),
            ell1=ell1 or lipschitz_estimate(trees, "x", ranges, samples, inflation),
            ell2=ell2 or lipschitz_estimate(trees, "y", ranges, samples, inflation),
        )


class ForcingTerm(BaseModel):
    """Bounded forcing g(t) with a certified sup."""
    model_config = ConfigDict(frozen=True)

    g: VectorField
    g_sup: CertifiedBound

    @model_validator(mode="after")
    def _time_only(self) -> "ForcingTerm":
        if self.g.depends_on_state:
            raise DomainError("forcing terms may depend on t only")
        return self

    @property
    def dim(self) -> int:
        return self.g.dim

    @property
    def is_zero(self) -> bool:
        return self.g.is_zero

    @classmethod
    def certify(cls, components: Sequence[str], t_range: tuple[float, float], samples: int,
                inflation: float, g_sup: Optional[CertifiedBound] = None) -> "ForcingTerm":
        g = VectorField(components=tuple(components), state_dim=0)
        if g_sup is None:
            if g._constant is not None:
                g_sup = CertifiedBound.analytic(float(np.linalg.norm(g._constant)))
            else:
                g_sup = bound_abs(list(g.trees), {"t": t_range}, samples, inflation)
        return cls(g=g, g_sup=g_sup)
