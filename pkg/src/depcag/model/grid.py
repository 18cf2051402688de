"""
Filename: grid.py
Description:
    Breakpoint grids {t_i}, {zeta_i} of a DEPCAG, the piecewise constant
    argument gamma(t) = zeta_{i(t)}, and checks of conditions (B1)-(B4).

    Two kinds of grid exist. A family grid is defined on all of Z by an affine
    formula t_k = period*k + t_shift, zeta_k = t_k + z_shift. A window grid stores
    a finite slice of both sequences; queries outside the slice are errors.

License: Apache 2.0
"""
from abc import ABC, abstractmethod
from enum import Enum
from typing import Annotated, Iterator, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..engine.error import GridConstraintError, OutsideWindowError

# Relative slack used when comparing a time with a breakpoint computed by formula.
_TIE_EPS = 1e-12


class GridFamily(str, Enum):
    """Builtin gamma families on Z."""
    FLOOR = "floor"
    FLOOR_MINUS_J = "floor_minus_j"
    FLOOR_PLUS_J = "floor_plus_j"
    FLOOR_HALF = "floor_half"
    EVEN_ROUND = "even_round"
    ALPHA_H = "alpha_h"
    M_J = "m_j"


class IntervalKind(str, Enum):
    """Position of zeta_k inside [t_k, t_{k+1}]."""
    DELAYED = "completely_delayed"
    ADVANCED = "completely_advanced"
    MIXED = "advanced_delayed"


class Grid(BaseModel, ABC):
    """Common interface of breakpoint grids.

    Interval membership is half-open: t belongs to I_i = [t_i, t_{i+1}), so a tie
    at t_{i+1} belongs to the next interval.
    """
    model_config = ConfigDict(frozen=True)

    theta: float = Field(gt=0, description="uniform bound on interval lengths (B4)")

    @abstractmethod
    def t(self, k):
        """Breakpoint t_k (vectorized over integer arrays)."""

    @abstractmethod
    def zeta(self, k):
        """Frozen argument zeta_k (vectorized over integer arrays)."""

    @abstractmethod
    def interval_index(self, t):
        """Unique i with t in [t_i, t_{i+1}) (vectorized)."""

    @abstractmethod
    def index_range(self) -> Optional[tuple[int, int]]:
        """Inclusive range of represented interval indices, None when unbounded."""

    def gamma(self, t):
        """gamma(t) = zeta_{i(t)}."""
        return self.zeta(self.interval_index(t))

    def count_breakpoints(self, tau: float, t: float) -> int:
        """Cardinality of {i : tau < t_i < t}.

        :param tau: left end, tau <= t
        :param t: right end
        """
        if tau > t:
            raise GridConstraintError(f"count_breakpoints needs tau <= t, got ({tau}, {t})")
        first = int(self.interval_index(tau)) + 1
        j = int(self.interval_index(t))
        last = j - 1 if float(self.t(j)) >= t else j
        return max(0, last - first + 1)

    def interval(self, k: int) -> tuple[float, float, float]:
        """(t_k, zeta_k, t_{k+1}) for one interval."""
        self.require_indices(k, k)
        return float(self.t(k)), float(self.zeta(k)), float(self.t(k + 1))

    def intervals(self, lo: int, hi: int) -> Iterator[tuple[int, float, float, float]]:
        """Yields (k, t_k, zeta_k, t_{k+1}) for lo <= k <= hi."""
        self.require_indices(lo, hi)
        for k in range(lo, hi + 1):
            yield (k, float(self.t(k)), float(self.zeta(k)), float(self.t(k + 1)))

    def covering_indices(self, t_lo: float, t_hi: float) -> tuple[int, int]:
        """Smallest index window whose intervals cover [t_lo, t_hi]."""
        return int(self.interval_index(t_lo)), int(self.interval_index(t_hi))

    def require_indices(self, lo: int, hi: int) -> None:
        rng = self.index_range()
        if rng is None:
            return
        if lo < rng[0] or hi > rng[1]:
            raise OutsideWindowError("interval index range", (lo, hi), rng[0], rng[1])

    def classify(self, k: int) -> IntervalKind:
        t_k, z_k, t_next = self.interval(k)
        if z_k == t_k:
            return IntervalKind.DELAYED
        if z_k == t_next:
            return IntervalKind.ADVANCED
        return IntervalKind.MIXED

    def verify_conditions(self, lo: int, hi: int) -> dict[str, bool]:
        """Verdicts of (B1)-(B4) on the index window [lo, hi].

        (B2) (no accumulation, t_i -> +-inf) can only be checked as strict growth
        with gaps bounded away from zero inside a finite window.
        """
        ks = np.arange(lo, hi + 1)
        self.require_indices(lo, hi)
        t_k = np.asarray(self.t(ks), dtype=float)
        t_next = np.asarray(self.t(ks + 1), dtype=float)
        z_k = np.asarray(self.zeta(ks), dtype=float)
        gaps = t_next - t_k
        b1 = bool(np.all(t_k < t_next) and np.all(t_k <= z_k) and np.all(z_k <= t_next))
        b2 = bool(np.all(gaps > 0))
        points = np.concatenate([t_k, (t_k + t_next) / 2])
        owner = np.concatenate([ks, ks])
        b3 = bool(
            np.all(self.interval_index(points) == owner)
            and np.all(self.gamma(points) == np.concatenate([z_k, z_k]))
        )
        b4 = bool(np.all(gaps <= self.theta * (1 + _TIE_EPS)))
        return {"B1": b1, "B2": b2, "B3": b3, "B4": b4}


class FamilyGrid(Grid):
    """Grid on all of Z given by t_k = period*k + t_shift, zeta_k = t_k + z_shift."""
    kind: Literal["family"] = "family"
    family: GridFamily
    params: tuple[float, ...] = ()
    period: float = Field(gt=0)
    t_shift: float = 0.0
    z_shift: float = 0.0

    @model_validator(mode="after")
    def _check_b1(self) -> "FamilyGrid":
        if not (0.0 <= self.z_shift <= self.period):
            raise GridConstraintError(
                f"(B1) requires t_k <= zeta_k <= t_(k+1); family {self.family.value} "
                f"with params {list(self.params)} puts zeta_k at offset {self.z_shift} "
                f"in an interval of length {self.period}"
            )
        if self.period > self.theta * (1 + _TIE_EPS):
            raise GridConstraintError(f"(B4) period {self.period} exceeds theta {self.theta}")
        return self

    def t(self, k):
        return self.period * np.asarray(k) + self.t_shift if np.ndim(k) else self.period * k + self.t_shift

    def zeta(self, k):
        return self.t(k) + self.z_shift

    def interval_index(self, t):
        arr = np.asarray(t, dtype=float)
        k = np.floor((arr - self.t_shift) / self.period).astype(np.int64)
        # floor of a rounded quotient can be off by one next to a breakpoint
        k = np.where(self.period * k + self.t_shift > arr, k - 1, k)
        k = np.where(self.period * (k + 1) + self.t_shift <= arr, k + 1, k)
        return int(k) if np.ndim(t) == 0 else k

    def index_range(self) -> Optional[tuple[int, int]]:
        return None


class WindowGrid(Grid):
    """Finite slice of the sequences; interval k spans [t[k-first], t[k-first+1])."""
    kind: Literal["explicit"] = "explicit"
    t_list: tuple[float, ...]
    zeta_list: tuple[float, ...]
    first_index: int = 0

    @model_validator(mode="after")
    def _check_window(self) -> "WindowGrid":
        if len(self.t_list) != len(self.zeta_list) + 1:
            raise GridConstraintError(
                f"explicit window needs len(t) = len(zeta) + 1, got {len(self.t_list)} and {len(self.zeta_list)}"
            )
        if len(self.zeta_list) == 0:
            raise GridConstraintError("explicit window needs at least one interval")
        t_arr = np.asarray(self.t_list)
        z_arr = np.asarray(self.zeta_list)
        if not np.all(np.diff(t_arr) > 0):
            raise GridConstraintError("(B1) requires strictly increasing t_i")
        if not (np.all(t_arr[:-1] <= z_arr) and np.all(z_arr <= t_arr[1:])):
            bad = int(np.argmax(~((t_arr[:-1] <= z_arr) & (z_arr <= t_arr[1:]))))
            raise GridConstraintError(
                f"(B1) requires t_i <= zeta_i <= t_(i+1); fails at index {bad + self.first_index}"
            )
        if np.max(np.diff(t_arr)) > self.theta * (1 + _TIE_EPS):
            raise GridConstraintError(f"(B4) an interval is longer than theta = {self.theta}")
        return self

    @property
    def last_index(self) -> int:
        return self.first_index + len(self.zeta_list) - 1

    def _offsets(self, k, upper: int):
        arr = np.asarray(k)
        if np.any(arr < self.first_index) or np.any(arr > upper):
            raise OutsideWindowError("index", k, self.first_index, upper)
        return arr - self.first_index

    def t(self, k):
        off = self._offsets(k, self.last_index + 1)
        out = np.asarray(self.t_list)[off]
        return float(out) if np.ndim(k) == 0 else out

    def zeta(self, k):
        off = self._offsets(k, self.last_index)
        out = np.asarray(self.zeta_list)[off]
        return float(out) if np.ndim(k) == 0 else out

    def interval_index(self, t):
        arr = np.asarray(t, dtype=float)
        lo, hi = self.t_list[0], self.t_list[-1]
        if np.any(arr < lo) or np.any(arr >= hi):
            raise OutsideWindowError("time", t, lo, hi)
        k = np.searchsorted(np.asarray(self.t_list), arr, side="right") - 1 + self.first_index
        return int(k) if np.ndim(t) == 0 else k.astype(np.int64)

    def index_range(self) -> Optional[tuple[int, int]]:
        return (self.first_index, self.last_index)


AnyGrid = Annotated[Union[FamilyGrid, WindowGrid], Field(discriminator="kind")]


def _integer_param(name: str, value: float) -> int:
    if float(value) != int(value) or value < 0:
        raise GridConstraintError(f"{name} must be a non-negative integer, got {value}")
    return int(value)


def builtin_family(name: str, params: Optional[list[float]] = None) -> FamilyGrid:
    """
    Grid of one of the builtin gamma families.

    :param name: family name, see GridFamily
    :param params: family parameters ([j] for floor_minus_j/floor_plus_j,
        [alpha, h] for alpha_h, [m, j] for m_j)
    :return: FamilyGrid with theta equal to the family's interval length
    """
    params = list(params or [])
    try:
        family = GridFamily(name)
    except ValueError:
        raise GridConstraintError(
            f"unknown family '{name}'; expected one of {[f.value for f in GridFamily]}"
        ) from None

    def expect(count: int) -> None:
        if len(params) != count:
            raise GridConstraintError(f"family {name} takes {count} parameter(s), got {len(params)}")

    match family:
        case GridFamily.FLOOR:
            expect(0)
            period, t_shift, z_shift = 1.0, 0.0, 0.0
        case GridFamily.FLOOR_MINUS_J:
            expect(1)
            j = _integer_param("j", params[0])
            if j != 0:
                raise GridConstraintError(
                    f"(B1) fails for floor_minus_j with j={j}: zeta_k = k - j < t_k = k"
                )
            period, t_shift, z_shift = 1.0, 0.0, -float(j)
        case GridFamily.FLOOR_PLUS_J:
            expect(1)
            j = _integer_param("j", params[0])
            if j > 1:
                raise GridConstraintError(
                    f"(B1) fails for floor_plus_j with j={j}: zeta_k = k + j > t_(k+1) = k + 1"
                )
            period, t_shift, z_shift = 1.0, 0.0, float(j)
        case GridFamily.FLOOR_HALF:
            expect(0)
            period, t_shift, z_shift = 1.0, 0.0, 0.5
        case GridFamily.EVEN_ROUND:
            expect(0)
            period, t_shift, z_shift = 2.0, 0.0, 1.0
        case GridFamily.ALPHA_H:
            expect(2)
            alpha, h = float(params[0]), float(params[1])
            if alpha <= 0 or h <= 0:
                raise GridConstraintError(f"alpha_h needs alpha > 0 and h > 0, got {alpha}, {h}")
            period, t_shift, z_shift = alpha * h, 0.0, 0.0
        case GridFamily.M_J:
            expect(2)
            m, j = float(params[0]), float(params[1])
            if not m > j > 0:
                raise GridConstraintError(f"m_j needs m > j > 0, got m={m}, j={j}")
            period, t_shift, z_shift = m, -j, j
        case _:
            raise GridConstraintError(f"unknown family '{name}'")

    return FamilyGrid(
        family=family,
        params=tuple(float(p) for p in params),
        period=period,
        t_shift=t_shift,
        z_shift=z_shift,
        theta=period,
    )


def explicit_window(t: list[float], zeta: list[float], first_index: int = 0,
                    theta: Optional[float] = None) -> WindowGrid:
    """Window grid; theta defaults to the longest interval of the slice."""
    if len(t) < 2:
        raise GridConstraintError("explicit window needs at least two breakpoints")
    gap = float(np.max(np.diff(np.asarray(t, dtype=float))))
    return WindowGrid(
        t_list=tuple(float(v) for v in t),
        zeta_list=tuple(float(v) for v in zeta),
        first_index=first_index,
        theta=theta if theta is not None else max(gap, np.finfo(float).tiny),
    )
