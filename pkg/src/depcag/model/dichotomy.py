"""
Filename: dichotomy.py
Description:
    Exponential dichotomy data: the continuous-time dichotomy (P, K, alpha)
    and the discrete dichotomy (P_hat, K_hat, r) of the one-step reduction.

License: Apache 2.0
"""
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

_IDEMPOTENCE_TOL = 1e-10


class DichotomySource(str, Enum):
    USER_SUPPLIED = "user_supplied"
    DISCRETE_SPECTRAL = "discrete_spectral"


def _check_projection(p: list[list[float]]) -> list[list[float]]:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"projection must be a square matrix, got shape {arr.shape}")
    defect = float(np.linalg.norm(arr @ arr - arr, ord=2))
    if defect > _IDEMPOTENCE_TOL:
        raise ValueError(f"matrix is not a projection: ||P^2 - P|| = {defect:.3e}")
    return arr.tolist()


class DichotomySpec(BaseModel):
    """||Z_p(t,s)|| <= K exp(-alpha |t-s|) with projection P at time 0.

    `K_auto` marks a K still to be certified from sampled ratios.
    """
    model_config = ConfigDict(frozen=True)

    P: list[list[float]]
    K: float = Field(default=1.0, ge=1.0)
    alpha: float = Field(gt=0)
    K_auto: bool = False
    source: DichotomySource = DichotomySource.USER_SUPPLIED

    @field_validator("P")
    @classmethod
    def _validate_P(cls, v: list[list[float]]) -> list[list[float]]:
        return _check_projection(v)

    @property
    def P_matrix(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)


class DiscreteDichotomy(BaseModel):
    """|Y_n P_hat Y_m^-1| <= K_hat r^(n-m) for n >= m and the mirrored bound for m > n."""
    model_config = ConfigDict(frozen=True)

    P_hat: list[list[float]]
    K_hat: float = Field(ge=1.0)
    r: float = Field(gt=0, lt=1)

    @field_validator("P_hat")
    @classmethod
    def _validate_P_hat(cls, v: list[list[float]]) -> list[list[float]]:
        return _check_projection(v)

    @property
    def P_matrix(self) -> np.ndarray:
        return np.asarray(self.P_hat, dtype=float)


class GreenKernel(str, Enum):
    """Which Green kernel to evaluate.

    CONSISTENT is the kernel whose integral is the bounded solution; it is
    continuous across t_{j+1}. AS_PRINTED follows the printed branch table,
    which drops the r = j term on the zeta side of t.
    """
    CONSISTENT = "consistent"
    AS_PRINTED = "as_printed"
