"""
Filename: bounds.py
Description:
    Certified upper bounds of sup-norm constants (M, M0, mu, l1, l2 and
    forcing sups) together with how they were obtained.

License: Apache 2.0
"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class BoundMethod(str, Enum):
    ANALYTIC = "analytic"
    GRID_SAMPLE = "grid_sample"


class CertifiedBound(BaseModel):
    """An upper estimate with its derivation.

    For GRID_SAMPLE bounds `value` is the sampled maximum times `inflation`.
    """
    model_config = ConfigDict(frozen=True)

    value: float = Field(ge=0)
    method: BoundMethod
    samples: Optional[int] = None
    inflation: Optional[float] = None

    @model_validator(mode="after")
    def _check_method_fields(self) -> "CertifiedBound":
        if self.method == BoundMethod.GRID_SAMPLE:
            if self.samples is None or self.inflation is None:
                raise ValueError("grid-sampled bound needs samples and inflation")
            if self.inflation < 1.0:
                raise ValueError(f"inflation must be >= 1, got {self.inflation}")
        return self

    @classmethod
    def analytic(cls, value: float) -> "CertifiedBound":
        return cls(value=float(value), method=BoundMethod.ANALYTIC)

    @classmethod
    def sampled(cls, sampled_max: float, samples: int, inflation: float) -> "CertifiedBound":
        return cls(
            value=float(sampled_max) * inflation,
            method=BoundMethod.GRID_SAMPLE,
            samples=samples,
            inflation=inflation,
        )
