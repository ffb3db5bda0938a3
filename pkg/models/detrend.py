"""Regression settings and fitted coefficients of the detrending step."""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class RegressionConfig(BaseModel):
    """
    Per-site regression on intercept, linear trend and K cyclic cubic splines,
    pooled over neighbours within ``pooling_radius`` km.
    """

    model_config = ConfigDict(frozen=True)

    n_seasonal_basis: int = Field(default=12, ge=3)
    period: float = Field(default=365.25, gt=0.0)
    pooling_radius: float = Field(default=30.0, ge=0.0, description="km; 0 = no pooling")
    pooling_kernel: Literal["equal", "gaussian"] = "equal"


class SiteCoefficients(BaseModel):
    """
    Coefficients in original time units, one row per site:
    column 0 intercept, column 1 trend slope, columns 2.. seasonal.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: np.ndarray
    n_times: int = Field(..., ge=1)
    config: RegressionConfig

    @field_validator("coefficients", mode="before")
    @classmethod
    def validate_coefficients(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("coefficients must be (site_count, K + 2)")
        if not np.isfinite(arr).all():
            raise ValueError("coefficients must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_width(self):
        if self.coefficients.shape[1] != self.config.n_seasonal_basis + 2:
            raise ValueError("coefficient width does not match the seasonal basis size")
        return self

    @property
    def site_count(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def intercept(self) -> np.ndarray:
        return self.coefficients[:, 0]

    @property
    def trend(self) -> np.ndarray:
        return self.coefficients[:, 1]

    @property
    def seasonal(self) -> np.ndarray:
        return self.coefficients[:, 2:]
