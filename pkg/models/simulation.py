"""Brown-Resnick model, simulator and tail-oracle configuration."""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.field import SpatialGrid


class VariogramSpec(BaseModel):
    """
    Separable space-time variogram

        gamma(h, t) = ||(a1 h1, a2 h2)|| ** theta_s + |t| ** theta_t
    """

    model_config = ConfigDict(frozen=True)

    a1: float = Field(default=2.6, gt=0.0)
    a2: float = Field(default=2.4, gt=0.0)
    theta_s: float = Field(default=1.9, gt=0.0, le=2.0)
    theta_t: float = Field(default=1.1, gt=0.0, le=2.0)


class SimConfig(BaseModel):
    """Approximate extremal-functions simulation settings."""

    model_config = ConfigDict(frozen=True)

    grid: SpatialGrid
    n_times: int = Field(..., ge=1)
    subgrid_stride: int = Field(default=2, ge=1, description="1 = exact at every site")
    temporal_truncation: int = Field(default=18, ge=1, description="T_max")
    rng_seed: int = Field(default=0, ge=0)


class OracleConfig(BaseModel):
    """Monte Carlo settings of the tail oracle (tail index fixed to 1)."""

    model_config = ConfigDict(frozen=True)

    variogram: VariogramSpec = Field(default_factory=VariogramSpec)
    grid: SpatialGrid
    window: int = Field(default=3, ge=1, le=16, description="largest l; draws span times -1..l")
    anchor_site: Optional[int] = Field(default=None, ge=0)
    draws: int = Field(default=1_000_000, ge=10_000)
    quadrature_points: int = Field(default=200, ge=50)
    rng_seed: int = Field(default=0, ge=0)

    @property
    def anchor(self) -> int:
        """Anchor site; defaults to the site nearest the grid centroid."""
        if self.anchor_site is None:
            return self.grid.nearest_site(self.grid.centroid)
        if self.anchor_site >= self.grid.site_count:
            raise ValueError(f"anchor site {self.anchor_site} outside the grid")
        return self.anchor_site

    @property
    def times(self) -> np.ndarray:
        return np.arange(-1, self.window + 1)


class SpectralDraw(BaseModel):
    """
    One realization of the anchored spectral process on S x {-1, ..., l}.

    Row ``t + 1`` of ``values`` holds time ``t``; the anchor is (anchor_site, 0).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    anchor_site: int = Field(..., ge=0)

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("spectral draw must be a (times, sites) matrix over -1..l")
        if not (np.isfinite(arr).all() and (arr > 0).all()):
            raise ValueError("spectral values must be positive and finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_anchor(self):
        if self.anchor_site >= self.values.shape[1]:
            raise ValueError("anchor site outside the draw")
        if self.values[1, self.anchor_site] != 1.0:
            raise ValueError("anchor value must be exactly 1")
        return self

    def at(self, t: int) -> np.ndarray:
        return self.values[t + 1]


class OracleEstimate(BaseModel):
    """One oracle probability with its Monte Carlo standard error."""

    family: str
    label: str
    value: float = Field(..., description="raw value clamped to [0, 1]")
    raw: float
    se: float = Field(..., ge=0.0)
    ci_lo: float
    ci_hi: float
    draws: int = Field(..., ge=1)
