"""Core data model: spatial grids, field time series, thresholds and ordinal patterns."""

from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CoordSystem = Literal["lonlat", "planar_km"]


def _readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.setflags(write=False)
    return view


class SpatialGrid(BaseModel):
    """
    Finite set of grid sites discretizing the compact spatial domain.

    Coordinates are planar kilometres or lon/lat degrees, declared by
    ``coord_system``. For lon/lat grids ``x`` is the longitude.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    site_coords: np.ndarray = Field(..., description="(site_count, 2) array of (x, y)")
    coord_system: CoordSystem = Field(default="planar_km")

    @field_validator("site_coords", mode="before")
    @classmethod
    def validate_coords(cls, v):
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"site_coords must have shape (n, 2), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("grid needs at least one site")
        if not np.isfinite(arr).all():
            raise ValueError("site coordinates must be finite")
        if np.unique(arr, axis=0).shape[0] != arr.shape[0]:
            raise ValueError("two sites share identical coordinates")
        return _readonly(arr)

    @property
    def site_count(self) -> int:
        return int(self.site_coords.shape[0])

    @property
    def centroid(self) -> np.ndarray:
        return self.site_coords.mean(axis=0)

    def nearest_site(self, point) -> int:
        """Index of the site closest (Euclidean in coordinate units) to ``point``."""
        d2 = ((self.site_coords - np.asarray(point, dtype=np.float64)) ** 2).sum(axis=1)
        return int(np.argmin(d2))


class FieldSeries(BaseModel):
    """
    Dense time-major matrix of a spatial field observed at fixed grid sites.

    Entry ``values[t, s]`` is the field at time ``t`` and site ``s``. Values are
    kept in their stored precision (float32 from binary files); reductions run
    in float64.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: SpatialGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v):
        arr = np.asarray(v)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if arr.ndim != 2:
            raise ValueError(f"values must be a (n_times, site_count) matrix, got ndim={arr.ndim}")
        if arr.shape[0] < 1:
            raise ValueError("n_times must be positive")
        if not np.isfinite(arr).all():
            raise ValueError("field values must be finite (missing values are rejected)")
        return _readonly(arr)

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.values.shape[1] != self.grid.site_count:
            raise ValueError(
                f"values have {self.values.shape[1]} columns but grid has "
                f"{self.grid.site_count} sites"
            )
        return self

    @property
    def n_times(self) -> int:
        return int(self.values.shape[0])

    @property
    def site_count(self) -> int:
        return self.grid.site_count

    def at(self, t: int) -> np.ndarray:
        """Field at time ``t`` as a float64 vector over sites."""
        return np.asarray(self.values[t], dtype=np.float64)


class ThresholdSpec(BaseModel):
    """
    Threshold given either as a quantile level or as an absolute value.

    ``basis`` selects what a quantile level resolves against: the risk series
    (simulation-study convention) or all pooled field values (data-application
    convention).
    """

    model_config = ConfigDict(frozen=True)

    quantile_level: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    value: Optional[float] = Field(default=None, allow_inf_nan=False)
    basis: Literal["risk_series", "pooled_field"] = Field(default="risk_series")

    @model_validator(mode="after")
    def exactly_one(self):
        if (self.quantile_level is None) == (self.value is None):
            raise ValueError("exactly one of quantile_level or value must be set")
        return self

    @classmethod
    def quantile(cls, q: float, basis: str = "risk_series") -> "ThresholdSpec":
        return cls(quantile_level=q, basis=basis)

    @classmethod
    def absolute(cls, u: float) -> "ThresholdSpec":
        return cls(value=u)


class OrdinalPattern(BaseModel):
    """Rank vector of a tie-free vector, or the tie marker."""

    model_config = ConfigDict(frozen=True)

    ranks: Tuple[int, ...] = ()
    tie_flag: bool = False

    @model_validator(mode="after")
    def check_ranks(self):
        if self.tie_flag:
            if self.ranks:
                raise ValueError("tie patterns carry no ranks")
        elif sorted(self.ranks) != list(range(1, len(self.ranks) + 1)) or len(self.ranks) < 2:
            raise ValueError(f"ranks {self.ranks} are not a permutation of 1..l (l >= 2)")
        return self

    @property
    def length(self) -> int:
        return len(self.ranks)

    @property
    def label(self) -> str:
        if self.tie_flag:
            return TIES_LABEL
        return format_pattern(self.ranks)


TIES_LABEL = "ties"


def format_pattern(ranks) -> str:
    return "(" + ",".join(str(int(r)) for r in ranks) + ")"
