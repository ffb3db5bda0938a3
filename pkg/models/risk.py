"""Descriptors of risk functionals, spatial risk measures and location measures."""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

RiskKind = Literal["max", "min", "mean", "median", "quantile"]
LocationKind = Literal["peak", "exceedance_centroid", "weighted_centroid", "componentwise_median"]


class RiskFunctional(BaseModel):
    """
    Continuous, positively 1-homogeneous map from a spatial field to a scalar.

    ``median`` is the quantile functional at ``p = 0.5``; ``p`` is set iff
    ``kind == "quantile"``.
    """

    model_config = ConfigDict(frozen=True)

    kind: RiskKind
    p: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_level(self):
        if (self.kind == "quantile") != (self.p is not None):
            raise ValueError("p must be set iff kind == 'quantile'")
        return self

    @property
    def level(self) -> Optional[float]:
        """Order-statistic level for the quantile family (median included)."""
        if self.kind == "median":
            return 0.5
        return self.p

    @property
    def is_order_based(self) -> bool:
        return self.kind != "mean"

    @property
    def name(self) -> str:
        return f"quantile:{self.p:g}" if self.kind == "quantile" else self.kind

    @classmethod
    def parse(cls, text: str) -> "RiskFunctional":
        """Parse ``max``, ``min``, ``mean``, ``median`` or ``quantile:<p>``."""
        text = text.strip().lower()
        if text.startswith("quantile"):
            _, _, level = text.partition(":")
            if not level:
                raise ValueError("quantile risk functional needs a level, e.g. quantile:0.9")
            return cls(kind="quantile", p=float(level))
        return cls(kind=text)


class SpatialRiskMeasure(BaseModel):
    """
    Normalized exposure-weighted size of the pointwise exceedance region.

    ``exposure=None`` means E = 1 at every site (affected-area fraction).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    exposure: Optional[np.ndarray] = None

    @field_validator("exposure", mode="before")
    @classmethod
    def validate_exposure(cls, v):
        if v is None:
            return None
        arr = np.array(v, dtype=np.float64).ravel()
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise ValueError("exposure weights must be finite and nonnegative")
        if not (arr > 0).any():
            raise ValueError("at least one exposure weight must be positive")
        arr.setflags(write=False)
        return arr

    def weights(self, site_count: int) -> np.ndarray:
        if self.exposure is None:
            return np.ones(site_count)
        if self.exposure.size != site_count:
            raise ValueError(
                f"exposure has {self.exposure.size} weights for {site_count} sites"
            )
        return self.exposure

    @property
    def max_exposure(self) -> float:
        return 1.0 if self.exposure is None else float(self.exposure.max())


class LocationMeasure(BaseModel):
    """Summary position of the exceedance region."""

    model_config = ConfigDict(frozen=True)

    kind: LocationKind = "exceedance_centroid"

    @property
    def is_transform_invariant(self) -> bool:
        """Whether increasing marginal transforms leave the location unchanged."""
        return self.kind != "weighted_centroid"
