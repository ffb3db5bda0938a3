"""Multiplier block bootstrap configuration and per-block counts."""

from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class BootstrapConfig(BaseModel):
    """Settings of the multiplier block bootstrap."""

    model_config = ConfigDict(frozen=True)

    block_length: int = Field(default=1000, ge=1, description="time points per block")
    replicates: int = Field(default=1000, ge=100)
    multiplier_law: Literal["gaussian", "rademacher"] = "gaussian"
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)
    rng_seed: int = Field(default=0, ge=0)


class BlockCounts(BaseModel):
    """Numerator counts per block and label, and denominator count per block."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: Tuple[str, ...]
    numerators: np.ndarray = Field(..., description="(n_blocks, n_labels) int array")
    denominators: np.ndarray = Field(..., description="(n_blocks,) int array")
    block_length: int

    @field_validator("numerators", "denominators", mode="before")
    @classmethod
    def as_int(cls, v):
        arr = np.array(v, dtype=np.int64)
        if (arr < 0).any():
            raise ValueError("block counts must be nonnegative")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_shapes(self):
        if self.numerators.ndim != 2 or self.numerators.shape[1] != len(self.labels):
            raise ValueError("numerators must be (n_blocks, n_labels)")
        if self.denominators.shape != (self.numerators.shape[0],):
            raise ValueError("denominators must have one entry per block")
        return self

    @property
    def n_blocks(self) -> int:
        return int(self.denominators.size)


class LabelInterval(BaseModel):
    label: str
    point: float
    ci_lo: float
    ci_hi: float


class BootstrapSummary(BaseModel):
    """Per-label bootstrap point estimates and percentile intervals."""

    intervals: List[LabelInterval]
    n_degenerate: int
    replicates: int
    n_blocks: int
    degenerate_fraction: Optional[float] = None
