"""Cluster and distribution models produced by the ratio estimators."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ClusterIndex(BaseModel):
    """Maximal run of exceedances flanked by in-range non-exceedances."""

    model_config = ConfigDict(frozen=True)

    start: int = Field(..., ge=1)
    length: int = Field(..., ge=1)

    @property
    def stop(self) -> int:
        """Index of the right delimiter (first non-exceedance after the run)."""
        return self.start + self.length


@dataclass(frozen=True)
class LabeledWindows:
    """
    Counted windows of one estimator family.

    Window ``k`` spans time indices ``first[k]..last[k]`` (inclusive, delimiters
    included) and falls in bucket ``label_index[k]`` of ``labels``. Every window
    contributes once to the denominator.
    """

    family: str
    labels: Tuple[str, ...]
    first: np.ndarray
    last: np.ndarray
    label_index: np.ndarray
    n_times: int
    span: int
    diagnostics: Dict[str, int] = field(default_factory=dict)

    @property
    def n_windows(self) -> int:
        return int(self.first.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.label_index, minlength=len(self.labels)).astype(np.int64)


class PatternDistribution(BaseModel):
    """Estimated probabilities over cluster sizes or ordinal patterns."""

    family: str
    labels: List[str]
    counts: List[int]
    probs: List[float]
    denominator_count: int = Field(..., ge=1)
    ci_lo: Optional[List[float]] = None
    ci_hi: Optional[List[float]] = None
    n_degenerate: Optional[int] = None
    diagnostics: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_normalization(self):
        n = len(self.labels)
        if len(self.counts) != n or len(self.probs) != n:
            raise ValueError("labels, counts and probs must have equal length")
        if sum(self.counts) != self.denominator_count:
            raise ValueError("bucket counts must add up to the denominator")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to one")
        for bounds in (self.ci_lo, self.ci_hi):
            if bounds is not None and len(bounds) != n:
                raise ValueError("interval bounds must match the labels")
        return self

    def prob(self, label: str) -> float:
        return self.probs[self.labels.index(label)]

    def count(self, label: str) -> int:
        return self.counts[self.labels.index(label)]

    def interval(self, label: str) -> Tuple[float, float]:
        if self.ci_lo is None or self.ci_hi is None:
            raise ValueError("bootstrap intervals have not been attached")
        i = self.labels.index(label)
        return self.ci_lo[i], self.ci_hi[i]
