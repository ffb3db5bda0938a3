"""Ordinal patterns, order-statistic quantiles and threshold resolution."""

import itertools
import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from app_logging import get_logger
from errors import InvalidArgumentError
from models.field import (
    TIES_LABEL,
    CoordSystem,
    FieldSeries,
    OrdinalPattern,
    SpatialGrid,
    ThresholdSpec,
    format_pattern,
)

logger = get_logger(__name__)


def order_statistic_rank(q: float, n: int) -> int:
    """
    1-based rank k = ceil(q * n) of the q-quantile order statistic, clamped to 1..n.

    The product is rounded to 9 decimals first so that e.g. 0.07 * 100 gives
    rank 7 rather than 8.
    """
    k = math.ceil(round(q * n, 9))
    return min(max(k, 1), n)


def empirical_quantile(series, q: float) -> float:
    """
    Empirical q-quantile as the ceil(q * n)-th smallest value.

    Args:
        series: Real vector of length n >= 1
        q: Level in (0, 1)

    Returns:
        The order statistic, in the precision of the input

    Raises:
        InvalidArgumentError: If the series is empty or q is outside (0, 1)
    """
    values = np.asarray(series).ravel()
    if values.size == 0:
        raise InvalidArgumentError("empirical quantile of an empty series")
    if not 0.0 < q < 1.0:
        raise InvalidArgumentError(f"quantile level must lie in (0, 1), got {q}")
    k = order_statistic_rank(q, values.size)
    return float(np.partition(values, k - 1)[k - 1])


def ordinal_pattern(v) -> OrdinalPattern:
    """
    Rank vector of ``v``: the permutation pi with v_i < v_j iff pi(i) < pi(j).

    Exact equality of any two entries yields the tie pattern.
    """
    values = np.asarray(v, dtype=np.float64).ravel()
    if values.size < 2:
        raise InvalidArgumentError(f"ordinal pattern needs length >= 2, got {values.size}")
    if not np.isfinite(values).all():
        raise InvalidArgumentError("ordinal pattern of a non-finite vector")
    if np.unique(values).size < values.size:
        return OrdinalPattern(tie_flag=True)
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable") + 1
    return OrdinalPattern(ranks=tuple(int(r) for r in ranks))


@lru_cache(maxsize=None)
def pattern_labels(length: int) -> Tuple[str, ...]:
    """Labels of all length! permutations in lexicographic order, then the ties bucket."""
    perms = itertools.permutations(range(1, length + 1))
    return tuple(format_pattern(p) for p in perms) + (TIES_LABEL,)


def ordinal_patterns(windows) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-wise ordinal patterns of an (m, l) matrix.

    Returns:
        Tuple of (bucket index per row, tie mask). Bucket indices follow
        ``pattern_labels(l)``; rows with ties map to the last bucket.
    """
    w = np.asarray(windows)
    if w.ndim != 2 or w.shape[1] < 2:
        raise InvalidArgumentError("ordinal patterns need an (m, l >= 2) matrix")
    length = w.shape[1]
    ties = (np.diff(np.sort(w, axis=1), axis=1) == 0).any(axis=1)
    ranks = np.argsort(np.argsort(w, axis=1, kind="stable"), axis=1, kind="stable")

    # Lehmer code gives the lexicographic index of each permutation
    index = np.zeros(w.shape[0], dtype=np.int64)
    for i in range(length - 1):
        smaller_after = (ranks[:, i + 1:] < ranks[:, [i]]).sum(axis=1)
        index += smaller_after * math.factorial(length - 1 - i)
    index[ties] = math.factorial(length)
    return index, ties


def resolve_threshold(
    spec: ThresholdSpec,
    risk_values: np.ndarray,
    series: Optional[FieldSeries] = None,
) -> float:
    """
    Turn a ThresholdSpec into an absolute threshold u.

    Quantile levels resolve against the risk series by default; with
    ``basis == "pooled_field"`` they resolve against all field values.
    """
    if spec.value is not None:
        return float(spec.value)
    if spec.basis == "pooled_field":
        if series is None:
            raise InvalidArgumentError("pooled-field thresholds need the field series")
        u = empirical_quantile(series.values, spec.quantile_level)
    else:
        u = empirical_quantile(risk_values, spec.quantile_level)
    logger.info("Threshold resolved", basis=spec.basis, level=spec.quantile_level, threshold=u)
    return u


def regular_grid(
    nx: int,
    ny: int,
    spacing: float = 1.0,
    origin: Tuple[float, float] = (0.0, 0.0),
    coord_system: CoordSystem = "planar_km",
) -> SpatialGrid:
    """Rectangular grid with sites ordered row by row (x fastest)."""
    if nx < 1 or ny < 1:
        raise InvalidArgumentError("grid needs at least one site in each direction")
    xs = origin[0] + spacing * np.arange(nx)
    ys = origin[1] + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    return SpatialGrid(site_coords=coords, coord_system=coord_system)
