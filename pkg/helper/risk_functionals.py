"""
Risk functionals r, spatial risk measures m and location measures c.

Single-field operations take a vector over sites. The ``*_rows`` variants take
an (n_times, sites) matrix and reduce it chunk by chunk; chunking and thread
count never change the result.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from app_logging import get_logger
from config import settings
from errors import InvalidArgumentError
from helper.field_core import order_statistic_rank
from models.field import SpatialGrid
from models.risk import LocationMeasure, RiskFunctional, SpatialRiskMeasure

logger = get_logger(__name__)


def _as_field(field) -> np.ndarray:
    values = np.asarray(field, dtype=np.float64).ravel()
    if values.size == 0:
        raise InvalidArgumentError("empty field")
    if not np.isfinite(values).all():
        raise InvalidArgumentError("field values must be finite")
    return values


def _reduce_block(r: RiskFunctional, block: np.ndarray) -> np.ndarray:
    if r.kind == "max":
        return block.max(axis=1).astype(np.float64)
    if r.kind == "min":
        return block.min(axis=1).astype(np.float64)
    if r.kind == "mean":
        return block.mean(axis=1, dtype=np.float64)
    k = order_statistic_rank(r.level, block.shape[1])
    return np.partition(block, k - 1, axis=1)[:, k - 1].astype(np.float64)


def apply_risk(r: RiskFunctional, field) -> float:
    """
    Evaluate the risk functional on one spatial field.

    Quantiles (median included) are the ceil(p * N) order statistic over sites.
    """
    values = _as_field(field)
    return float(_reduce_block(r, values[None, :])[0])


def _chunked(
    n_rows: int,
    fn: Callable[[int, int], np.ndarray],
    chunk_size: Optional[int],
    threads: Optional[int],
) -> np.ndarray:
    chunk = chunk_size or settings.risk_chunk_size
    bounds = [(a, min(a + chunk, n_rows)) for a in range(0, n_rows, chunk)]
    workers = threads or settings.threads
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    else:
        parts = [fn(a, b) for a, b in bounds]
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def risk_rows(
    r: RiskFunctional,
    matrix: np.ndarray,
    chunk_size: Optional[int] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Risk functional of every row of an (n, sites) matrix, in float64."""
    m = np.asarray(matrix)
    return _chunked(m.shape[0], lambda a, b: _reduce_block(r, m[a:b]), chunk_size, threads)


def spatial_risk(m: SpatialRiskMeasure, field, u: float) -> float:
    """
    Normalized exposure-weighted size of ``{field > u}``:
    (1 / |S|) * sum_s E(s) * 1{field(s) > u}.
    """
    values = _as_field(field)
    weights = m.weights(values.size)
    return float(np.where(values > u, weights, 0.0).sum() / values.size)


def spatial_risk_rows(
    m: SpatialRiskMeasure,
    matrix: np.ndarray,
    u: float,
    times: Optional[Sequence[int]] = None,
    chunk_size: Optional[int] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Spatial risk of the rows ``times`` (all rows by default)."""
    data = np.asarray(matrix)
    rows = np.arange(data.shape[0]) if times is None else np.asarray(times, dtype=np.int64)
    n_sites = data.shape[1]
    weights = m.weights(n_sites)

    def block(a: int, b: int) -> np.ndarray:
        # Same float64 comparison as locate_block
        exceed = data[rows[a:b]].astype(np.float64, copy=False) > u
        if m.exposure is None:
            return exceed.sum(axis=1) / n_sites
        return np.where(exceed, weights[None, :], 0.0).sum(axis=1) / n_sites

    return _chunked(rows.size, block, chunk_size, threads)


def locate_block(c: LocationMeasure, block: np.ndarray, u, coords: np.ndarray) -> np.ndarray:
    """
    Locations of the rows of ``block``; ``u`` is a scalar or a per-row column.

    Undefined rows are NaN.
    """
    block = block.astype(np.float64, copy=False)
    exceed = block > u
    n_exceed = exceed.sum(axis=1)
    out = np.full((block.shape[0], 2), np.nan)
    defined = n_exceed > 0

    if c.kind == "peak":
        out[:] = coords[np.argmax(block, axis=1)]
    elif c.kind == "exceedance_centroid":
        with np.errstate(invalid="ignore", divide="ignore"):
            for j in range(2):
                out[:, j] = np.where(exceed, coords[None, :, j], 0.0).sum(axis=1) / n_exceed
    elif c.kind == "weighted_centroid":
        # Weights are the field clipped at zero (anomaly fields may be negative)
        w = np.clip(block, 0.0, None)
        total = w.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            for j in range(2):
                out[:, j] = (w * coords[None, :, j]).sum(axis=1) / total
        defined &= total > 0
    elif c.kind == "componentwise_median":
        # ceil(n / 2)-th order statistic of the exceeding coordinates
        k = np.maximum((n_exceed + 1) // 2, 1)
        for j in range(2):
            masked = np.where(exceed, coords[None, :, j], np.inf)
            ordered = np.sort(masked, axis=1)
            out[:, j] = np.take_along_axis(ordered, (k - 1)[:, None], axis=1)[:, 0]
    else:
        raise InvalidArgumentError(f"unknown location measure {c.kind}")

    out[~defined] = np.nan
    return out


def locate(c: LocationMeasure, field, u: float, grid: SpatialGrid) -> Optional[np.ndarray]:
    """
    Location of the exceedance region of ``field`` above ``u``.

    Returns:
        Coordinate pair, or None (UNDEFINED) when no site exceeds ``u`` or, for
        the weighted centroid, when the clipped weights vanish
    """
    values = _as_field(field)
    if values.size != grid.site_count:
        raise InvalidArgumentError("field length does not match the grid")
    point = locate_block(c, values[None, :], u, grid.site_coords)[0]
    if np.isnan(point).any():
        return None
    return point


def locate_rows(
    c: LocationMeasure,
    matrix: np.ndarray,
    u: float,
    grid: SpatialGrid,
    times: Optional[Sequence[int]] = None,
    chunk_size: Optional[int] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Locations of the rows ``times`` as an (m, 2) array; NaN rows are UNDEFINED."""
    data = np.asarray(matrix)
    rows = np.arange(data.shape[0]) if times is None else np.asarray(times, dtype=np.int64)
    coords = grid.site_coords
    flat = _chunked(
        rows.size,
        lambda a, b: locate_block(c, data[rows[a:b]], u, coords).ravel(),
        chunk_size,
        threads,
    )
    return flat.reshape(-1, 2)
