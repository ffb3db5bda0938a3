"""
Seasonal-trend regression and anomaly computation.

Each site is regressed on [1, t, psi_1(t), ..., psi_K(t)] with psi the cyclic
cubic B-spline basis, pooling the rows of all sites within ``pooling_radius``.
The basis sums to one, so the seasonal coefficients are constrained to sum to
zero and the intercept carries the level.
"""

from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.spatial import cKDTree

from app_logging import get_logger
from errors import InvalidArgumentError, RankDeficientError
from helper.cli_io import atomic_path
from models.detrend import RegressionConfig, SiteCoefficients
from models.field import FieldSeries, SpatialGrid

logger = get_logger(__name__)

EARTH_RADIUS_KM = 6371.0

# Cardinal cubic B-spline on knots 0..4, peak 2/3 at 2
_CARDINAL = BSpline.basis_element(np.arange(5.0), extrapolate=False)


def cyclic_spline_basis(config: RegressionConfig, t) -> np.ndarray:
    """
    Periodic cubic B-spline basis with K equispaced knots on [0, period).

    Basis j peaks at t = j * period / K. Rows sum to one.

    Args:
        config: Regression settings (K and period)
        t: Time index or array of time indices

    Returns:
        (K,) vector for scalar ``t``, else (len(t), K) matrix
    """
    k = config.n_seasonal_basis
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    phase = np.mod(times, config.period) * (k / config.period)
    offset = phase[:, None] - np.arange(k)[None, :] + 2.0
    basis = np.zeros((times.size, k))
    # Images of the support [0, 4) wrapped around the period
    for m in range(-2, 3):
        basis += np.nan_to_num(_CARDINAL(offset + m * k), nan=0.0)
    return basis[0] if np.ndim(t) == 0 else basis


def _time_scaling(n_times: int) -> Tuple[float, float]:
    center = (n_times - 1) / 2.0
    return center, max(center, 1.0)


def design_matrix(config: RegressionConfig, n_times: int) -> np.ndarray:
    """
    Constrained design [1, t_scaled, psi_j - psi_K (j < K)] of shape (n, K + 1).

    ``t`` is scaled to [-1, 1]; the last seasonal coefficient is minus the sum
    of the others.
    """
    t = np.arange(n_times, dtype=np.float64)
    center, half = _time_scaling(n_times)
    psi = cyclic_spline_basis(config, t)
    seasonal = psi[:, :-1] - psi[:, -1:]
    return np.column_stack([np.ones(n_times), (t - center) / half, seasonal])


def _to_original_units(beta: np.ndarray, n_times: int) -> np.ndarray:
    """Map constrained coefficients (rows = sites) to [b0, b1, seasonal_1..K]."""
    center, half = _time_scaling(n_times)
    slope = beta[:, 1] / half
    intercept = beta[:, 0] - slope * center
    partial = beta[:, 2:]
    seasonal = np.column_stack([partial, -partial.sum(axis=1)])
    return np.column_stack([intercept, slope, seasonal])


def _sphere_points(coords: np.ndarray) -> np.ndarray:
    lon, lat = np.radians(coords[:, 0]), np.radians(coords[:, 1])
    return EARTH_RADIUS_KM * np.column_stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)]
    )


def neighborhoods(grid: SpatialGrid, radius_km: float) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Sites within ``radius_km`` of every site, with their distances in km.

    Planar grids use Euclidean distance; lon/lat grids use great-circle distance
    (a chord query of radius 2R sin(r / 2R) on the sphere of radius R).
    """
    if grid.coord_system == "lonlat":
        points = _sphere_points(grid.site_coords)
        query = 2.0 * EARTH_RADIUS_KM * np.sin(min(radius_km / (2.0 * EARTH_RADIUS_KM), np.pi / 2))
    else:
        points, query = grid.site_coords, radius_km
    tree = cKDTree(points)
    members = tree.query_ball_point(points, query)

    sites: List[np.ndarray] = []
    distances: List[np.ndarray] = []
    for s, idx in enumerate(members):
        idx = np.array(sorted(idx), dtype=np.int64)
        chord = np.linalg.norm(points[idx] - points[s], axis=1)
        if grid.coord_system == "lonlat":
            dist = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.clip(chord / (2.0 * EARTH_RADIUS_KM), 0.0, 1.0))
        else:
            dist = chord
        sites.append(idx)
        distances.append(dist)
    return sites, distances


def pooling_weights(grid: SpatialGrid, config: RegressionConfig) -> sparse.csr_matrix:
    """
    Row-normalized (sites x sites) pooling matrix.

    Equal weights over the neighborhood by default; the gaussian kernel uses
    exp(-d^2 / (2 sigma^2)) with sigma = radius / 2.
    """
    n = grid.site_count
    if config.pooling_radius == 0:
        return sparse.identity(n, format="csr")
    sites, distances = neighborhoods(grid, config.pooling_radius)
    rows = np.concatenate([np.full(idx.size, s) for s, idx in enumerate(sites)])
    cols = np.concatenate(sites)
    if config.pooling_kernel == "gaussian":
        sigma = config.pooling_radius / 2.0
        data = np.exp(-np.concatenate(distances) ** 2 / (2.0 * sigma ** 2))
    else:
        data = np.ones(cols.size)
    weights = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    totals = np.asarray(weights.sum(axis=1)).ravel()
    sizes = np.array([idx.size for idx in sites])
    logger.debug(
        "Pooling neighborhoods built",
        radius_km=config.pooling_radius,
        kernel=config.pooling_kernel,
        mean_size=float(sizes.mean()),
        max_size=int(sizes.max()),
    )
    return sparse.diags(1.0 / totals) @ weights


def _solve(design: np.ndarray, targets: np.ndarray, site: int) -> np.ndarray:
    beta, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficientError(site=site, rank=int(rank), n_columns=design.shape[1])
    return beta


def fit_site(
    values,
    design: np.ndarray,
    neighborhood,
    site: int,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Least squares on the stacked rows of the sites in ``neighborhood``.

    Stacking k copies of a shared design is the same regression as fitting the
    (weighted) mean of the neighbors' series, which is what is solved here.

    Args:
        values: (n_times, sites) observations
        design: (n_times, K + 1) constrained design from ``design_matrix``
        neighborhood: Site indices pooled for ``site``
        site: Target site, named in errors
        weights: Optional nonnegative per-neighbor weights

    Returns:
        Constrained coefficients (K + 1,)

    Raises:
        RankDeficientError: If the design does not have full column rank
    """
    data = np.asarray(values, dtype=np.float64)
    idx = np.asarray(neighborhood, dtype=np.int64)
    if idx.size == 0:
        raise InvalidArgumentError(f"empty pooling neighborhood for site {site}")
    w = np.ones(idx.size) if weights is None else np.asarray(weights, dtype=np.float64)
    target = data[:, idx] @ (w / w.sum())
    return _solve(design, target, site)


def fit_all_sites(series: FieldSeries, config: RegressionConfig) -> SiteCoefficients:
    """
    Fit every site with spatial pooling.

    Returns:
        Coefficients in original time units: intercept, slope per time step and
        K sum-to-zero seasonal coefficients

    Raises:
        RankDeficientError: If the shared design is rank deficient
    """
    n = series.n_times
    if n < config.n_seasonal_basis + 1:
        raise RankDeficientError(site=0, rank=n, n_columns=config.n_seasonal_basis + 1)
    design = design_matrix(config, n)
    pooled = np.asarray((pooling_weights(series.grid, config) @ np.asarray(series.values, dtype=np.float64).T).T)
    beta = _solve(design, pooled, site=0).T
    coefficients = _to_original_units(beta, n)
    logger.info(
        "Regression fitted",
        sites=series.site_count,
        n_times=n,
        n_seasonal_basis=config.n_seasonal_basis,
        pooling_radius=config.pooling_radius,
    )
    return SiteCoefficients(coefficients=coefficients, n_times=n, config=config)


def fitted_mean(coeffs: SiteCoefficients, n_times: Optional[int] = None) -> np.ndarray:
    """(n_times, sites) fitted mean b0 + b1 t + sum_j b_j psi_j(t)."""
    n = n_times or coeffs.n_times
    t = np.arange(n, dtype=np.float64)
    psi = cyclic_spline_basis(coeffs.config, t)
    return coeffs.intercept[None, :] + t[:, None] * coeffs.trend[None, :] + psi @ coeffs.seasonal.T


def seasonal_curve(coeffs: SiteCoefficients, t) -> np.ndarray:
    """Seasonal component sum_j b_j psi_j(t), shape (len(t), sites)."""
    psi = cyclic_spline_basis(coeffs.config, np.atleast_1d(t))
    return psi @ coeffs.seasonal.T


def anomalies(raw: FieldSeries, coeffs: SiteCoefficients) -> FieldSeries:
    """
    Observed minus fitted mean at every site and time (detrended, not rescaled).

    Raises:
        InvalidArgumentError: If the coefficients belong to another grid or horizon
    """
    if coeffs.site_count != raw.site_count or coeffs.n_times != raw.n_times:
        raise InvalidArgumentError("coefficients were fitted on a different grid or horizon")
    residual = np.asarray(raw.values, dtype=np.float64) - fitted_mean(coeffs)
    return FieldSeries(grid=raw.grid, values=residual)


def export_coefficients(coeffs: SiteCoefficients, path: Path) -> Path:
    """Write coefficients as CSV with columns site_id, beta_0, beta_1, ..."""
    columns = [f"beta_{j}" for j in range(coeffs.coefficients.shape[1])]
    frame = pd.DataFrame(coeffs.coefficients, columns=columns)
    frame.insert(0, "site_id", np.arange(coeffs.site_count))
    with atomic_path(Path(path)) as tmp:
        frame.to_csv(tmp, index=False, float_format="%.17g")
    logger.info("Coefficients exported", path=str(path), sites=coeffs.site_count)
    return Path(path)
