"""
Brown-Resnick space-time max-stable fields with unit Frechet margins.

Fields are simulated with the extremal functions algorithm, exact on the subgrid
of every ``subgrid_stride``-th site along each axis and truncated to a temporal window of
``temporal_truncation`` lags around each processed point.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.stats import norm
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from app_logging import get_logger
from config import settings
from errors import FactorizationError, InvalidArgumentError
from models.field import FieldSeries, SpatialGrid
from models.simulation import SimConfig, VariogramSpec

logger = get_logger(__name__)

JITTER_BASE = 1e-10
JITTER_ATTEMPTS = 5


def spatial_variogram(spec: VariogramSpec, h) -> np.ndarray:
    """||(a1 h1, a2 h2)|| ** theta_s for lags of shape (..., 2)."""
    lag = np.asarray(h, dtype=np.float64)
    return np.hypot(spec.a1 * lag[..., 0], spec.a2 * lag[..., 1]) ** spec.theta_s


def temporal_variogram(spec: VariogramSpec, t) -> np.ndarray:
    """|t| ** theta_t."""
    return np.abs(np.asarray(t, dtype=np.float64)) ** spec.theta_t


def variogram(spec: VariogramSpec, h, t):
    """
    Separable space-time variogram gamma(h, t).

    Args:
        spec: Variogram parameters
        h: Spatial lag(s), shape (2,) or (..., 2)
        t: Temporal lag(s), broadcastable against ``h[..., 0]``

    Returns:
        gamma as a float for scalar input, else an array
    """
    lag = np.asarray(h, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if not (np.isfinite(lag).all() and np.isfinite(t).all()):
        raise InvalidArgumentError("variogram lags must be finite")
    value = spatial_variogram(spec, lag) + temporal_variogram(spec, t)
    return float(value) if np.ndim(value) == 0 else value


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factor of ``cov`` with escalating diagonal jitter.

    Attempt k adds 1e-10 * 10**(k - 1) * (1 + max diagonal), up to 1e-6.

    Raises:
        FactorizationError: If the matrix is not positive definite after the last attempt
    """
    scale = 1.0 + float(np.max(np.diag(cov)))
    eye = np.eye(cov.shape[0])
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(JITTER_ATTEMPTS),
            retry=retry_if_exception_type(np.linalg.LinAlgError),
            reraise=True,
        ):
            with attempt:
                k = attempt.retry_state.attempt_number
                jitter = JITTER_BASE * 10 ** (k - 1) * scale
                if k > 1:
                    logger.warning("Escalating covariance jitter", attempt=k, jitter=jitter)
                return np.linalg.cholesky(cov + jitter * eye)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(
            f"covariance of size {cov.shape[0]} not positive definite after jitter escalation"
        ) from e
    raise FactorizationError("factorization did not run")


class IncrementFieldSampler:
    """
    Centered Gaussian field W on a fixed set of points, pinned to 0 at the anchor,
    with Cov(W(a), W(b)) = g(a - x0) + g(b - x0) - g(a - b).

    The covariance is factorized once; each draw is a matrix-vector product.
    """

    def __init__(self, points, anchor: int, gamma: Callable[[np.ndarray], np.ndarray]):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if not 0 <= anchor < pts.shape[0]:
            raise InvalidArgumentError(f"anchor {anchor} outside the domain")
        self.size = pts.shape[0]
        self.anchor = anchor
        # gamma(x - x0): the drift of the spectral function exp(W - gamma)
        self.drift = np.asarray(gamma(pts - pts[anchor]), dtype=np.float64)
        self.drift[anchor] = 0.0

        self._free = np.delete(np.arange(self.size), anchor)
        self._factor: Optional[np.ndarray] = None
        if self._free.size:
            g0 = self.drift[self._free]
            sub = pts[self._free]
            cov = g0[:, None] + g0[None, :] - gamma(sub[:, None, :] - sub[None, :, :])
            self._factor = cholesky_with_jitter(cov)

    def draw(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """One draw of shape (points,), or ``size`` draws of shape (size, points)."""
        k = 1 if size is None else size
        out = np.zeros((k, self.size))
        if self._factor is not None:
            z = rng.standard_normal((k, self._free.size))
            out[:, self._free] = z @ self._factor.T
        return out[0] if size is None else out

    def log_spectral(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """W - gamma(x - x0); exactly 0 at the anchor."""
        return self.draw(rng, size) - self.drift


def spatial_sampler(spec: VariogramSpec, coords, anchor: int) -> IncrementFieldSampler:
    return IncrementFieldSampler(coords, anchor, lambda d: spatial_variogram(spec, d))


def temporal_sampler(spec: VariogramSpec, times, anchor: int) -> IncrementFieldSampler:
    return IncrementFieldSampler(
        np.asarray(times, dtype=np.float64), anchor, lambda d: temporal_variogram(spec, d[..., 0])
    )


def gaussian_increment_field(
    spec: VariogramSpec,
    anchor: int,
    points,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    One draw of W on space-time points (x, y, t) with W(points[anchor]) = 0 and
    Cov(W(a), W(b)) = gamma(a - x0) + gamma(b - x0) - gamma(a - b).

    Args:
        spec: Variogram parameters
        anchor: Index of the anchor point x0 in ``points``
        points: (m, 3) array of (x, y, t)
        rng: Random generator (seeded from the settings default if omitted)

    Raises:
        FactorizationError: If the covariance cannot be factorized
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidArgumentError("points must be an (m, 3) array of (x, y, t)")
    sampler = IncrementFieldSampler(
        pts, anchor, lambda d: spatial_variogram(spec, d[..., :2]) + temporal_variogram(spec, d[..., 2])
    )
    return sampler.draw(rng or np.random.default_rng(settings.default_seed))


def subgrid_sites(grid: SpatialGrid, stride: int) -> np.ndarray:
    """
    Sites at every ``stride``-th position along each axis.

    Positions are the ranks of the distinct x and y coordinates, so a regular
    grid keeps every ``stride``-th column of every ``stride``-th row.
    """
    if stride < 1:
        raise InvalidArgumentError("subgrid stride must be at least 1")
    coords = grid.site_coords
    x_rank = np.unique(coords[:, 0], return_inverse=True)[1].ravel()
    y_rank = np.unique(coords[:, 1], return_inverse=True)[1].ravel()
    return np.flatnonzero((x_rank % stride == 0) & (y_rank % stride == 0))


def simulate(spec: VariogramSpec, config: SimConfig) -> FieldSeries:
    """
    Simulate a Brown-Resnick field series with the truncated extremal functions algorithm.

    Subgrid points are processed time-major, then by site index. For each, Poisson
    points zeta are generated in decreasing order until zeta <= Z(x_k); each one
    carries an extremal function exp(W - gamma(. - x_k)) on the window
    S x [t_k - T, t_k + T], accepted iff it stays below Z at every previously
    processed subgrid point of the window.

    Returns:
        FieldSeries with unit Frechet margins (float64)
    """
    grid = config.grid
    n_times, n_sites = config.n_times, grid.site_count
    rng = np.random.default_rng(config.rng_seed)
    lag = min(config.temporal_truncation, n_times - 1)
    sub_sites = subgrid_sites(grid, config.subgrid_stride)

    temporal = temporal_sampler(spec, np.arange(-lag, lag + 1), lag)
    spatial: Dict[int, IncrementFieldSampler] = {}

    logger.info(
        "Simulation started",
        n_times=n_times,
        sites=n_sites,
        subgrid_sites=int(sub_sites.size),
        truncation=lag,
    )

    z = np.zeros((n_times, n_sites))
    processed = np.zeros((n_times, n_sites), dtype=bool)
    n_candidates = 0
    n_accepted = 0

    for t in range(n_times):
        lo, hi = max(t - lag, 0), min(t + lag, n_times - 1)
        lag_index = np.arange(lo - t + lag, hi - t + lag + 1)
        for k in sub_sites:
            if k not in spatial:
                spatial[k] = spatial_sampler(spec, grid.site_coords, int(k))
            space = spatial[k]
            inverse = rng.exponential()
            zeta = 1.0 / inverse
            while zeta > z[t, k]:
                n_candidates += 1
                log_s = space.log_spectral(rng)
                log_t = temporal.log_spectral(rng)[lag_index]
                candidate = zeta * np.exp(log_t[:, None] + log_s[None, :])
                window = z[lo:hi + 1]
                seen = processed[lo:hi + 1]
                if not (candidate[seen] >= window[seen]).any():
                    np.maximum(window, candidate, out=window)
                    n_accepted += 1
                inverse += rng.exponential()
                zeta = 1.0 / inverse
            processed[t, k] = True

    logger.info("Simulation finished", candidates=n_candidates, accepted=n_accepted)
    return FieldSeries(grid=grid, values=z)


def theoretical_extremal_coefficient(spec: VariogramSpec, h, t: float = 0.0) -> float:
    """Pairwise extremal coefficient 2 * Phi(sqrt(gamma(h, t) / 2))."""
    return float(2.0 * norm.cdf(np.sqrt(variogram(spec, h, t) / 2.0)))


def empirical_extremal_coefficient(
    series: FieldSeries, site_a: int, site_b: int, lag: int = 0
) -> float:
    """
    F-madogram estimate of the extremal coefficient between (site_a, t) and
    (site_b, t + lag), using the unit Frechet margins F(z) = exp(-1/z).
    """
    if lag < 0 or lag >= series.n_times:
        raise InvalidArgumentError(f"lag {lag} outside 0..{series.n_times - 1}")
    values = np.asarray(series.values, dtype=np.float64)
    fa = np.exp(-1.0 / values[: series.n_times - lag, site_a])
    fb = np.exp(-1.0 / values[lag:, site_b])
    nu = 0.5 * np.abs(fa - fb).mean()
    return float((1.0 + 2.0 * nu) / (1.0 - 2.0 * nu))


def _simulate_one(args) -> FieldSeries:
    spec, config = args
    return simulate(spec, config)


def simulate_replicates(
    spec: VariogramSpec,
    config: SimConfig,
    n_replicates: int,
    workers: Optional[int] = None,
) -> List[FieldSeries]:
    """
    Independent replicates with seeds spawned from ``config.rng_seed``.

    Replicates run in a process pool; the result does not depend on ``workers``.
    """
    if n_replicates < 1:
        raise InvalidArgumentError("at least one replicate is required")
    children = np.random.SeedSequence(config.rng_seed).spawn(n_replicates)
    configs = [
        config.model_copy(update={"rng_seed": int(child.generate_state(1)[0])})
        for child in children
    ]
    jobs = [(spec, c) for c in configs]
    n_workers = workers or settings.threads
    logger.info("Simulating replicates", replicates=n_replicates, workers=n_workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(_simulate_one, jobs))
    return [_simulate_one(job) for job in jobs]
