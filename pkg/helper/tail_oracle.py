"""
Monte Carlo oracle for the limit quantities of the Brown-Resnick model.

Draws of the anchored spectral process V = exp(W - gamma(. - (s*, 0))) on the
window S x {-1, ..., l} are reduced to exponent-measure ratios (tail index 1).
Every oracle function also accepts precomputed draws of shape
(M, times, sites), with row 0 holding time -1, so synthetic models can be
evaluated the same way.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app_logging import get_logger
from config import settings
from errors import InvalidArgumentError, TemporallyDegenerateError
from helper.br_simulator import spatial_sampler, temporal_sampler
from helper.cluster_estimators import MAX_PATTERN_LENGTH, size_labels
from helper.field_core import ordinal_patterns, pattern_labels
from helper.risk_functionals import locate_block, risk_rows
from models.field import format_pattern
from models.report import OracleStat
from models.risk import LocationMeasure, RiskFunctional, SpatialRiskMeasure
from models.simulation import OracleConfig, OracleEstimate, SpectralDraw

logger = get_logger(__name__)

# Normal quantile of the reported Monte Carlo intervals
Z_95 = 1.96

# Maps a batch (m, times, sites) to per-draw numerators (m, k) and denominators (m,)
BatchReducer = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


class _SpectralSampler:
    """Factorized spatial and temporal samplers for one oracle configuration."""

    def __init__(self, config: OracleConfig):
        self.anchor = config.anchor
        self.spatial = spatial_sampler(config.variogram, config.grid.site_coords, self.anchor)
        # times -1..l, anchor at t = 0 (index 1)
        self.temporal = temporal_sampler(config.variogram, config.times, 1)

    def batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        log_s = self.spatial.log_spectral(rng, size)
        log_t = self.temporal.log_spectral(rng, size)
        return np.exp(log_t[:, :, None] + log_s[:, None, :])


def draw_spectral(config: OracleConfig, rng: Optional[np.random.Generator] = None) -> SpectralDraw:
    """
    One draw of the anchored spectral process on S x {-1, ..., l}.

    Returns:
        SpectralDraw with value exactly 1 at (anchor, 0)
    """
    sampler = _SpectralSampler(config)
    values = sampler.batch(rng or np.random.default_rng(config.rng_seed), 1)[0]
    return SpectralDraw(values=values, anchor_site=sampler.anchor)


def draw_spectral_batch(
    config: OracleConfig, size: int, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """``size`` draws as a (size, l + 2, sites) array."""
    if size < 1:
        raise InvalidArgumentError("batch size must be positive")
    return _SpectralSampler(config).batch(rng or np.random.default_rng(config.rng_seed), size)


def _batch_bounds(total: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(a, min(a + batch_size, total)) for a in range(0, total, batch_size)]


def _iter_batches(
    config: OracleConfig, draws: Optional[np.ndarray], batch_size: int
) -> Tuple[int, Callable[[int], np.ndarray], List[Tuple[int, int]]]:
    if draws is not None:
        data = np.asarray(draws, dtype=np.float64)
        if data.ndim != 3:
            raise InvalidArgumentError("draws must be an (M, times, sites) array")
        if not (np.isfinite(data).all() and (data >= 0).all()):
            raise InvalidArgumentError("draws must be finite and nonnegative")
        bounds = _batch_bounds(data.shape[0], batch_size)
        return data.shape[0], lambda i: data[bounds[i][0]:bounds[i][1]], bounds

    sampler = _SpectralSampler(config)
    bounds = _batch_bounds(config.draws, batch_size)
    seeds = np.random.SeedSequence(config.rng_seed).spawn(len(bounds))

    def make(i: int) -> np.ndarray:
        a, b = bounds[i]
        return sampler.batch(np.random.default_rng(seeds[i]), b - a)

    return config.draws, make, bounds


def _moments(reducer: BatchReducer, batch: np.ndarray) -> np.ndarray:
    num, den = reducer(batch)
    d = den[:, None]
    return np.stack(
        [num.sum(axis=0), np.broadcast_to(d.sum(), num.shape[1]),
         (num ** 2).sum(axis=0), np.broadcast_to((d ** 2).sum(), num.shape[1]),
         (num * d).sum(axis=0)]
    )


def _run(
    config: OracleConfig,
    reducer: BatchReducer,
    n_labels: int,
    draws: Optional[np.ndarray],
    min_times: int,
    threads: Optional[int],
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Ratio estimates, their standard errors and the number of draws."""
    if draws is None and config.times.size < min_times:
        raise InvalidArgumentError(f"oracle window {config.window} too short for this quantity")
    if draws is not None and np.shape(draws)[1] < min_times:
        raise InvalidArgumentError(f"draws need at least {min_times} time rows")
    total, make, bounds = _iter_batches(config, draws, settings.oracle_batch_size)

    def work(i: int) -> np.ndarray:
        return _moments(reducer, make(i))

    workers = threads or settings.threads
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(len(bounds))))
    else:
        parts = [work(i) for i in range(len(bounds))]

    # Batches are reduced in index order regardless of the worker count
    sums = np.zeros((5, n_labels))
    for part in parts:
        sums += part
    mean_a, mean_d = sums[0] / total, sums[1, 0] / total
    var_a = np.maximum(sums[2] / total - mean_a ** 2, 0.0)
    var_d = max(sums[3, 0] / total - mean_d ** 2, 0.0)
    cov_ad = sums[4] / total - mean_a * mean_d

    se_d = math.sqrt(var_d / total)
    if mean_d <= 3.0 * se_d:
        raise TemporallyDegenerateError(
            f"oracle denominator {mean_d:.3g} within 3 standard errors ({se_d:.3g}) of zero"
        )
    ratio = mean_a / mean_d
    # Delta method for a ratio of means
    var_r = np.maximum(var_a + ratio ** 2 * var_d - 2.0 * ratio * cov_ad, 0.0)
    se = np.sqrt(var_r / total) / mean_d
    return ratio, se, total


def _estimates(
    family: str, labels: Sequence[str], ratio: np.ndarray, se: np.ndarray, total: int
) -> List[OracleEstimate]:
    return [
        OracleEstimate(
            family=family,
            label=label,
            value=float(min(max(r, 0.0), 1.0)),
            raw=float(r),
            se=float(s),
            ci_lo=float(r - Z_95 * s),
            ci_hi=float(r + Z_95 * s),
            draws=total,
        )
        for label, r, s in zip(labels, ratio, se)
    ]


def _risk_values(r: RiskFunctional, batch: np.ndarray) -> np.ndarray:
    m, n_t, n_s = batch.shape
    return risk_rows(r, batch.reshape(m * n_t, n_s), threads=1).reshape(m, n_t)


def _left_delimiter(rv: np.ndarray, length: int, exact_size: bool) -> np.ndarray:
    # rv column j holds time j - 1
    if exact_size:
        return np.maximum(rv[:, 0], rv[:, length + 1])
    return rv[:, 0]


def oracle_cluster_size_distribution(
    config: OracleConfig,
    l_max: int,
    r: RiskFunctional,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> List[OracleEstimate]:
    """
    Limit cluster-size probabilities for sizes 1..l_max plus the overflow bucket.

    Size l has weight (min_{0<=t<l} r(V_t) - max(r(V_-1), r(V_l)))_+ relative to
    (r(V_0) - r(V_-1))_+. The overflow is one minus the sum; its standard error
    is that of the sum.
    """
    if l_max < 1:
        raise InvalidArgumentError("l_max must be >= 1")

    def reduce(batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rv = _risk_values(r, batch)
        running_min = np.minimum.accumulate(rv[:, 1:l_max + 1], axis=1)
        num = np.clip(
            running_min - np.maximum(rv[:, :1], rv[:, 2:l_max + 2]), 0.0, None
        )
        total = num.sum(axis=1, keepdims=True)
        return np.hstack([num, total]), np.clip(rv[:, 1] - rv[:, 0], 0.0, None)

    ratio, se, total = _run(config, reduce, l_max + 1, draws, l_max + 2, threads)
    labels = size_labels(l_max)
    probs = np.append(ratio[:l_max], 1.0 - ratio[l_max])
    errors = np.append(se[:l_max], se[l_max])
    estimates = _estimates("cluster_size", labels, probs, errors, total)
    logger.info("Cluster-size oracle computed", risk=r.name, l_max=l_max, draws=total)
    return estimates


def oracle_cluster_size(
    config: OracleConfig,
    length: int,
    r: RiskFunctional,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> OracleEstimate:
    """
    Limit probability that a cluster has exactly ``length`` time points.

    Raises:
        TemporallyDegenerateError: If the denominator is within 3 SE of zero
    """
    if length < 1:
        raise InvalidArgumentError("cluster length must be >= 1")
    return oracle_cluster_size_distribution(config, length, r, draws, threads)[length - 1]


def _check_length(length: int) -> None:
    if not 2 <= length <= MAX_PATTERN_LENGTH:
        raise InvalidArgumentError(f"pattern length must lie in 2..{MAX_PATTERN_LENGTH}")


def _label_of(pattern: Union[str, Sequence[int]]) -> str:
    return pattern if isinstance(pattern, str) else format_pattern(pattern)


def _one_hot(index: np.ndarray, n_labels: int) -> np.ndarray:
    out = np.zeros((index.size, n_labels))
    out[np.arange(index.size), index] = 1.0
    return out


def oracle_pattern_intensity_distribution(
    config: OracleConfig,
    length: int,
    r: RiskFunctional,
    exact_size: bool = False,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> List[OracleEstimate]:
    """
    Limit probabilities of every ordinal pattern of (r(V_0), ..., r(V_{l-1})),
    conditional on a cluster of size >= l (or == l with ``exact_size``).
    """
    _check_length(length)
    labels = pattern_labels(length)

    def reduce(batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rv = _risk_values(r, batch)
        inner = rv[:, 1:length + 1]
        weight = np.clip(inner.min(axis=1) - _left_delimiter(rv, length, exact_size), 0.0, None)
        index, _ = ordinal_patterns(inner)
        return _one_hot(index, len(labels)) * weight[:, None], weight

    min_times = length + 2 if exact_size else length + 1
    ratio, se, total = _run(config, reduce, len(labels), draws, min_times, threads)
    logger.info("Intensity pattern oracle computed", risk=r.name, length=length, draws=total)
    return _estimates(f"pattern_l{length}", labels, ratio, se, total)


def oracle_pattern_intensity(
    config: OracleConfig,
    length: int,
    pattern: Union[str, Sequence[int]],
    r: RiskFunctional,
    exact_size: bool = False,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> OracleEstimate:
    """Limit probability of one intensity pattern, e.g. ``(1, 2)`` or ``"ties"``."""
    label = _label_of(pattern)
    for est in oracle_pattern_intensity_distribution(config, length, r, exact_size, draws, threads):
        if est.label == label:
            return est
    raise InvalidArgumentError(f"{label} is not a pattern of length {length}")


def _stat_rows(
    stat: OracleStat,
    fields: np.ndarray,
    eta: np.ndarray,
    r: RiskFunctional,
    measure: SpatialRiskMeasure,
    location: LocationMeasure,
    coords: np.ndarray,
) -> np.ndarray:
    """Statistic of {V > eta} for every row of ``fields`` with per-row ``eta``."""
    n_sites = fields.shape[1]
    if stat == "area":
        weights = measure.weights(n_sites)
        return np.where(fields > eta[:, None], weights[None, :], 0.0).sum(axis=1) / n_sites
    if stat in ("longitude", "latitude"):
        points = locate_block(location, fields, eta[:, None], coords)
        return points[:, 0 if stat == "longitude" else 1]
    if stat == "risk":
        return risk_rows(r, fields, threads=1)
    raise InvalidArgumentError(f"unknown statistic {stat}")


def oracle_pattern_functional_distribution(
    config: OracleConfig,
    length: int,
    r: RiskFunctional,
    stat: OracleStat,
    measure: Optional[SpatialRiskMeasure] = None,
    location: Optional[LocationMeasure] = None,
    exact_size: bool = False,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> List[OracleEstimate]:
    """
    Limit probabilities of the ordinal patterns of an exceedance-set statistic.

    Per draw the eta-integral over (r(V_-1), min_{0<=t<l} r(V_t)) is evaluated by
    midpoint quadrature with ``config.quadrature_points`` nodes. Nodes where the
    statistic is undefined are counted in the ties bucket.
    """
    _check_length(length)
    labels = pattern_labels(length)
    n_labels = len(labels)
    q_points = config.quadrature_points
    m_measure = measure or SpatialRiskMeasure()
    c_measure = location or LocationMeasure()
    coords = config.grid.site_coords
    nodes = (np.arange(q_points) + 0.5) / q_points

    def reduce(batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        m, _, n_sites = batch.shape
        if stat in ("longitude", "latitude") and n_sites != coords.shape[0]:
            raise InvalidArgumentError("draws do not match the oracle grid")
        rv = _risk_values(r, batch)
        lo = _left_delimiter(rv, length, exact_size)
        hi = rv[:, 1:length + 1].min(axis=1)
        width = np.clip(hi - lo, 0.0, None)
        active = np.flatnonzero(width > 0)
        num = np.zeros((m, n_labels))
        if active.size:
            fields = batch[active, 1:length + 1, :].reshape(-1, n_sites)
            for node in nodes:
                eta = lo[active] + node * width[active]
                values = _stat_rows(
                    stat, fields, np.repeat(eta, length), r, m_measure, c_measure, coords
                ).reshape(active.size, length)
                undefined = np.isnan(values).any(axis=1)
                index, _ = ordinal_patterns(np.where(np.isnan(values), 0.0, values))
                index[undefined] = n_labels - 1
                num[active, index] += width[active] / q_points
        return num, width

    min_times = length + 2 if exact_size else length + 1
    ratio, se, total = _run(config, reduce, n_labels, draws, min_times, threads)
    logger.info(
        "Functional pattern oracle computed",
        risk=r.name,
        stat=stat,
        length=length,
        quadrature_points=q_points,
        draws=total,
    )
    return _estimates(f"{stat}_l{length}", labels, ratio, se, total)


def oracle_pattern_functional(
    config: OracleConfig,
    length: int,
    pattern: Union[str, Sequence[int]],
    r: RiskFunctional,
    stat: OracleStat,
    measure: Optional[SpatialRiskMeasure] = None,
    location: Optional[LocationMeasure] = None,
    exact_size: bool = False,
    draws: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
) -> OracleEstimate:
    """Limit probability of one pattern of the area, longitude, latitude or risk statistic."""
    label = _label_of(pattern)
    estimates = oracle_pattern_functional_distribution(
        config, length, r, stat, measure, location, exact_size, draws, threads
    )
    for est in estimates:
        if est.label == label:
            return est
    raise InvalidArgumentError(f"{label} is not a pattern of length {length}")


def iter_oracle_families(
    config: OracleConfig,
    risks: Sequence[RiskFunctional],
    l_max: int,
    pattern_lengths: Sequence[int],
    stats: Sequence[OracleStat],
    measure: Optional[SpatialRiskMeasure] = None,
    location: Optional[LocationMeasure] = None,
    exact_size: bool = False,
    threads: Optional[int] = None,
) -> Iterator[Tuple[RiskFunctional, List[OracleEstimate]]]:
    """All oracle families of one run, risk by risk, in report order."""
    for r in risks:
        yield r, oracle_cluster_size_distribution(config, l_max, r, threads=threads)
        for length in pattern_lengths:
            yield r, oracle_pattern_intensity_distribution(
                config, length, r, exact_size=exact_size, threads=threads
            )
            for stat in stats:
                yield r, oracle_pattern_functional_distribution(
                    config, length, r, stat, measure, location, exact_size, threads=threads
                )
