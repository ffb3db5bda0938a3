"""
Exceedance clusters of the risk series and the ratio estimators built on them:
cluster-size distribution and ordinal-pattern distributions of intensity,
affected area and event location.
"""

from typing import List, Literal, Optional, Tuple

import numpy as np

from app_logging import get_logger
from errors import InvalidArgumentError, NoClustersError, ZeroDenominatorError
from helper.field_core import ordinal_patterns, pattern_labels
from helper.risk_functionals import locate_rows, risk_rows, spatial_risk_rows
from models.cluster import ClusterIndex, LabeledWindows, PatternDistribution
from models.field import FieldSeries
from models.risk import LocationMeasure, RiskFunctional, SpatialRiskMeasure

logger = get_logger(__name__)

MAX_PATTERN_LENGTH = 5

Statistic = Literal["area", "longitude", "latitude"]


def risk_series(
    series: FieldSeries,
    r: RiskFunctional,
    chunk_size: Optional[int] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """The univariate series r(X_t), t = 0..n-1, in float64."""
    return risk_rows(r, series.values, chunk_size=chunk_size, threads=threads)


def _exceedance_transitions(exceed: np.ndarray, n_chunks: int) -> np.ndarray:
    # diff[i] = exceed[i + 1] - exceed[i], scanned chunk by chunk
    n = exceed.size
    if n < 2:
        return np.zeros(0, dtype=np.int8)
    pieces = [
        np.diff(exceed[idx[0]: idx[-1] + 2])
        for idx in np.array_split(np.arange(n - 1), max(1, n_chunks))
        if idx.size
    ]
    return np.concatenate(pieces)


def cluster_bounds(rv, u: float, n_chunks: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Starts and lengths of all complete u-exceedance clusters.

    Runs touching index 0 or n - 1 lack a delimiter and are discarded.
    """
    values = np.asarray(rv, dtype=np.float64).ravel()
    if not np.isfinite(values).all():
        raise InvalidArgumentError("risk series must be finite")
    exceed = (values > u).astype(np.int8)
    d = _exceedance_transitions(exceed, n_chunks)
    starts = np.flatnonzero(d == 1) + 1
    stops = np.flatnonzero(d == -1) + 1
    # First non-exceedance after each start; none means the run reaches the end
    idx = np.searchsorted(stops, starts)
    complete = idx < stops.size
    starts = starts[complete]
    lengths = stops[idx[complete]] - starts
    return starts.astype(np.int64), lengths.astype(np.int64)


def extract_clusters(rv, u: float, n_chunks: int = 1) -> List[ClusterIndex]:
    """
    Maximal runs of entries > u flanked on both sides by an in-range entry <= u.

    Args:
        rv: Risk series
        u: Threshold
        n_chunks: Number of chunks for the transition scan (result is independent of it)

    Returns:
        Clusters in time order; empty if no complete cluster exists
    """
    starts, lengths = cluster_bounds(rv, u, n_chunks=n_chunks)
    return [ClusterIndex(start=int(s), length=int(l)) for s, l in zip(starts, lengths)]


def size_labels(l_max: int) -> Tuple[str, ...]:
    return tuple(str(k) for k in range(1, l_max + 1)) + (f">={l_max + 1}",)


def cluster_size_windows(
    rv, u: float, l_max: int = 12, family: str = "cluster_size"
) -> LabeledWindows:
    """Cluster windows (both delimiters included) labelled by cluster size."""
    if l_max < 1:
        raise InvalidArgumentError(f"l_max must be >= 1, got {l_max}")
    values = np.asarray(rv, dtype=np.float64).ravel()
    starts, lengths = cluster_bounds(values, u)
    label_index = np.minimum(lengths, l_max + 1) - 1
    return LabeledWindows(
        family=family,
        labels=size_labels(l_max),
        first=starts - 1,
        last=starts + lengths,
        label_index=label_index,
        n_times=values.size,
        span=l_max + 2,
        diagnostics={"n_clusters": int(starts.size)},
    )


def _check_pattern_length(length: int) -> None:
    if not 2 <= length <= MAX_PATTERN_LENGTH:
        raise InvalidArgumentError(
            f"pattern length must lie in 2..{MAX_PATTERN_LENGTH}, got {length}"
        )


def pattern_windows(
    rv_stat,
    cluster_rv,
    u: float,
    length: int,
    exact_size: bool = False,
    family: Optional[str] = None,
) -> LabeledWindows:
    """
    Windows of clusters of size >= ``length`` (or == ``length``), labelled by the
    ordinal pattern of ``rv_stat`` over the first ``length`` cluster times.

    Clusters are defined on ``cluster_rv``. Clusters whose statistic is
    undefined (NaN) at any of those times are skipped and counted in
    ``diagnostics["n_undefined"]``.
    """
    _check_pattern_length(length)
    stat = np.asarray(rv_stat, dtype=np.float64).ravel()
    base = np.asarray(cluster_rv, dtype=np.float64).ravel()
    if stat.size != base.size:
        raise InvalidArgumentError("statistic and cluster series must have equal length")

    starts, lengths = cluster_bounds(base, u)
    keep = lengths == length if exact_size else lengths >= length
    starts = starts[keep]
    windows = stat[starts[:, None] + np.arange(length)[None, :]]
    defined = ~np.isnan(windows).any(axis=1)
    n_undefined = int((~defined).sum())
    if n_undefined:
        logger.warning("Clusters skipped: statistic undefined", family=family, n_skipped=n_undefined)
    starts, windows = starts[defined], windows[defined]

    if starts.size:
        index, ties = ordinal_patterns(windows)
    else:
        index, ties = np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    tail = length if exact_size else length - 1
    return LabeledWindows(
        family=family or f"pattern_l{length}",
        labels=pattern_labels(length),
        first=starts - 1,
        last=starts + tail,
        label_index=index,
        n_times=base.size,
        span=length + 2,
        diagnostics={
            "n_clusters": int(starts.size),
            "n_ties": int(ties.sum()),
            "n_undefined": n_undefined,
        },
    )


def distribution_from_windows(windows: LabeledWindows) -> PatternDistribution:
    """Ratio estimates count(label) / count(all windows) for every bucket."""
    if windows.n_windows == 0:
        raise NoClustersError()
    counts = windows.counts()
    total = int(counts.sum())
    return PatternDistribution(
        family=windows.family,
        labels=list(windows.labels),
        counts=[int(c) for c in counts],
        probs=[float(c) / total for c in counts],
        denominator_count=total,
        diagnostics=dict(windows.diagnostics),
    )


def cluster_size_distribution(rv, u: float, l_max: int = 12) -> PatternDistribution:
    """
    Distribution of the cluster size over 1..l_max and an overflow bucket.

    Raises:
        NoClustersError: If no complete cluster exists at ``u``
    """
    windows = cluster_size_windows(rv, u, l_max)
    dist = distribution_from_windows(windows)
    logger.info("Cluster sizes estimated", threshold=u, n_clusters=dist.denominator_count)
    return dist


def pattern_distribution(
    rv_stat,
    cluster_rv,
    u: float,
    length: int,
    exact_size: bool = False,
) -> PatternDistribution:
    """
    Distribution of ordinal patterns of ``rv_stat`` at the start of clusters.

    Passing ``rv_stat = cluster_rv`` gives intensity patterns; an area or
    location series gives the corresponding functional patterns.

    Raises:
        NoClustersError: If no qualifying cluster exists
    """
    windows = pattern_windows(rv_stat, cluster_rv, u, length, exact_size=exact_size)
    return distribution_from_windows(windows)


def ratio_estimator(indicator_a, indicator_a0) -> float:
    """Sum of 1{A at k} divided by sum of 1{A0 at k}."""
    a = np.asarray(indicator_a, dtype=bool).ravel()
    a0 = np.asarray(indicator_a0, dtype=bool).ravel()
    if a.size != a0.size:
        raise InvalidArgumentError("indicator vectors must have equal length")
    denominator = int(a0.sum())
    if denominator == 0:
        raise ZeroDenominatorError("conditioning event never occurs")
    return int(a.sum()) / denominator


def pattern_times(cluster_rv, u: float, length: int, exact_size: bool = False) -> np.ndarray:
    """Sorted time indices at which a pattern of the given length reads the statistic."""
    starts, lengths = cluster_bounds(cluster_rv, u)
    keep = lengths == length if exact_size else lengths >= length
    times = starts[keep][:, None] + np.arange(length)[None, :]
    return np.unique(times.ravel())


def statistic_series(
    series: FieldSeries,
    stat: Statistic,
    u: float,
    times: Optional[np.ndarray] = None,
    measure: Optional[SpatialRiskMeasure] = None,
    location: Optional[LocationMeasure] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """
    Per-time statistic of the pointwise exceedance set {X_t > u}.

    Only ``times`` are evaluated (all by default); other entries are NaN.
    ``area`` uses the spatial risk measure; ``longitude``/``latitude`` are the
    x/y coordinate of the location measure, NaN where it is UNDEFINED.
    """
    out = np.full(series.n_times, np.nan)
    rows = np.arange(series.n_times) if times is None else np.asarray(times, dtype=np.int64)
    if rows.size == 0:
        return out
    if stat == "area":
        m = measure or SpatialRiskMeasure()
        out[rows] = spatial_risk_rows(m, series.values, u, times=rows, threads=threads)
    elif stat in ("longitude", "latitude"):
        c = location or LocationMeasure()
        points = locate_rows(c, series.values, u, series.grid, times=rows, threads=threads)
        out[rows] = points[:, 0 if stat == "longitude" else 1]
    else:
        raise InvalidArgumentError(f"unknown statistic {stat}")
    return out
