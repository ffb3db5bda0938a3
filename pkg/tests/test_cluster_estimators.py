import numpy as np
import pytest

from errors import InvalidArgumentError, NoClustersError, ZeroDenominatorError
from helper.cluster_estimators import (
    cluster_size_distribution,
    cluster_size_windows,
    extract_clusters,
    pattern_distribution,
    pattern_times,
    pattern_windows,
    ratio_estimator,
    risk_series,
    statistic_series,
)
from helper.field_core import empirical_quantile, regular_grid
from models.field import FieldSeries
from models.risk import LocationMeasure, RiskFunctional, SpatialRiskMeasure


def _spans(clusters):
    return [(c.start, c.length) for c in clusters]


def test_extract_clusters_examples():
    assert _spans(extract_clusters([0.2, 1.5, 2.0, 0.3, 0.9, 3.1, 0.1], 1.0)) == [(1, 2), (5, 1)]
    assert _spans(extract_clusters([2.0, 0.5, 1.2, 0.3], 1.0)) == [(2, 1)]
    assert extract_clusters([0.1, 0.2, 0.3], 1.0) == []
    assert extract_clusters([2.0, 3.0, 4.0], 1.0) == []


def test_extract_clusters_trailing_run_discarded():
    assert _spans(extract_clusters([0.0, 2.0, 0.0, 2.0, 2.0], 1.0)) == [(1, 1)]


def test_extract_clusters_independent_of_chunks(rng):
    rv = rng.normal(size=5000)
    base = _spans(extract_clusters(rv, 1.0))
    for n_chunks in (2, 7, 64):
        assert _spans(extract_clusters(rv, 1.0, n_chunks=n_chunks)) == base


def test_cluster_invariants(rng):
    rv = rng.normal(size=2000)
    u = 0.8
    for c in extract_clusters(rv, u):
        assert rv[c.start - 1] <= u and rv[c.stop] <= u
        assert (rv[c.start:c.stop] > u).all()
        assert c.start >= 1 and c.stop <= rv.size - 1


def _scan_clusters(above):
    """Maximal runs of True with a False on both sides, by direct scan."""
    runs, t, n = [], 0, len(above)
    while t < n:
        if not above[t]:
            t += 1
            continue
        start = t
        while t < n and above[t]:
            t += 1
        if start > 0 and t < n:
            runs.append((start, t - start))
    return runs


@pytest.mark.parametrize(
    "above",
    [
        [True] * 6,
        [False] * 6,
        [True],
        [False],
        [True, False, True],
        [False, True],
        [False, True, False],
        [True, True, False, True, True, False, False, True, True],
    ],
)
def test_extract_clusters_edge_sequences(above):
    rv = np.where(above, 2.0, 0.0)
    assert _spans(extract_clusters(rv, 1.0)) == _scan_clusters(above)


def test_extract_clusters_matches_direct_scan(rng):
    for _ in range(10_000):
        n = int(rng.integers(1, 40))
        above = rng.random(n) < rng.uniform(0.05, 0.95)
        rv = np.where(above, rng.uniform(1.5, 3.0, n), rng.uniform(-1.0, 1.0, n))
        n_chunks = int(rng.integers(1, 5))
        assert _spans(extract_clusters(rv, 1.0, n_chunks=n_chunks)) == _scan_clusters(above.tolist())


def test_risk_series_examples(grid_2x2):
    series = FieldSeries(grid=grid_2x2, values=np.full((3, 4), 2.0))
    np.testing.assert_array_equal(risk_series(series, RiskFunctional(kind="max")), [2.0, 2.0, 2.0])

    single = regular_grid(1, 1)
    values = np.array([[1.0], [3.0], [2.0]])
    one = FieldSeries(grid=single, values=values)
    np.testing.assert_array_equal(risk_series(one, RiskFunctional(kind="mean")), values[:, 0])


def test_risk_series_homogeneous(rng, grid_3x3):
    f = rng.uniform(size=(2, 9))
    series = FieldSeries(grid=grid_3x3, values=np.vstack([f[0], 3.0 * f[0]]))
    rv = risk_series(series, RiskFunctional(kind="median"))
    assert rv[1] == pytest.approx(3.0 * rv[0], rel=1e-15)


def test_cluster_size_distribution_example():
    dist = cluster_size_distribution([0.2, 1.5, 2.0, 0.3, 0.9, 3.1, 0.1], 1.0, l_max=3)
    assert dist.labels == ["1", "2", "3", ">=4"]
    assert dist.prob("1") == 0.5 and dist.prob("2") == 0.5
    assert dist.denominator_count == 2
    assert dist.counts == [1, 1, 0, 0]


def test_cluster_size_distribution_no_clusters():
    with pytest.raises(NoClustersError, match="no clusters at this threshold"):
        cluster_size_distribution([0.1, 0.2, 0.3], 1.0, l_max=3)


def test_cluster_size_overflow_and_length_identity(rng):
    rv = rng.normal(size=20000)
    rv = np.convolve(rv, np.ones(4) / 4, mode="same")
    u = empirical_quantile(rv, 0.9)
    clusters = extract_clusters(rv, u)
    big = max(c.length for c in clusters)
    dist = cluster_size_distribution(rv, u, l_max=big)
    exceedances = sum(c.length for c in clusters)
    assert sum((i + 1) * n for i, n in enumerate(dist.counts[:-1])) == exceedances
    assert dist.counts[-1] == 0
    small = cluster_size_distribution(rv, u, l_max=2)
    assert small.counts[-1] == sum(1 for c in clusters if c.length >= 3)
    assert abs(sum(small.probs) - 1.0) <= 1e-12


def test_iid_series_mostly_single_clusters(frechet_series):
    rv = risk_series(frechet_series, RiskFunctional(kind="mean"))
    u = empirical_quantile(rv, 0.95)
    dist = cluster_size_distribution(rv, u, l_max=5)
    assert dist.prob("1") >= 0.85


def test_pattern_distribution_example():
    rv = [0.0, 2.0, 3.0, 0.0, 5.0, 4.0, 0.0, 6.0, 0.0, 2.0, 2.0, 0.0]
    dist = pattern_distribution(rv, rv, 1.0, 2)
    assert dist.labels == ["(1,2)", "(2,1)", "ties"]
    assert dist.counts == [1, 1, 1]
    assert dist.diagnostics["n_ties"] == 1
    assert dist.diagnostics["n_clusters"] == 3


def test_pattern_exact_size():
    rv = [0.0, 2.0, 3.0, 0.0, 5.0, 4.0, 3.5, 0.0]
    geq = pattern_windows(rv, rv, 1.0, 2)
    exact = pattern_windows(rv, rv, 1.0, 2, exact_size=True)
    assert geq.n_windows == 2 and exact.n_windows == 1
    np.testing.assert_array_equal(exact.first, [0])
    np.testing.assert_array_equal(exact.last, [3])
    np.testing.assert_array_equal(geq.last, [2, 5])


def test_pattern_length_bounds():
    with pytest.raises(InvalidArgumentError):
        pattern_windows([0.0, 2.0, 0.0], [0.0, 2.0, 0.0], 1.0, 6)


def test_pattern_no_qualifying_clusters():
    with pytest.raises(NoClustersError):
        pattern_distribution([0.0, 2.0, 0.0], [0.0, 2.0, 0.0], 1.0, 2)


def test_pattern_probabilities_sum_to_one(rng):
    rv = np.convolve(rng.normal(size=5000), np.ones(3), mode="same")
    for length in (2, 3):
        dist = pattern_distribution(rv, rv, 1.0, length)
        assert abs(sum(dist.probs) - 1.0) <= 1e-12
        assert sum(dist.counts) == dist.denominator_count


def test_pattern_invariant_under_increasing_map(rng):
    rv = np.convolve(rng.normal(size=3000), np.ones(3), mode="same")
    a = pattern_distribution(rv, rv, 1.0, 3)
    b = pattern_distribution(rv ** 3, rv ** 3, 1.0, 3)
    assert a.counts == b.counts


def test_cluster_sizes_invariant_under_increasing_map(rng):
    rv = np.convolve(rng.normal(size=3000), np.ones(3), mode="same")
    a = cluster_size_distribution(rv, 1.0, l_max=4)
    b = cluster_size_distribution(np.exp(rv), np.exp(1.0), l_max=4)
    assert a.counts == b.counts


def test_ratio_estimator():
    assert ratio_estimator([1, 0, 1, 0], [1, 1, 1, 1]) == 0.5
    with pytest.raises(ZeroDenominatorError):
        ratio_estimator([0, 0], [0, 0])


def test_windows_record_spans():
    rv = [0.0, 2.0, 3.0, 0.0, 5.0, 0.0]
    w = cluster_size_windows(rv, 1.0, l_max=3)
    np.testing.assert_array_equal(w.first, [0, 3])
    np.testing.assert_array_equal(w.last, [3, 5])
    np.testing.assert_array_equal(w.label_index, [1, 0])
    assert w.span == 5


def test_statistic_series_area_and_location(grid_2x2):
    values = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [2.0, 2.0, 0.0, 0.0],
            [2.0, 2.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    series = FieldSeries(grid=grid_2x2, values=values)
    rv = risk_series(series, RiskFunctional(kind="max"))
    times = pattern_times(rv, 1.0, 2)
    np.testing.assert_array_equal(times, [1, 2])

    area = statistic_series(series, "area", 1.0, times)
    assert np.isnan(area[0]) and np.isnan(area[3])
    np.testing.assert_allclose(area[1:3], [0.5, 0.75])

    lon = statistic_series(series, "longitude", 1.0, times, location=LocationMeasure())
    np.testing.assert_allclose(lon[1:3], [0.5, 1.0 / 3.0])

    dist = pattern_distribution(area, rv, 1.0, 2)
    assert dist.prob("(1,2)") == 1.0
    dist = pattern_distribution(lon, rv, 1.0, 2)
    assert dist.prob("(2,1)") == 1.0


def test_statistic_series_weighted_area(grid_2x2):
    values = np.array([[0.0] * 4, [2.0, 2.0, 0.0, 0.0], [0.0] * 4])
    series = FieldSeries(grid=grid_2x2, values=values)
    m = SpatialRiskMeasure(exposure=[4.0, 0.0, 0.0, 0.0])
    area = statistic_series(series, "area", 1.0, measure=m)
    np.testing.assert_allclose(area, [0.0, 1.0, 0.0])


def _dependent_series(rng, grid, n_times=3000):
    noise = rng.normal(size=(n_times + 2, grid.site_count))
    return FieldSeries(grid=grid, values=noise[:-2] + noise[1:-1] + noise[2:])


def _functional_counts(series, r, u, stat, location=None):
    rv = risk_series(series, r)
    times = pattern_times(rv, u, 2)
    values = statistic_series(series, stat, u, times, location=location)
    return pattern_distribution(values, rv, u, 2).counts


@pytest.mark.parametrize("kind", ["peak", "exceedance_centroid", "weighted_centroid", "componentwise_median"])
def test_functional_patterns_scale_invariant(rng, grid_3x3, kind):
    series = _dependent_series(rng, grid_3x3)
    scaled = FieldSeries(grid=grid_3x3, values=2.0 * series.values)
    r = RiskFunctional(kind="mean")
    u = empirical_quantile(risk_series(series, r), 0.9)
    location = LocationMeasure(kind=kind)
    for stat in ("area", "longitude", "latitude"):
        assert _functional_counts(scaled, r, 2.0 * u, stat, location) == _functional_counts(
            series, r, u, stat, location
        )


@pytest.mark.parametrize("kind", ["peak", "exceedance_centroid", "componentwise_median"])
def test_functional_patterns_invariant_under_increasing_map(rng, grid_3x3, kind):
    series = _dependent_series(rng, grid_3x3)
    mapped = FieldSeries(grid=grid_3x3, values=np.exp(series.values))
    r = RiskFunctional(kind="median")
    u = empirical_quantile(risk_series(series, r), 0.9)
    u_mapped = empirical_quantile(risk_series(mapped, r), 0.9)
    assert u_mapped == pytest.approx(np.exp(u), rel=1e-15)
    location = LocationMeasure(kind=kind)
    for stat in ("area", "longitude", "latitude"):
        assert _functional_counts(mapped, r, u_mapped, stat, location) == _functional_counts(
            series, r, u, stat, location
        )


@pytest.mark.slow
def test_iid_fields_degenerate_clusters(grid_3x3):
    values = 1.0 / np.random.default_rng(4).exponential(size=(20_000, grid_3x3.site_count))
    rv = risk_series(FieldSeries(grid=grid_3x3, values=values), RiskFunctional(kind="mean"))
    u = empirical_quantile(rv, 0.95)
    sizes = cluster_size_distribution(rv, u, l_max=3)
    assert sizes.prob("1") >= 0.90
    for length in (2, 3):
        dist = pattern_distribution(rv, rv, u, length)
        qualifying = sum(1 for c in extract_clusters(rv, u) if c.length >= length)
        assert dist.denominator_count == qualifying
        assert sum(dist.counts) == qualifying
        assert sum(dist.probs) == pytest.approx(1.0, abs=1e-12)
