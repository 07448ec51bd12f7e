import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdchaos.core import TimeSeries
from qsdchaos.embed import (
    EmbeddingConfig,
    NeighborGrid,
    choose_delay,
    embed,
    mutual_information_curve,
    neighbors,
)
from qsdchaos.errors import ConfigError, DegenerateSeriesError, LengthError


def brute_neighbors(cloud, i, eps):
    d = np.max(np.abs(cloud.points - cloud.points[i]), axis=1)
    idx = np.arange(len(cloud))
    return idx[(d <= eps) & (np.abs(idx - i) > cloud.config.theiler)].tolist()


def sine(n, per_period=100, amplitude=1.0):
    t = np.arange(n) * (2 * math.pi / per_period)
    return TimeSeries(0.0, 2 * math.pi / per_period, amplitude * np.sin(t))


def test_config_defaults_and_validation():
    assert EmbeddingConfig(m=3, tau=4).theiler == 12
    assert EmbeddingConfig(m=3, tau=4, theiler=0).theiler == 0
    for bad in ({"m": 0}, {"m": 2, "tau": 0}, {"m": 2, "theiler": -1}):
        with pytest.raises(ConfigError):
            EmbeddingConfig(**bad)


def test_m1_is_identity():
    s = TimeSeries(0, 1, [4.0, 5.0, 6.0, 7.0])
    cloud = embed(s, EmbeddingConfig(m=1, tau=3))
    assert len(cloud) == 4
    assert cloud.points[:, 0].tolist() == [4.0, 5.0, 6.0, 7.0]


def test_small_direct_construction():
    cloud = embed(TimeSeries(0, 1, [1, 2, 3, 4, 5]), EmbeddingConfig(m=2, tau=2))
    assert cloud.points.tolist() == [[1, 3], [2, 4], [3, 5]]
    assert cloud.source_len == 5


def test_too_short_series():
    with pytest.raises(LengthError):
        embed(TimeSeries(0, 1, [1, 2]), EmbeddingConfig(m=3, tau=1))
    assert len(embed(TimeSeries(0, 1, [1, 2, 3]), EmbeddingConfig(m=2, tau=2))) == 1


def test_sine_quarter_period_embedding_is_circle():
    cloud = embed(sine(1000, 100, amplitude=2.5), EmbeddingConfig(m=2, tau=25))
    radius = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    assert np.max(np.abs(radius - 2.5)) < 1e-3


@given(n=st.integers(1, 80), m=st.integers(1, 5), tau=st.integers(1, 6))
def test_embedding_laws(n, m, tau):
    values = np.arange(n, dtype=float) ** 1.5
    config = EmbeddingConfig(m=m, tau=tau)
    if n <= (m - 1) * tau:
        with pytest.raises(LengthError):
            embed(TimeSeries(0, 1, values), config)
        return
    cloud = embed(TimeSeries(0, 1, values), config)
    count = n - (m - 1) * tau
    assert len(cloud) == count
    for j in range(m):
        assert np.array_equal(cloud.points[:, j], values[j * tau : j * tau + count])
    assert np.array_equal(cloud.points[:, 0], values[:count])


def test_choose_delay_sine_near_quarter_period():
    tau = choose_delay(sine(5000, 100))
    assert 22 <= tau <= 28


def sine_mi_first_minimum(window=3):
    # Brute-force oracle: scan the full MI curve for the first lag that is
    # lowest within its neighborhood.
    mi = mutual_information_curve(sine(5000, 100).values, 200)
    return next(k for k in range(1, 197) if mi[k] <= mi[max(0, k - window) : k + window + 1].min())


def test_choose_delay_matches_brute_force_mi_curve():
    assert choose_delay(sine(5000, 100)) == sine_mi_first_minimum()


def test_choose_delay_white_noise():
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert choose_delay(TimeSeries(0, 1, rng.standard_normal(5000))) == 1


def test_choose_delay_constant_and_short():
    with pytest.raises(DegenerateSeriesError):
        choose_delay(TimeSeries(0, 1, np.ones(500)))
    with pytest.raises(LengthError):
        choose_delay(TimeSeries(0, 1, np.arange(50.0)))


def test_choose_delay_bounds():
    rng = np.random.default_rng(2)
    walk = TimeSeries(0, 1, np.cumsum(rng.standard_normal(400)))
    tau = choose_delay(walk)
    assert 1 <= tau <= 100


def test_neighbors_empty_below_min_distance():
    cloud = embed(TimeSeries(0, 1, np.arange(50.0) * 2.0), EmbeddingConfig(m=2, tau=1, theiler=0))
    assert neighbors(cloud, 10, 1.0) == []


def test_identical_points_list_each_other():
    values = np.zeros(40)
    values[5] = values[30] = 7.0
    cloud = embed(TimeSeries(0, 1, values), EmbeddingConfig(m=1, tau=1, theiler=3))
    assert 30 in neighbors(cloud, 5, 1e-9)
    assert 5 in neighbors(cloud, 30, 1e-9)


def test_neighbors_validation():
    cloud = embed(TimeSeries(0, 1, np.arange(20.0)), EmbeddingConfig(m=2))
    with pytest.raises(ConfigError):
        neighbors(cloud, 100, 0.1)
    with pytest.raises(ConfigError):
        neighbors(cloud, 0, 0.0)


@pytest.fixture(scope="module")
def chaotic_cloud():
    from qsdchaos.duffing import ClassicalState, DuffingParams, integrate_classical

    x = integrate_classical(DuffingParams(0.125), ClassicalState(0.5, 0.2), 2 * math.pi / 200, 40_000)
    series = TimeSeries(0, x.dt * 40, x.values[::40][:1003])
    return embed(series, EmbeddingConfig(m=4, tau=2))


def test_grid_matches_brute_force_on_chaotic_cloud(chaotic_cloud):
    assert len(chaotic_cloud) == 1001 - 3 * 2
    rng = np.random.default_rng(11)
    for _ in range(20):
        i = int(rng.integers(len(chaotic_cloud)))
        eps = float(rng.uniform(0.01, 0.5))
        assert neighbors(chaotic_cloud, i, eps) == brute_neighbors(chaotic_cloud, i, eps)


def test_neighbor_symmetry_and_monotonicity(chaotic_cloud):
    grid_small = NeighborGrid(chaotic_cloud, 0.1)
    grid_large = NeighborGrid(chaotic_cloud, 0.2)
    for i in range(0, len(chaotic_cloud), 37):
        small = grid_small.query(i)
        for j in small:
            assert i in grid_small.query(int(j))
        assert set(small) <= set(grid_large.query(i))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    m=st.integers(1, 4),
    tau=st.integers(1, 3),
    theiler=st.integers(0, 5),
    eps=st.floats(1e-3, 2.0),
)
def test_grid_matches_brute_force_property(seed, m, tau, theiler, eps):
    rng = np.random.default_rng(seed)
    values = np.round(rng.standard_normal(120), 2)  # rounding creates exact ties
    cloud = embed(TimeSeries(0, 1, values), EmbeddingConfig(m=m, tau=tau, theiler=theiler))
    grid = NeighborGrid(cloud, eps)
    for i in rng.integers(0, len(cloud), 5):
        assert grid.query(int(i)).tolist() == brute_neighbors(cloud, int(i), eps)
