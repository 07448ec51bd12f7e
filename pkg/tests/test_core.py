import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdchaos.core import (
    SeedSpec,
    TimeSeries,
    derive_rng,
    read_binary,
    read_csv,
    slice_series,
    write_binary,
    write_csv,
)
from qsdchaos.errors import ConfigError, RangeError


def test_rng_same_stream_is_reproducible():
    a = derive_rng(SeedSpec(42, 0)).standard_normal(100)
    b = derive_rng(SeedSpec(42, 0)).standard_normal(100)
    assert np.array_equal(a, b)


def test_rng_distinct_streams_differ():
    a = derive_rng(SeedSpec(42, 0)).standard_normal(100)
    b = derive_rng(SeedSpec(42, 1)).standard_normal(100)
    assert not np.any(a == b)


def test_rng_moments():
    n = 10**6
    z = derive_rng(SeedSpec(42, 0)).standard_normal(n)
    assert abs(z.mean()) < 4 / math.sqrt(n)
    assert abs(z.var() - 1) < 0.01


def test_rng_streams_uncorrelated():
    n = 10**5
    a = derive_rng(SeedSpec(7, 3)).standard_normal(n)
    b = derive_rng(SeedSpec(7, 4)).standard_normal(n)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(n)


def test_seed_spec_validation():
    with pytest.raises(ConfigError):
        SeedSpec(-1, 0)
    with pytest.raises(ConfigError):
        SeedSpec(1, -1)


def test_timeseries_invariants():
    with pytest.raises(ConfigError):
        TimeSeries(0.0, 0.0, [1.0])
    with pytest.raises(ConfigError):
        TimeSeries(0.0, 1.0, [])
    with pytest.raises(ConfigError):
        TimeSeries(0.0, 1.0, [1.0, float("nan")])
    s = TimeSeries(2.0, 0.5, [1.0, 2.0, 3.0])
    assert np.allclose(s.times, [2.0, 2.5, 3.0])
    assert not s.values.flags.writeable


def test_slice_examples():
    s = TimeSeries(1.0, 0.1, [3.0, 4.0, 5.0])
    assert slice_series(s, 0, 3) == s
    one = slice_series(s, 0, 1)
    assert one.values.tolist() == [3.0]
    tail = s.slice(1, 3)
    assert tail.t0 == pytest.approx(1.1)
    assert tail.dt == 0.1
    with pytest.raises(RangeError):
        slice_series(s, 1, 1)
    with pytest.raises(RangeError):
        slice_series(s, 0, 4)
    with pytest.raises(RangeError):
        slice_series(s, -1, 2)


@given(
    n=st.integers(2, 60),
    data=st.data(),
)
def test_slice_composition(n, data):
    s = TimeSeries(0.25, 0.5, np.arange(n, dtype=float))
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(a + 1, n))
    c = data.draw(st.integers(0, b - a - 1))
    d = data.draw(st.integers(c + 1, b - a))
    lhs = slice_series(slice_series(s, a, b), c, d)
    rhs = slice_series(s, a + c, a + d)
    assert np.array_equal(lhs.values, rhs.values)
    assert lhs.t0 == pytest.approx(rhs.t0, rel=0, abs=1e-12)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50)
@given(
    values=st.lists(finite, min_size=2, max_size=50),
    t0=st.floats(-1e6, 1e6, allow_nan=False),
    dt=st.floats(1e-6, 1e3, allow_nan=False),
)
def test_binary_roundtrip_exact(tmp_path_factory, values, t0, dt):
    path = tmp_path_factory.mktemp("bin") / "s.bin"
    s = TimeSeries(t0, dt, values)
    write_binary(s, path)
    back = read_binary(path)
    assert back == s
    with open(path, "rb") as fh:
        assert len(fh.read(16)) == 16


@settings(max_examples=50)
@given(values=st.lists(finite, min_size=2, max_size=50))
def test_csv_values_roundtrip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    s = TimeSeries(0.0, 0.125, values)
    write_csv(s, path)
    back = read_csv(path)
    assert np.array_equal(back.values, s.values)
    assert back.dt == s.dt


def test_csv_header_and_digits(tmp_path):
    path = tmp_path / "s.csv"
    write_csv(TimeSeries(0.0, 0.1, [1 / 3, 2.0]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,value"
    assert lines[1] == "0,0.33333333333333331"
