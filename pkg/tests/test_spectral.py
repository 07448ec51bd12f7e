import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdchaos.core import TimeSeries
from qsdchaos.errors import BandError, LengthError, SegmentationError
from qsdchaos.spectral import (
    PowerSpectrum,
    averaged_spectrum,
    default_band,
    periodogram,
    spectral_flatness,
)


def tone(f0, n, dt, phase=0.3):
    t = np.arange(n) * dt
    return TimeSeries(0.0, dt, np.sin(2 * math.pi * f0 * t + phase))


def windowed_mean_square(values, window):
    n = values.size
    w = np.ones(n) if window == "rectangular" else np.sin(np.pi * np.arange(n) / n) ** 2
    y = w * (values - values.mean())
    return float(np.mean(y * y))


def test_pure_tone_single_bin():
    dt = 0.05
    n = 2000
    f0 = 7 / (n * dt)  # integer number of periods
    spec = periodogram(tone(f0, n, dt), "rectangular")
    k = int(np.argmax(spec.power))
    assert spec.frequencies[k] == pytest.approx(f0)
    assert spec.power[k] / spec.power.sum() > 0.99


def test_constant_series_has_no_power():
    spec = periodogram(TimeSeries(0, 0.1, np.full(64, 3.2)), "hann")
    assert np.all(spec.power < 1e-25)


def test_spectrum_axes():
    spec = periodogram(tone(1.0, 100, 0.01), "hann")
    assert spec.frequencies[-1] == pytest.approx(spec.nyquist) == pytest.approx(50.0)
    assert np.all(np.diff(spec.frequencies) > 0)
    assert np.all(spec.power >= 0)
    assert spec.frequencies.size == spec.power.size


@pytest.mark.parametrize("window", ["rectangular", "hann"])
@pytest.mark.parametrize("n", [8, 9, 100, 1001])
def test_parseval_periodogram(window, n):
    rng = np.random.default_rng(n)
    series = TimeSeries(0, 0.37, rng.standard_normal(n) + 2.0)
    spec = periodogram(series, window)
    expected = windowed_mean_square(series.values, window)
    assert spec.total_power() == pytest.approx(expected, rel=1e-6)


def test_length_error():
    with pytest.raises(LengthError):
        periodogram(TimeSeries(0, 1, np.arange(7.0)))


def test_white_noise_flat_over_realizations():
    rng = np.random.default_rng(9)
    power = np.mean(
        [periodogram(TimeSeries(0, 1, rng.standard_normal(512)), "hann").power for _ in range(50)],
        axis=0,
    )
    assert np.max(power[1:-1]) < 5 * np.median(power[1:-1])


def test_single_segment_equals_hann_periodogram():
    rng = np.random.default_rng(1)
    series = TimeSeries(0, 0.1, rng.standard_normal(256))
    avg = averaged_spectrum(series, 256, 0.0)
    ref = periodogram(series, "hann")
    assert np.allclose(avg.power, ref.power, rtol=1e-12, atol=0)


def test_averaged_peak_matches_periodogram():
    dt = 0.05
    series = tone(1.3, 8192, dt)
    full = periodogram(series, "hann")
    avg = averaged_spectrum(series, 1024, 0.5)
    assert abs(avg.peak_frequency() - full.peak_frequency()) <= avg.df


def test_averaged_parseval_on_stationary_input():
    rng = np.random.default_rng(2)
    series = TimeSeries(0, 0.2, rng.standard_normal(2**16))
    avg = averaged_spectrum(series, 1024, 0.5)
    assert avg.method == "averaged-segments"
    # Each periodogram carries the windowed mean square, so the average
    # estimates var(x) * mean(w^2) = var(x) * 3/8 for a Hann window.
    expected = np.var(series.values) * 3 / 8
    assert avg.total_power() == pytest.approx(expected, rel=0.02)


def test_segmentation_errors():
    series = TimeSeries(0, 0.1, np.arange(100.0))
    with pytest.raises(SegmentationError):
        averaged_spectrum(series, 80, 0.0)
    with pytest.raises(SegmentationError):
        averaged_spectrum(series, 200, 0.0)
    with pytest.raises(SegmentationError):
        averaged_spectrum(series, 50, 1.0)


def make_spectrum(power, df=0.1):
    power = np.asarray(power, dtype=float)
    n = 2 * (power.size - 1)
    return PowerSpectrum(np.arange(power.size) * df, power, "periodogram", n, 1 / (n * df))


def test_flatness_examples():
    assert spectral_flatness(make_spectrum(np.ones(101)), (0, 5)) == pytest.approx(1.0)
    spiky = np.zeros(101)
    spiky[20] = 1.0
    assert spectral_flatness(make_spectrum(spiky), (0, 5)) < 1e-20
    with pytest.raises(BandError):
        spectral_flatness(make_spectrum(np.ones(101)), (20, 30))


def test_white_noise_flatness():
    rng = np.random.default_rng(3)
    series = TimeSeries(0, 1, rng.standard_normal(50 * 256))
    spec = averaged_spectrum(series, 256, 0.0)
    assert spectral_flatness(spec, (0, 0.5)) > 0.7


def test_default_band():
    lo, hi = default_band(1.0)
    assert lo == 0 and hi == pytest.approx(4 / (2 * math.pi))


@settings(max_examples=40, deadline=None)
@given(
    dt=st.floats(1e-3, 10.0),
    k=st.integers(1, 200),
    n=st.integers(512, 2048),
)
def test_tone_lands_in_its_bin(dt, k, n):
    f0 = (k + 0.3) / (n * dt)
    spec = periodogram(tone(f0, n, dt), "hann")
    peak = np.argmax(spec.power[1:]) + 1
    assert abs(spec.frequencies[peak] - f0) <= 0.5 * spec.df + 1e-12 * f0


def test_flatness_non_decreasing_under_mixing():
    rng = np.random.default_rng(4)
    flat = make_spectrum(rng.uniform(0.5, 1.5, 101))
    peaked = np.full(101, 1e-6)
    peaked[30] = 50.0
    values = []
    for alpha in np.linspace(0, 1, 21):
        mixed = make_spectrum(alpha * flat.power + (1 - alpha) * peaked)
        values.append(spectral_flatness(mixed, (0, 10)))
    assert np.all(np.diff(values) >= -1e-12)
    assert all(0 <= v <= 1 for v in values)
