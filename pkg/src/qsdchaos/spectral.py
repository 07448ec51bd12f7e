"""One-sided power spectra and spectral flatness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .core import TimeSeries
from .errors import BandError, ConfigError, LengthError, SegmentationError

FLATNESS_FLOOR = 1e-30
WINDOWS = ("rectangular", "hann")
# Flatness at or above this marks a broadband (chaotic-looking) spectrum.
# Classical chaos sits near 0.02 and periodic orbits near 0; the quantum
# noise floor of a noisy limit cycle at beta=0.01 already reaches 0.023.
BROADBAND_THRESHOLD = 0.03


@dataclass(frozen=True)
class PowerSpectrum:
    frequencies: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    method: str
    segment_len: int
    dt: float

    @property
    def df(self) -> float:
        return 1.0 / (self.segment_len * self.dt)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    def total_power(self) -> float:
        return float(np.sum(self.power) * self.df)

    def peak_frequency(self, exclude_dc: bool = True) -> float:
        start = 1 if exclude_dc else 0
        return float(self.frequencies[start + int(np.argmax(self.power[start:]))])


def _window(name: str, n: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(n)
    if name == "hann":
        return get_window("hann", n, fftbins=True)
    raise ConfigError(f"window must be one of {WINDOWS}")


def _one_sided(values: np.ndarray, dt: float, window: np.ndarray) -> np.ndarray:
    """Power normalized so that ``sum(power) * df == mean((w * (x - mean))**2)``."""
    n = values.size
    y = window * (values - values.mean())
    spec = np.abs(np.fft.rfft(y)) ** 2 * (dt / n)
    if n % 2 == 0:
        spec[1:-1] *= 2.0
    else:
        spec[1:] *= 2.0
    return spec


def periodogram(series: TimeSeries, window: str = "hann") -> PowerSpectrum:
    n = len(series)
    if n < 8:
        raise LengthError("periodogram needs at least 8 samples")
    power = _one_sided(series.values, series.dt, _window(window, n))
    return PowerSpectrum(
        frequencies=np.fft.rfftfreq(n, series.dt),
        power=power,
        method="periodogram",
        segment_len=n,
        dt=series.dt,
    )


def averaged_spectrum(series: TimeSeries, segment_len: int, overlap: float = 0.5) -> PowerSpectrum:
    """Mean of Hann-windowed periodograms over overlapping segments.

    A single segment is accepted only when it covers the whole series, in
    which case the result equals ``periodogram(series, "hann")``.
    """
    n = len(series)
    if segment_len < 8 or segment_len > n:
        raise SegmentationError(f"segment_len must be in [8, {n}]")
    if not 0 <= overlap < 1:
        raise SegmentationError("overlap must be in [0, 1)")
    step = max(1, int(round(segment_len * (1.0 - overlap))))
    starts = range(0, n - segment_len + 1, step)
    if len(starts) < 2 and segment_len != n:
        raise SegmentationError(f"only {len(starts)} segment(s) of length {segment_len} fit")
    win = _window("hann", segment_len)
    power = np.mean(
        [_one_sided(series.values[s : s + segment_len], series.dt, win) for s in starts], axis=0
    )
    return PowerSpectrum(
        frequencies=np.fft.rfftfreq(segment_len, series.dt),
        power=power,
        method="averaged-segments" if len(starts) > 1 else "periodogram",
        segment_len=segment_len,
        dt=series.dt,
    )


def default_band(omega: float = 1.0, harmonics: int = 4) -> tuple[float, float]:
    """Half-open ``(0, harmonics * omega / 2pi]`` band."""
    return 0.0, harmonics * omega / (2 * math.pi)


def spectral_flatness(spectrum: PowerSpectrum, band=None) -> float:
    """Geometric over arithmetic mean of power for ``lo < f <= hi``."""
    lo, hi = default_band() if band is None else band
    f = spectrum.frequencies
    sel = (f > lo) & (f <= hi)
    if not np.any(sel):
        raise BandError(f"band ({lo:g}, {hi:g}] contains no frequency bins")
    p = np.maximum(spectrum.power[sel], FLATNESS_FLOOR)
    arith = float(np.mean(p))
    geo = float(np.exp(np.mean(np.log(p))))
    return min(1.0, geo / arith)


def is_broadband(flatness: float, threshold: float = BROADBAND_THRESHOLD) -> bool:
    return flatness >= threshold
