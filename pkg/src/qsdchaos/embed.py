"""Delay embedding, delay selection and fixed-radius neighbor search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import TimeSeries
from .errors import ConfigError, DegenerateSeriesError, LengthError

MI_BINS = 16
MI_SHIFTS = 16
MI_WINDOW = 3


@dataclass(frozen=True)
class EmbeddingConfig:
    m: int
    tau: int = 1
    theiler: int | None = None  # None -> tau * m

    def __post_init__(self):
        if self.m < 1 or self.tau < 1:
            raise ConfigError("embedding needs m >= 1 and tau >= 1")
        if self.theiler is None:
            object.__setattr__(self, "theiler", self.tau * self.m)
        elif self.theiler < 0:
            raise ConfigError("theiler window must be >= 0")

    @property
    def span(self) -> int:
        """Index offset of the last coordinate, ``(m - 1) * tau``."""
        return (self.m - 1) * self.tau


@dataclass(frozen=True)
class EmbeddedCloud:
    """Point ``i`` is ``(s[i], s[i + tau], ..., s[i + (m-1) tau])``."""

    points: np.ndarray = field(repr=False)
    source_len: int
    config: EmbeddingConfig

    def __len__(self):
        return self.points.shape[0]


def embed(series: TimeSeries, config: EmbeddingConfig) -> EmbeddedCloud:
    n = len(series)
    if n <= config.span:
        raise LengthError(
            f"series of length {n} too short for m={config.m}, tau={config.tau}"
        )
    windows = sliding_window_view(series.values, config.span + 1)
    points = np.ascontiguousarray(windows[:, :: config.tau])
    points.setflags(write=False)
    return EmbeddedCloud(points=points, source_len=n, config=config)


# --- delay selection -----------------------------------------------------


def _mutual_information(codes: np.ndarray, lag: int, bins: int) -> float:
    a = codes[:-lag] if lag else codes
    b = codes[lag:]
    joint = np.bincount(a * bins + b, minlength=bins * bins).astype(np.float64)
    joint /= joint.sum()
    pa = joint.reshape(bins, bins).sum(axis=1)
    pb = joint.reshape(bins, bins).sum(axis=0)
    outer = np.outer(pa, pb).ravel()
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))


def _shifted_codes(values: np.ndarray, bins: int, shifts: int) -> list[np.ndarray]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        raise DegenerateSeriesError("constant series has no delay structure")
    width = (hi - lo) / bins
    out = []
    for s in range(shifts):
        # Offsetting the grid by s/shifts of a cell needs one extra bin.
        origin = lo - width * s / shifts
        out.append(np.minimum(((values - origin) / width).astype(np.int64), bins))
    return out


def mutual_information_curve(
    values: np.ndarray, max_lag: int, bins: int = MI_BINS, shifts: int = MI_SHIFTS
) -> np.ndarray:
    """Histogram mutual information (nats) for lags ``0..max_lag``.

    The estimate is averaged over ``shifts`` histogram grids offset by a
    fraction of a cell, which suppresses the aliasing jitter a single grid
    shows on strictly periodic input.
    """
    codes = _shifted_codes(np.asarray(values, dtype=np.float64), bins, shifts)
    return np.array(
        [np.mean([_mutual_information(c, k, bins + 1) for c in codes]) for k in range(max_lag + 1)]
    )


def choose_delay(series: TimeSeries, bins: int = MI_BINS) -> int:
    """First minimum of the lagged mutual information.

    A lag counts as the minimum when no lag within ``MI_WINDOW`` on either
    side has lower information. Falls back to the first lag where the
    autocorrelation drops below ``1/e`` when no minimum exists before
    ``len(series) // 4``.
    """
    values = series.values
    n = len(values)
    if n < 100:
        raise LengthError("choose_delay needs at least 100 samples")
    max_lag = n // 4
    codes = _shifted_codes(values, bins, MI_SHIFTS)
    cache: dict[int, float] = {}

    def mi(k: int) -> float:
        if k not in cache:
            cache[k] = float(np.mean([_mutual_information(c, k, bins + 1) for c in codes]))
        return cache[k]

    # Histogram estimator bias for independent samples; at or below it the
    # signal is already decorrelated at lag 1.
    bias = (bins - 1) ** 2 / (2.0 * n)
    if mi(1) <= 2.0 * bias:
        return 1
    for k in range(1, max_lag - MI_WINDOW + 1):
        here = mi(k)
        if all(here <= mi(j) for j in range(max(0, k - MI_WINDOW), k + MI_WINDOW + 1)):
            return k
    centered = values - values.mean()
    acf = np.correlate(centered, centered[: n - max_lag], mode="valid")[: max_lag + 1]
    acf = acf / acf[0]
    below = np.flatnonzero(acf < np.exp(-1.0))
    if below.size and below[0] >= 1:
        return int(below[0])
    return max_lag


# --- neighbor search -----------------------------------------------------


class NeighborGrid:
    """Box-assisted fixed-radius search under the max norm.

    Points are binned into square cells of side ``epsilon`` on the first
    and last embedding coordinates; a query scans the 3x3 block of cells
    around the reference point and filters candidates by full max-norm
    distance and the Theiler window.
    """

    def __init__(self, cloud: EmbeddedCloud, epsilon: float):
        if not epsilon > 0:
            raise ConfigError("epsilon must be positive")
        self.cloud = cloud
        self.epsilon = float(epsilon)
        pts = cloud.points
        self._cols = (0, pts.shape[1] - 1)
        # Cells slightly wider than epsilon so rounding in the division can
        # never put two in-range points more than one cell apart.
        cells = np.floor(pts[:, self._cols] / (self.epsilon * (1 + 1e-9))).astype(np.int64)
        order = np.lexsort((cells[:, 1], cells[:, 0]))
        sorted_cells = cells[order]
        breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
        bounds = np.concatenate(([0], breaks, [len(order)]))
        self._buckets = {
            (int(sorted_cells[a, 0]), int(sorted_cells[a, 1])): order[a:b]
            for a, b in zip(bounds[:-1], bounds[1:])
        }
        self._cells = cells

    def candidates(self, index: int) -> np.ndarray:
        cx, cy = (int(c) for c in self._cells[index])
        empty = np.empty(0, dtype=np.int64)
        parts = [
            self._buckets.get((cx + dx, cy + dy), empty) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
        ]
        return np.concatenate(parts)

    def query(self, index: int) -> np.ndarray:
        pts = self.cloud.points
        cand = self.candidates(index)
        dist = np.max(np.abs(pts[cand] - pts[index]), axis=1)
        keep = (dist <= self.epsilon) & (np.abs(cand - index) > self.cloud.config.theiler)
        return np.sort(cand[keep])


def neighbors(cloud: EmbeddedCloud, index: int, epsilon: float) -> list[int]:
    """Indices within max-norm ``epsilon`` of point ``index``.

    Temporal neighbors with ``|i - j| <= theiler`` (and the point itself)
    are excluded. For repeated queries build a :class:`NeighborGrid` once.
    """
    if not 0 <= index < len(cloud):
        raise ConfigError(f"index {index} outside cloud of {len(cloud)} points")
    return NeighborGrid(cloud, epsilon).query(index).tolist()
