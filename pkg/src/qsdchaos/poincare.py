"""Stroboscopic Poincare sections and their occupancy statistics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import TimeSeries
from .errors import ConfigError, InsufficientDurationError, InsufficientPointsError

GRID_CELLS = 50
POINT_LIKE_MAX = 3
FEW_CYCLE_MAX = 20
MIN_POINTS = 100
R_CLUSTER = 0.05
# Quantum runs cluster at a radius tied to the minimum-uncertainty width
# sqrt(beta/2): structure finer than that is noise, not attractor geometry.
R_CLUSTER_PER_ROOT_BETA = 0.5
BOX_PAD = 0.05


def default_r_cluster(beta: float | None = None) -> float:
    """``0.5 sqrt(beta)`` for quantum series, ``R_CLUSTER`` for classical ones."""
    if beta is None:
        return R_CLUSTER
    if not beta > 0:
        raise ConfigError("beta must be positive")
    return R_CLUSTER_PER_ROOT_BETA * math.sqrt(beta)


class SectionClass(str, enum.Enum):
    POINT_LIKE = "point-like"
    FEW_CYCLE = "few-cycle"
    EXTENDED = "extended"


@dataclass(frozen=True)
class SectionPoints:
    points: np.ndarray = field(repr=False)  # shape (n, 2): columns x, p
    period: float
    phase: float
    times: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class OccupancySummary:
    grid_cells: int
    occupied: int
    cluster_count: int
    n_points: int


def strobe_times(t0: float, t_end: float, period: float, phase: float) -> np.ndarray:
    """Times ``phase + k * period`` inside ``[t0, t_end]``."""
    # Tolerance absorbs rounding in t0 + k*dt against exact strobe multiples.
    tol = 1e-9 * period
    k_first = math.ceil((t0 - phase - tol) / period)
    k_last = math.floor((t_end - phase + tol) / period)
    if k_last < k_first:
        return np.zeros(0)
    times = phase + period * np.arange(k_first, k_last + 1)
    return np.clip(times, t0, t_end)


def strobe(x: TimeSeries, p: TimeSeries, period: float, phase: float = 0.0) -> SectionPoints:
    """Sample ``(x, p)`` once per period by linear interpolation."""
    if not period > 0:
        raise ConfigError("period must be positive")
    if len(x) != len(p) or x.t0 != p.t0 or x.dt != p.dt:
        raise ConfigError("x and p series must share t0, dt and length")
    phase = phase % period
    times = strobe_times(x.t0, x.t_end, period, phase)
    if times.size < 2:
        raise InsufficientDurationError(
            f"only {times.size} strobe time(s) in [{x.t0:g}, {x.t_end:g}] for period {period:g}"
        )
    grid = x.times
    pts = np.column_stack([np.interp(times, grid, x.values), np.interp(times, grid, p.values)])
    pts.setflags(write=False)
    return SectionPoints(points=pts, period=float(period), phase=float(phase), times=times)


def cluster_count(points: np.ndarray, r_cluster: float) -> int:
    """Single-linkage clusters: components of the graph joining points within ``r_cluster``."""
    n = points.shape[0]
    if n == 0:
        return 0
    pairs = cKDTree(points).query_pairs(r_cluster, output_type="ndarray")
    if pairs.size == 0:
        return n
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return int(connected_components(graph, directed=False)[0])


def occupancy(section: SectionPoints, grid_cells: int = GRID_CELLS, r_cluster: float = R_CLUSTER) -> OccupancySummary:
    """Occupied cells on a padded bounding-box grid plus single-linkage cluster count."""
    pts = np.asarray(section.points)
    n = pts.shape[0]
    if n == 0:
        raise InsufficientPointsError("empty section")
    if grid_cells < 1 or not r_cluster > 0:
        raise ConfigError("need grid_cells >= 1 and r_cluster > 0")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    if np.all(hi == lo):
        return OccupancySummary(grid_cells, 1, 1, n)
    width = hi - lo
    # A flat axis gets the other axis' width so the grid stays square-ish.
    width = np.where(width > 0, width, width.max())
    lo = lo - BOX_PAD * width
    span = width * (1 + 2 * BOX_PAD)
    cells = np.clip(((pts - lo) / span * grid_cells).astype(np.int64), 0, grid_cells - 1)
    occupied = int(np.unique(cells[:, 0] * grid_cells + cells[:, 1]).size)
    return OccupancySummary(grid_cells, occupied, cluster_count(pts, r_cluster), n)


def classify_section(
    summary: OccupancySummary,
    point_like_max: int = POINT_LIKE_MAX,
    few_cycle_max: int = FEW_CYCLE_MAX,
    min_points: int = MIN_POINTS,
) -> SectionClass:
    if summary.n_points < min_points:
        raise InsufficientPointsError(
            f"section has {summary.n_points} points, need {min_points} to classify"
        )
    if summary.cluster_count <= point_like_max:
        return SectionClass.POINT_LIKE
    if summary.cluster_count <= few_cycle_max:
        return SectionClass.FEW_CYCLE
    return SectionClass.EXTENDED
