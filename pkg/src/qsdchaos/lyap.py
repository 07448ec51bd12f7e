"""Kantz divergence curves and maximal Lyapunov exponent fits.

For a delay-embedded series the divergence curve is::

    S(t) = < ln( mean_{j in U(i)} |s[i + span + t] - s[j + span + t]| ) >_i

where ``U(i)`` are the max-norm ``epsilon`` neighbors of reference point
``i`` outside the Theiler window and ``span = (m - 1) * tau`` selects the
last embedding coordinate. A straight segment of ``S`` against time has
slope equal to the maximal exponent.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import TimeSeries, decimate
from .embed import EmbeddingConfig, NeighborGrid, choose_delay, embed
from .errors import ConfigError, InsufficientNeighborsError, LengthError, PanelError

log = logging.getLogger(__name__)

N_MIN = 5
DEFAULT_M_LIST = (2, 3, 4, 5, 6, 7)
DEFAULT_MAX_REFS = 2000
MIN_FIT_POINTS = 10
R2_MIN = 0.98
CHAOS_THRESHOLD = 0.05
# Analysis resolution for drive-period-sampled series. Coarser than the
# simulator output so that the short diffusive rise quantum noise puts at
# the start of every curve spans fewer than MIN_FIT_POINTS steps.
SAMPLES_PER_PERIOD = 25
HORIZON_PERIODS = 8


class ChaosClass(str, enum.Enum):
    CHAOTIC = "chaotic"
    NOT_CHAOTIC = "not-chaotic"


@dataclass(frozen=True)
class DivergenceCurve:
    m: int
    epsilon: float
    s_values: np.ndarray = field(repr=False)
    ref_count: int
    dt: float
    tau: int = 1

    @property
    def t_max(self) -> int:
        return self.s_values.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.s_values.size)


@dataclass(frozen=True)
class LyapunovEstimate:
    lam: float
    fit_from: int
    fit_to: int
    r_squared: float
    curves_used: tuple[tuple[int, float], ...]
    intercept: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        if not self.fit_from < self.fit_to:
            raise ConfigError("fit_from must be < fit_to")

    def per_period(self, period: float) -> float:
        return self.lam * period


@dataclass(frozen=True)
class NoLinearRegion:
    """Fit outcome when no window passes the linearity test.

    Treated as absence of evidence for chaos, not as an error.
    """

    curves_used: tuple[tuple[int, float], ...]
    best_r_squared: float = 0.0

    lam = float("nan")


class DivergencePanel(list):
    """List of curves that also records the ``(m, epsilon, reason)`` failures."""

    def __init__(self, curves=(), failures=()):
        super().__init__(curves)
        self.failures = list(failures)


def default_epsilons(series: TimeSeries, count: int = 4) -> list[float]:
    """Geometric ladder from sigma/100 to sigma/10."""
    sigma = float(np.std(series.values))
    if sigma == 0:
        raise LengthError("constant series has no neighborhood scale")
    return list(np.geomspace(sigma / 100.0, sigma / 10.0, count))


def _reference_indices(usable: int, max_refs: int | None) -> np.ndarray:
    if max_refs is None or usable <= max_refs:
        return np.arange(usable)
    return np.unique(np.linspace(0, usable - 1, max_refs).round().astype(np.int64))


def kantz_divergence(
    series: TimeSeries,
    config: EmbeddingConfig,
    epsilon: float,
    t_max: int,
    n_min: int = N_MIN,
    max_refs: int | None = DEFAULT_MAX_REFS,
) -> DivergenceCurve:
    """Divergence curve ``S(t)`` for horizons ``0..t_max``.

    Only points whose horizon stays inside the series take part, either as
    references or as neighbors. At most ``max_refs`` evenly spaced reference
    points are used (``None`` uses all). References with fewer than
    ``n_min`` neighbors, or with an exactly zero mean separation at some
    horizon, are skipped.
    """
    if t_max < 1:
        raise ConfigError("t_max must be >= 1")
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    x = series.values
    span = config.span
    usable = len(series) - span - t_max
    if usable < 2:
        raise LengthError(
            f"series of length {len(series)} too short for span {span} and t_max {t_max}"
        )
    head = TimeSeries(series.t0, series.dt, x[: usable + span])
    cloud = embed(head, config)
    grid = NeighborGrid(cloud, epsilon)
    horizon = np.arange(t_max + 1)

    total = np.zeros(t_max + 1)
    count = 0
    for i in _reference_indices(usable, max_refs):
        nbrs = grid.query(int(i))
        if nbrs.size < n_min:
            continue
        ref = x[i + span + horizon]
        sep = np.abs(x[(nbrs + span)[:, None] + horizon] - ref).mean(axis=0)
        if np.any(sep == 0):
            continue
        total += np.log(sep)
        count += 1
    if count == 0:
        raise InsufficientNeighborsError(
            f"no reference point has {n_min} neighbors within epsilon={epsilon:g} "
            f"(m={config.m}); increase epsilon"
        )
    return DivergenceCurve(
        m=config.m,
        epsilon=float(epsilon),
        s_values=total / count,
        ref_count=count,
        dt=series.dt,
        tau=config.tau,
    )


def divergence_panel(
    series: TimeSeries,
    m_list=DEFAULT_M_LIST,
    epsilon_list=None,
    t_max: int = 200,
    tau: int | None = None,
    theiler: int | None = None,
    n_min: int = N_MIN,
    max_refs: int | None = DEFAULT_MAX_REFS,
) -> DivergencePanel:
    """Curves for every ``(m, epsilon)`` pair; failing pairs are recorded.

    ``tau`` defaults to :func:`choose_delay` and ``epsilon_list`` to
    :func:`default_epsilons`.
    """
    m_list = list(m_list)
    if epsilon_list is None:
        epsilon_list = default_epsilons(series)
    epsilon_list = list(epsilon_list)
    if not m_list or not epsilon_list:
        raise ConfigError("m_list and epsilon_list must be non-empty")
    if tau is None:
        tau = choose_delay(series)
    panel = DivergencePanel()
    for m in m_list:
        config = EmbeddingConfig(m=m, tau=tau, theiler=theiler)
        for eps in epsilon_list:
            try:
                panel.append(
                    kantz_divergence(series, config, eps, t_max, n_min=n_min, max_refs=max_refs)
                )
            except (InsufficientNeighborsError, LengthError) as exc:
                log.info("skipping m=%d eps=%g: %s", m, eps, exc)
                panel.failures.append((m, float(eps), str(exc)))
    if not panel:
        raise PanelError(f"all {len(m_list) * len(epsilon_list)} (m, epsilon) combinations failed")
    return panel


# --- slope fitting -------------------------------------------------------


def _line_fit(t: np.ndarray, s: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(t, s, 1)
    resid = s - (slope * t + intercept)
    ss_tot = float(np.sum((s - s.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(intercept), min(max(r2, 0.0), 1.0)


def window_r_squared(s: np.ndarray, min_points: int = MIN_FIT_POINTS):
    """r^2 of the least-squares line for every window ``[a, b]`` of ``s``.

    Returns ``(starts, ends, r2)`` flattened over all windows with at least
    ``min_points`` samples. Uses prefix sums; the abscissa is the index.
    """
    n = s.size
    idx = np.arange(n, dtype=np.float64)
    c1 = np.concatenate([[0.0], np.cumsum(idx)])
    c2 = np.concatenate([[0.0], np.cumsum(idx * idx)])
    cy = np.concatenate([[0.0], np.cumsum(s)])
    cyy = np.concatenate([[0.0], np.cumsum(s * s)])
    cxy = np.concatenate([[0.0], np.cumsum(idx * s)])
    a, b = np.triu_indices(n, k=min_points - 1)
    k = (b - a + 1).astype(np.float64)
    sx = c1[b + 1] - c1[a]
    sxx = c2[b + 1] - c2[a]
    sy = cy[b + 1] - cy[a]
    syy = cyy[b + 1] - cyy[a]
    sxy = cxy[b + 1] - cxy[a]
    vxx = sxx - sx * sx / k
    vyy = syy - sy * sy / k
    vxy = sxy - sx * sy / k
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(vyy > 1e-300 * k, vxy * vxy / (vxx * vyy), 0.0)
    return a, b, np.clip(r2, 0.0, 1.0)


def mean_curve(curves) -> tuple[np.ndarray, float]:
    curves = list(curves)
    if not curves:
        raise ConfigError("need at least one curve")
    dt = curves[0].dt
    if any(c.dt != dt for c in curves):
        raise ConfigError("curves have different sample intervals")
    length = min(c.s_values.size for c in curves)
    return np.mean([c.s_values[:length] for c in curves], axis=0), dt


def fit_lambda(
    curves,
    fit_from: int | None = None,
    fit_to: int | None = None,
    r2_min: float = R2_MIN,
    min_points: int = MIN_FIT_POINTS,
):
    """Least-squares slope of the pointwise-mean divergence curve.

    With explicit bounds the window ``[fit_from, fit_to]`` (horizon indices,
    inclusive) is fitted as given. Otherwise every window of at least
    ``min_points`` horizons inside the first half of the curve is scanned
    and the longest one with ``r^2 >= r2_min`` wins, earlier start breaking
    ties. Returns :class:`NoLinearRegion` when nothing qualifies.
    """
    curves = list(curves)
    s, dt = mean_curve(curves)
    used = tuple((c.m, c.epsilon) for c in curves)
    if fit_from is not None or fit_to is not None:
        lo = 0 if fit_from is None else int(fit_from)
        hi = s.size - 1 if fit_to is None else int(fit_to)
        if not 0 <= lo < hi < s.size:
            raise ConfigError(f"fit window [{lo}, {hi}] outside curve of {s.size} points")
        t = dt * np.arange(lo, hi + 1)
        slope, intercept, r2 = _line_fit(t, s[lo : hi + 1])
        return LyapunovEstimate(slope, lo, hi, r2, used, intercept, dt)

    half = s[: s.size // 2 + 1]
    if half.size < min_points:
        return NoLinearRegion(used)
    a, b, r2 = window_r_squared(half, min_points)
    ok = r2 >= r2_min
    if not np.any(ok):
        return NoLinearRegion(used, float(r2.max(initial=0.0)))
    length = np.where(ok, b - a, -1)
    best_len = length.max()
    cand = np.flatnonzero(length == best_len)
    pick = cand[np.argmin(a[cand])]
    lo, hi = int(a[pick]), int(b[pick])
    t = dt * np.arange(lo, hi + 1)
    slope, intercept, r2_fit = _line_fit(t, s[lo : hi + 1])
    return LyapunovEstimate(slope, lo, hi, r2_fit, used, intercept, dt)


def classify_chaos(estimate, threshold: float = CHAOS_THRESHOLD) -> ChaosClass:
    if isinstance(estimate, NoLinearRegion) or not estimate.lam >= threshold:
        return ChaosClass.NOT_CHAOTIC
    return ChaosClass.CHAOTIC


def analysis_stride(series: TimeSeries, period: float, samples_per_period: int = SAMPLES_PER_PERIOD) -> int:
    """Decimation factor bringing ``series`` close to the analysis rate."""
    if not period > 0 or samples_per_period < 1:
        raise ConfigError("period and samples_per_period must be positive")
    return max(1, int(round(period / (series.dt * samples_per_period))))


def estimate_lambda(
    series: TimeSeries,
    period: float,
    samples_per_period: int | None = SAMPLES_PER_PERIOD,
    horizon_periods: float = HORIZON_PERIODS,
    m_list=DEFAULT_M_LIST,
    epsilon_list=None,
    tau: int | None = None,
    theiler: int | None = None,
    fit_from: int | None = None,
    fit_to: int | None = None,
):
    """Default pipeline: decimate, build the panel, fit.

    ``samples_per_period=None`` keeps the series at its own rate. Returns
    ``(panel, estimate)``.
    """
    if samples_per_period is not None:
        series = decimate(series, analysis_stride(series, period, samples_per_period))
    t_max = max(1, int(round(horizon_periods * period / series.dt)))
    panel = divergence_panel(series, m_list, epsilon_list, t_max, tau=tau, theiler=theiler)
    return panel, fit_lambda(panel, fit_from, fit_to)
