"""Classical driven damped Duffing oscillator and its Benettin Lyapunov exponent.

Equation of motion (scaled units)::

    dx/dt = p
    dp/dt = x - x**3 - 2*gamma*p + g*cos(omega*t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import TimeSeries
from .errors import ConfigError, InstabilityError

DEFAULT_G = 0.3
DEFAULT_OMEGA = 1.0
DEFAULT_RENORM_INTERVAL = 10
DEFAULT_TRANSIENT_PERIODS = 50


@dataclass(frozen=True)
class DuffingParams:
    gamma: float
    g: float = DEFAULT_G
    omega: float = DEFAULT_OMEGA

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        if self.gamma < 0 or self.g < 0:
            raise ConfigError("gamma and g must be non-negative")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


@dataclass(frozen=True)
class ClassicalState:
    x: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.p, self.t)):
            raise ConfigError("classical state must be finite")


def duffing_rhs(state: ClassicalState, params: DuffingParams) -> tuple[float, float]:
    return _rhs(state.x, state.p, state.t, params.gamma, params.g, params.omega)


def energy(x, p):
    """Undriven, undamped Hamiltonian ``p^2/2 - x^2/2 + x^4/4``."""
    return 0.5 * p * p - 0.5 * x * x + 0.25 * x**4


@njit(cache=True)
def _rhs(x, p, t, gamma, g, omega):
    return p, x - x * x * x - 2.0 * gamma * p + g * math.cos(omega * t)


@njit(cache=True)
def _rk4_path(x, p, t0, dt, n_steps, gamma, g, omega):
    xs = np.empty(n_steps + 1)
    ps = np.empty(n_steps + 1)
    xs[0] = x
    ps[0] = p
    h2 = 0.5 * dt
    for k in range(n_steps):
        t = t0 + k * dt
        k1x, k1p = _rhs(x, p, t, gamma, g, omega)
        k2x, k2p = _rhs(x + h2 * k1x, p + h2 * k1p, t + h2, gamma, g, omega)
        k3x, k3p = _rhs(x + h2 * k2x, p + h2 * k2p, t + h2, gamma, g, omega)
        k4x, k4p = _rhs(x + dt * k3x, p + dt * k3p, t + dt, gamma, g, omega)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if not (math.isfinite(x) and math.isfinite(p)):
            return xs, ps, k + 1
        xs[k + 1] = x
        ps[k + 1] = p
    return xs, ps, -1


@njit(cache=True)
def _tangent_rhs(x, p, dx, dp, t, gamma, g, omega):
    fx, fp = _rhs(x, p, t, gamma, g, omega)
    return fx, fp, dp, (1.0 - 3.0 * x * x) * dx - 2.0 * gamma * dp


@njit(cache=True)
def _benettin(x, p, dx, dp, t0, dt, n_steps, renorm, gamma, g, omega):
    norm0 = math.sqrt(dx * dx + dp * dp)
    dx /= norm0
    dp /= norm0
    total = 0.0
    h2 = 0.5 * dt
    for k in range(n_steps):
        t = t0 + k * dt
        a1, b1, c1, d1 = _tangent_rhs(x, p, dx, dp, t, gamma, g, omega)
        a2, b2, c2, d2 = _tangent_rhs(
            x + h2 * a1, p + h2 * b1, dx + h2 * c1, dp + h2 * d1, t + h2, gamma, g, omega
        )
        a3, b3, c3, d3 = _tangent_rhs(
            x + h2 * a2, p + h2 * b2, dx + h2 * c2, dp + h2 * d2, t + h2, gamma, g, omega
        )
        a4, b4, c4, d4 = _tangent_rhs(
            x + dt * a3, p + dt * b3, dx + dt * c3, dp + dt * d3, t + dt, gamma, g, omega
        )
        x += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        p += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        dx += dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        dp += dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        if (k + 1) % renorm == 0 or k + 1 == n_steps:
            norm = math.sqrt(dx * dx + dp * dp)
            if not (norm > 1e-290 and norm < 1e290) or not math.isfinite(x):
                return total, k + 1
            total += math.log(norm)
            dx /= norm
            dp /= norm
    return total, -1


def integrate_classical(
    params: DuffingParams,
    initial: ClassicalState,
    dt: float,
    n_steps: int,
    momentum: bool = False,
):
    """Fixed-step RK4 trajectory over ``n_steps`` steps.

    Returns the ``x`` TimeSeries (``n_steps + 1`` samples starting at
    ``initial.t``), or the pair ``(x, p)`` when ``momentum`` is true.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if n_steps < 0:
        raise ConfigError("n_steps must be non-negative")
    xs, ps, bad = _rk4_path(
        initial.x, initial.p, initial.t, dt, int(n_steps),
        params.gamma, params.g, params.omega,
    )
    if bad >= 0:
        raise InstabilityError(
            f"classical integration diverged at step {bad}", step=bad, time=initial.t + bad * dt
        )
    x = TimeSeries(initial.t, dt, xs)
    if momentum:
        return x, TimeSeries(initial.t, dt, ps)
    return x


def final_state(params: DuffingParams, initial: ClassicalState, dt: float, n_steps: int) -> ClassicalState:
    x, p = integrate_classical(params, initial, dt, n_steps, momentum=True)
    return ClassicalState(float(x.values[-1]), float(p.values[-1]), initial.t + n_steps * dt)


def benettin_lyapunov(
    params: DuffingParams,
    initial: ClassicalState,
    dt: float,
    n_steps: int,
    renorm_interval: int = DEFAULT_RENORM_INTERVAL,
    transient_steps: int = 0,
    tangent: tuple[float, float] = (1.0, 0.0),
) -> float:
    """Largest Lyapunov exponent from the variational equations.

    The tangent vector is integrated alongside the orbit with the Jacobian
    ``[[0, 1], [1 - 3x^2, -2*gamma]]`` and renormalized every
    ``renorm_interval`` steps; the exponent is the accumulated log stretch
    divided by ``n_steps * dt``. ``transient_steps`` are integrated first
    and not counted.
    """
    if renorm_interval < 1:
        raise ConfigError("renorm_interval must be >= 1")
    if n_steps < 1 or not dt > 0:
        raise ConfigError("need n_steps >= 1 and dt > 0")
    if math.hypot(*tangent) == 0:
        raise ConfigError("initial tangent vector must be nonzero")
    start = initial
    if transient_steps:
        start = final_state(params, initial, dt, transient_steps)
    total, bad = _benettin(
        start.x, start.p, float(tangent[0]), float(tangent[1]), start.t, dt,
        int(n_steps), int(renorm_interval), params.gamma, params.g, params.omega,
    )
    if bad >= 0:
        raise InstabilityError(
            f"tangent vector under/overflow before renormalization at step {bad}; "
            "reduce renorm_interval",
            step=bad,
        )
    return total / (n_steps * dt)
