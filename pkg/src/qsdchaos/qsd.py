"""Quantum state diffusion for the driven damped Duffing oscillator.

The state lives on the lowest ``N`` Fock states. With ``beta`` acting as
an effective Planck constant (``[X, P] = i beta``)::

    X = sqrt(beta/2) (a + a^dag)        P = i sqrt(beta/2) (a^dag - a)
    H(t) = P^2/2 - X^2/2 + X^4/4 + (gamma/2)(XP + PX) - g cos(omega t) X
    L = sqrt(2 gamma) a

and each trajectory obeys the Ito equation::

    d|psi> = -(i/beta) H |psi> dt
             + (<L^dag> L - L^dag L / 2 - <L^dag><L> / 2) |psi> dt
             + (L - <L>) |psi> dxi

The ``(gamma/2)(XP + PX)`` term and the sign of the drive make the
Ehrenfest equations reduce to ``dx/dt = p``,
``dp/dt = x - x^3 - 2 gamma p + g cos(omega t)`` as ``beta -> 0``, the
same equation as :mod:`qsdchaos.duffing`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import SeedSpec, TimeSeries, derive_rng
from .errors import ConfigError, InstabilityError, TruncationError

TAIL_FRACTION = 0.1
TAIL_LIMIT = 1e-6
COLLAPSE_NORM = 1e-6
STEPS_PER_PERIOD = 10_000
DEFAULT_OUT_STRIDE = 100
DEFAULT_TRANSIENT_PERIODS = 100
NOISE_CHUNK = 65_536
# RK4 is stable on the imaginary axis up to |z| = 2.83; leave some margin.
RK4_RADIUS_LIMIT = 2.0

SCHEMES = ("rk4", "euler")


def default_n_basis(beta: float) -> int:
    """Starting Fock truncation: 60 at beta=0.3, 300 at beta=0.01."""
    return int(20 * math.ceil((2.5 / beta + 45.0) / 20.0))


@dataclass(frozen=True)
class QsdParams:
    gamma: float
    beta: float
    g: float = 0.3
    omega: float = 1.0
    n_basis: int | None = None
    dt: float | None = None  # None -> period / 10^4, refined until RK4 is stable
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0, 0))
    out_stride: int | None = None  # None -> DEFAULT_OUT_STRIDE per 10^4 steps per period
    scheme: str = "rk4"

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.gamma < 0 or self.g < 0:
            raise ConfigError("gamma and g must be non-negative")
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        if self.n_basis is None:
            object.__setattr__(self, "n_basis", default_n_basis(self.beta))
        if int(self.n_basis) < 2:
            raise ConfigError("n_basis must be >= 2")
        refine = 1
        if self.dt is None:
            refine = stable_refinement(int(self.n_basis), self.beta, self.gamma, self.g, self.period)
            object.__setattr__(self, "dt", self.period / (STEPS_PER_PERIOD * refine))
        if self.out_stride is None:
            object.__setattr__(self, "out_stride", DEFAULT_OUT_STRIDE * refine)
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if int(self.out_stride) < 1:
            raise ConfigError("out_stride must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        object.__setattr__(self, "n_basis", int(self.n_basis))
        object.__setattr__(self, "out_stride", int(self.out_stride))

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


@dataclass(frozen=True)
class FockState:
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if amps.size < 2:
            raise ConfigError("Fock state needs at least two amplitudes")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_basis(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockState":
        return FockState(self.amplitudes / self.norm)

    def expect(self, op: np.ndarray) -> complex:
        psi = self.amplitudes
        return complex(np.vdot(psi, op @ psi) / np.vdot(psi, psi).real)

    def tail_population(self, fraction: float = TAIL_FRACTION) -> float:
        return _tail(self.amplitudes, _tail_count(self.n_basis, fraction))

    def padded(self, n_basis: int) -> "FockState":
        """Embed into a larger basis with zero amplitudes on the new states."""
        if n_basis < self.n_basis:
            raise ConfigError("cannot pad to a smaller basis")
        out = np.zeros(n_basis, dtype=np.complex128)
        out[: self.n_basis] = self.amplitudes
        return FockState(out)


def _tail_count(n_basis, fraction=TAIL_FRACTION):
    return max(1, int(math.ceil(fraction * n_basis)))


@njit(cache=True)
def _tail(psi, count):
    n = psi.size
    tot = 0.0
    top = 0.0
    for k in range(n):
        w = psi[k].real ** 2 + psi[k].imag ** 2
        tot += w
        if k >= n - count:
            top += w
    return top / tot


@dataclass(frozen=True)
class OperatorSet:
    a: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    H0: np.ndarray = field(repr=False)
    Hdrive: np.ndarray = field(repr=False)
    beta: float = 1.0
    gamma: float = 0.0

    @property
    def n_basis(self) -> int:
        return self.a.shape[0]

    @property
    def number(self) -> np.ndarray:
        return self.a.conj().T @ self.a


def build_operators(n_basis: int, beta: float, gamma: float = 0.0) -> OperatorSet:
    """Truncated ladder, quadrature and Hamiltonian matrices.

    ``gamma`` adds the ``(gamma/2)(XP + PX)`` term to ``H0``; the default
    of zero gives the bare double well ``P^2/2 - X^2/2 + X^4/4``.
    ``Hdrive`` is ``X``; the time-dependent Hamiltonian is
    ``H0 - g cos(omega t) Hdrive``.
    """
    if n_basis < 2:
        raise ConfigError("n_basis must be >= 2")
    if not beta > 0:
        raise ConfigError("beta must be positive")
    s = np.sqrt(np.arange(1, n_basis, dtype=np.float64))
    a = np.diag(s, k=1).astype(np.complex128)
    ad = a.conj().T
    c = math.sqrt(beta / 2.0)
    X = c * (a + ad)
    P = 1j * c * (ad - a)
    X2 = X @ X
    H0 = 0.5 * (P @ P) - 0.5 * X2 + 0.25 * (X2 @ X2)
    if gamma:
        H0 = H0 + 0.5 * gamma * (X @ P + P @ X)
    H0 = 0.5 * (H0 + H0.conj().T)
    return OperatorSet(a=a, X=X, P=P, H0=H0, Hdrive=X.copy(), beta=float(beta), gamma=float(gamma))


def drift_radius(ops: OperatorSet, g: float) -> float:
    """Upper estimate of the drift generator's spectral radius (1/time)."""
    h = np.max(np.abs(np.linalg.eigvalsh(ops.H0)))
    x = np.max(np.abs(np.linalg.eigvalsh(ops.X)))
    return float((h + g * x) / ops.beta + ops.gamma * (ops.n_basis - 1))


@functools.lru_cache(maxsize=64)
def stable_refinement(n_basis: int, beta: float, gamma: float, g: float, period: float) -> int:
    """Smallest k such that RK4 with ``dt = period / (10^4 k)`` is stable."""
    radius = drift_radius(build_operators(n_basis, beta, gamma), g)
    return max(1, math.ceil(radius * period / (STEPS_PER_PERIOD * RK4_RADIUS_LIMIT)))


def _to_dia(matrix: np.ndarray, tol: float = 0.0):
    """Row-aligned diagonal storage: ``data[k, i] = M[i, i + offsets[k]]``."""
    n = matrix.shape[0]
    offsets = []
    rows = []
    for off in range(-n + 1, n):
        diag = np.diagonal(matrix, offset=off)
        if np.any(np.abs(diag) > tol):
            row = np.zeros(n, dtype=np.complex128)
            if off >= 0:
                row[: n - off] = diag
            else:
                row[-off:] = diag
            offsets.append(off)
            rows.append(row)
    if not offsets:
        return np.zeros(1, dtype=np.int64), np.zeros((1, n), dtype=np.complex128)
    return np.array(offsets, dtype=np.int64), np.array(rows)


@njit(cache=True)
def _dia_matvec(offsets, data, psi, out):
    n = psi.size
    for i in range(n):
        out[i] = 0.0
    for k in range(offsets.size):
        off = offsets[k]
        lo = max(0, -off)
        hi = min(n, n - off)
        for i in range(lo, hi):
            out[i] += data[k, i] * psi[i + off]


@njit(cache=True)
def _drift(psi, t, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, out, xpsi, lpsi):
    """Ito drift of the normalized QSD equation; also leaves ``L psi`` in ``lpsi``."""
    n = psi.size
    _dia_matvec(h_off, h_dat, psi, out)
    _dia_matvec(x_off, x_dat, psi, xpsi)
    drive = g * math.cos(omega * t)
    nrm = 0.0
    lexp = 0.0j
    for i in range(n - 1):
        lpsi[i] = ell * math.sqrt(i + 1.0) * psi[i + 1]
    lpsi[n - 1] = 0.0
    for i in range(n):
        nrm += psi[i].real ** 2 + psi[i].imag ** 2
        lexp += np.conj(psi[i]) * lpsi[i]
    lexp /= nrm
    lc = np.conj(lexp)
    l2 = 0.5 * (lexp.real ** 2 + lexp.imag ** 2)
    for i in range(n):
        hpsi = out[i] - drive * xpsi[i]
        out[i] = (
            -1j * inv_beta * hpsi
            + lc * lpsi[i]
            - 0.5 * ell * ell * nvec[i] * psi[i]
            - l2 * psi[i]
        )
    return lexp


@njit(cache=True)
def _step(psi, t, dt, dxi, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, rk4, work):
    """Advance ``psi`` in place by one step; returns the pre-normalization norm."""
    n = psi.size
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    xpsi = work[5]
    lpsi = work[6]
    noise = work[7]
    lexp = _drift(psi, t, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, k1, xpsi, lpsi)
    for i in range(n):
        noise[i] = (lpsi[i] - lexp * psi[i]) * dxi
    if rk4:
        h2 = 0.5 * dt
        for i in range(n):
            tmp[i] = psi[i] + h2 * k1[i]
        _drift(tmp, t + h2, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, k2, xpsi, lpsi)
        for i in range(n):
            tmp[i] = psi[i] + h2 * k2[i]
        _drift(tmp, t + h2, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, k3, xpsi, lpsi)
        for i in range(n):
            tmp[i] = psi[i] + dt * k3[i]
        _drift(tmp, t + dt, h_off, h_dat, x_off, x_dat, ell, nvec, inv_beta, g, omega, k4, xpsi, lpsi)
        for i in range(n):
            psi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) + noise[i]
    else:
        for i in range(n):
            psi[i] += dt * k1[i] + noise[i]
    nrm = 0.0
    for i in range(n):
        nrm += psi[i].real ** 2 + psi[i].imag ** 2
    nrm = math.sqrt(nrm)
    if nrm >= COLLAPSE_NORM and math.isfinite(nrm):
        for i in range(n):
            psi[i] /= nrm
    return nrm


@njit(cache=True)
def _expect_xp(psi, x_off, x_dat, p_off, p_dat, buf):
    _dia_matvec(x_off, x_dat, psi, buf)
    ex = 0.0j
    for i in range(psi.size):
        ex += np.conj(psi[i]) * buf[i]
    _dia_matvec(p_off, p_dat, psi, buf)
    ep = 0.0j
    for i in range(psi.size):
        ep += np.conj(psi[i]) * buf[i]
    return ex, ep


@njit(cache=True)
def _run(psi, t0, k0, dt, noise, stride, h_off, h_dat, x_off, x_dat, q_off, q_dat, p_off, p_dat,
         ell, nvec, inv_beta, g, omega, rk4, tail_count, xs, ps, ns, tails, imag_max, work):
    """Integrate ``noise.size`` steps from global step ``k0``.

    Samples are recorded after each step whose global index is a multiple
    of ``stride``. Returns ``(n_recorded, bad_step)`` with ``bad_step = -1``
    on success.
    """
    nrec = 0
    for j in range(noise.size):
        k = k0 + j
        nrm = _step(psi, t0 + k * dt, dt, noise[j], h_off, h_dat, x_off, x_dat,
                    ell, nvec, inv_beta, g, omega, rk4, work)
        if not (nrm >= COLLAPSE_NORM and math.isfinite(nrm)):
            return nrec, k + 1
        if (k + 1) % stride == 0:
            ex, ep = _expect_xp(psi, q_off, q_dat, p_off, p_dat, work[4])
            xs[nrec] = ex.real
            ps[nrec] = ep.real
            occ = 0.0
            for i in range(psi.size):
                occ += nvec[i] * (psi[i].real ** 2 + psi[i].imag ** 2)
            ns[nrec] = occ
            imag_max[0] = max(imag_max[0], abs(ex.imag), abs(ep.imag))
            tails[nrec] = _tail(psi, tail_count)
            nrec += 1
    return nrec, -1


class _Kernel:
    """Banded operator data prepared once per ``(params, ops)``."""

    def __init__(self, ops: OperatorSet, params: QsdParams):
        if ops.n_basis != params.n_basis:
            raise ConfigError("operator set and params disagree on n_basis")
        self.h = _to_dia(ops.H0)
        self.x = _to_dia(ops.Hdrive)
        self.xq = _to_dia(ops.X)
        self.p = _to_dia(ops.P)
        self.ell = math.sqrt(2.0 * params.gamma)
        self.nvec = np.arange(params.n_basis, dtype=np.float64)
        self.inv_beta = 1.0 / params.beta
        self.params = params
        self.work = np.zeros((8, params.n_basis), dtype=np.complex128)

    def step(self, psi, t, dxi):
        p = self.params
        return _step(psi, t, p.dt, complex(dxi), *self.h, *self.x, self.ell, self.nvec,
                     self.inv_beta, p.g, p.omega, p.scheme == "rk4", self.work)


def qsd_step(state: FockState, ops: OperatorSet, params: QsdParams, t: float, dxi: complex,
             return_norm: bool = False):
    """One normalized QSD step from time ``t`` with complex increment ``dxi``.

    With ``return_norm`` the pre-normalization norm is returned as well.
    Raises :class:`InstabilityError` if that norm collapses below 1e-6 or is
    not finite.
    """
    psi = np.array(state.amplitudes, dtype=np.complex128)
    nrm = _Kernel(ops, params).step(psi, t, dxi)
    if not (nrm >= COLLAPSE_NORM and math.isfinite(nrm)):
        raise InstabilityError(f"state norm {nrm:g} at t={t:g}; reduce dt", time=t)
    out = FockState(psi)
    return (out, nrm) if return_norm else out


def wiener_increments(rng: np.random.Generator, n: int, dt: float) -> np.ndarray:
    """Complex increments with ``E[dxi dxi*] = dt`` and ``E[dxi^2] = 0``."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if n == 0:
        return np.zeros(0, dtype=np.complex128)
    z = rng.standard_normal((n, 2))
    return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(dt / 2.0)


def coherent_state(n_basis: int, beta: float, x0: float, p0: float) -> FockState:
    """Truncated coherent state with ``<X> = x0`` and ``<P> = p0``."""
    if n_basis < 2 or not beta > 0:
        raise ConfigError("need n_basis >= 2 and beta > 0")
    alpha = (x0 + 1j * p0) / math.sqrt(2.0 * beta)
    amps = np.zeros(n_basis, dtype=np.complex128)
    amps[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for k in range(1, n_basis):
        amps[k] = amps[k - 1] * alpha / math.sqrt(k)
    state = FockState(amps)
    tail = state.tail_population()
    if tail >= TAIL_LIMIT:
        raise TruncationError(
            f"coherent state |alpha|^2={abs(alpha) ** 2:.3g} puts {tail:.3g} in the "
            f"top {_tail_count(n_basis)} of {n_basis} Fock states",
            time=0.0, tail=tail,
        )
    return state.normalized()


@dataclass(frozen=True)
class ExpectationSeries:
    x: TimeSeries
    p: TimeSeries
    params: QsdParams
    n: TimeSeries | None = None  # <a^dag a>
    max_imag: float = 0.0
    max_tail: float = 0.0


def simulate(params: QsdParams, initial: FockState, duration: float,
             ops: OperatorSet | None = None, t0: float = 0.0) -> ExpectationSeries:
    """Single QSD trajectory; ``<X>`` and ``<P>`` every ``out_stride`` steps.

    The noise stream is drawn from ``derive_rng(params.seed)`` in fixed-size
    chunks, so a given seed always produces the same trajectory. Raises
    :class:`TruncationError` at the first recorded sample whose tail
    population reaches the limit.
    """
    if not duration > 0:
        raise ConfigError("duration must be positive")
    if initial.n_basis != params.n_basis:
        raise ConfigError(
            f"initial state has {initial.n_basis} amplitudes, params expect {params.n_basis}"
        )
    if abs(initial.norm - 1.0) > 1e-10:
        raise ConfigError("initial state must be normalized")
    if ops is None:
        ops = build_operators(params.n_basis, params.beta, params.gamma)
    if params.scheme == "rk4":
        z = drift_radius(ops, params.g) * params.dt
        if z > 2.8:
            raise InstabilityError(
                f"dt={params.dt:.3g} puts the RK4 drift at |z|={z:.2f} > 2.8; reduce dt",
                step=0, time=t0,
            )
    kern = _Kernel(ops, params)
    stride = params.out_stride
    n_steps = int(round(duration / params.dt))
    n_rec = n_steps // stride
    rng = derive_rng(params.seed)
    tail_count = _tail_count(params.n_basis)

    psi = np.array(initial.amplitudes)
    xs = np.empty(n_rec + 1)
    ps = np.empty(n_rec + 1)
    ns = np.empty(n_rec + 1)
    ns[0] = float(np.sum(np.arange(psi.size) * np.abs(psi) ** 2))
    tails = np.empty(n_rec + 1)
    x0, p0 = _expect_xp(psi, *kern.xq, *kern.p, kern.work[4])
    xs[0], ps[0] = x0.real, p0.real
    tails[0] = _tail(psi, tail_count)
    imag_max = np.array([max(abs(x0.imag), abs(p0.imag))])
    out_dt = params.dt * stride
    _check_tail(tails[:1], 0, t0, out_dt)

    rec = 1
    k = 0
    while k < n_steps:
        n = min(NOISE_CHUNK, n_steps - k)
        noise = wiener_increments(rng, n, params.dt)
        got, bad = _run(psi, t0, k, params.dt, noise, stride, *kern.h, *kern.x, *kern.xq, *kern.p,
                        kern.ell, kern.nvec, kern.inv_beta, params.g, params.omega,
                        params.scheme == "rk4", tail_count,
                        xs[rec:], ps[rec:], ns[rec:], tails[rec:], imag_max, kern.work)
        _check_tail(tails[rec : rec + got], rec, t0, out_dt)
        if bad >= 0:
            raise InstabilityError(
                f"QSD step {bad} (t={t0 + bad * params.dt:.6g}) lost its norm; reduce dt",
                step=bad, time=t0 + bad * params.dt,
            )
        rec += got
        k += n
    return ExpectationSeries(
        x=TimeSeries(t0, out_dt, xs),
        p=TimeSeries(t0, out_dt, ps),
        params=params,
        n=TimeSeries(t0, out_dt, ns),
        max_imag=float(imag_max[0]),
        max_tail=float(tails.max()),
    )


def _check_tail(tails, offset, t0, out_dt):
    over = np.flatnonzero(tails >= TAIL_LIMIT)
    if over.size:
        i = int(over[0])
        t = t0 + (offset + i) * out_dt
        raise TruncationError(
            f"Fock tail population {tails[i]:.3g} >= {TAIL_LIMIT:g} at t={t:.6g}; "
            "increase n_basis",
            time=t, tail=float(tails[i]),
        )
