"""Shared time-series record, seeding and serialization."""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RangeError

BINARY_MAGIC = b"QCTSBIN\x00"
BINARY_VERSION = 1
_HEADER = struct.Struct("<8sII")  # 16 bytes: magic, version, reserved


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal; sample ``k`` sits at ``t0 + k*dt``."""

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not self.dt > 0 or not np.isfinite(self.dt):
            raise ConfigError(f"dt must be positive and finite, got {self.dt!r}")
        if not np.isfinite(self.t0):
            raise ConfigError(f"t0 must be finite, got {self.t0!r}")
        if values.size == 0:
            raise ConfigError("TimeSeries needs at least one sample")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ConfigError(f"non-finite sample at index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)

    def slice(self, from_index: int, to_index: int) -> "TimeSeries":
        return slice_series(self, from_index, to_index)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.t0 == other.t0
            and self.dt == other.dt
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def slice_series(series: TimeSeries, from_index: int, to_index: int) -> TimeSeries:
    """Half-open index slice ``[from_index, to_index)`` with ``t0`` shifted."""
    n = len(series)
    if not (0 <= from_index < to_index <= n):
        raise RangeError(
            f"invalid slice [{from_index}, {to_index}) of series with {n} samples"
        )
    return TimeSeries(
        t0=series.t0 + from_index * series.dt,
        dt=series.dt,
        values=series.values[from_index:to_index],
    )


def decimate(series: TimeSeries, factor: int) -> TimeSeries:
    """Every ``factor``-th sample, starting with the first."""
    factor = int(factor)
    if factor < 1:
        raise ConfigError("decimation factor must be >= 1")
    return TimeSeries(series.t0, series.dt * factor, series.values[::factor])


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must fit in an unsigned 64-bit integer")
        if int(self.stream_index) < 0:
            raise ConfigError("stream_index must be non-negative")

    def child(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, index)


def derive_rng(seed: SeedSpec) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(master_seed, stream_index)``.

    Streams come from ``SeedSequence`` spawn keys, so they do not depend on
    the order in which they are requested.
    """
    ss = np.random.SeedSequence(
        entropy=int(seed.master_seed), spawn_key=(int(seed.stream_index),)
    )
    return np.random.Generator(np.random.PCG64(ss))


# --- serialization -------------------------------------------------------


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(series: TimeSeries, path) -> None:
    buf = io.StringIO()
    buf.write("t,value\n")
    for t, v in zip(series.times, series.values):
        buf.write(f"{format_float(t)},{format_float(v)}\n")
    _write_text(path, buf.getvalue())


def write_columns_csv(path, header, columns) -> None:
    """Write equal-length numeric columns with 17-significant-digit floats."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(_fmt_cell(c) for c in row) + "\n")
    _write_text(path, buf.getvalue())


def _fmt_cell(c):
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        return str(int(c))
    if isinstance(c, str):
        return c
    return format_float(c)


def _write_text(path, text):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def read_csv_columns(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    if data.size == 0:
        raise ConfigError(f"{path}: no data rows")
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: header has {len(header)} columns, rows have {data.shape[1]}")
    return header, data


def series_from_columns(t: np.ndarray, values: np.ndarray) -> TimeSeries:
    """Rebuild a TimeSeries from a time column, checking it is uniform."""
    if t.size == 1:
        raise ConfigError("cannot infer dt from a single sample")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise ConfigError("time column is not uniformly sampled")
    return TimeSeries(t0=t[0], dt=dt, values=values)


def read_csv(path, column: str | None = None) -> TimeSeries:
    """Read ``t,value`` CSV (or pick ``column`` from a wider one, e.g. ``t,x,p``)."""
    header, data = read_csv_columns(path)
    if header[0] != "t":
        raise ConfigError(f"{path}: first column must be 't'")
    if column is None:
        col = 1
    elif column in header:
        col = header.index(column)
    else:
        raise ConfigError(f"{path}: no column {column!r} (have {header})")
    return series_from_columns(data[:, 0], data[:, col])


def write_binary(series: TimeSeries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, 0))
        fh.write(struct.pack("<dd", series.t0, series.dt))
        fh.write(series.values.astype("<f8").tobytes())


def read_binary(path) -> TimeSeries:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic, version, _ = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != BINARY_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        if version != BINARY_VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        t0, dt = struct.unpack("<dd", fh.read(16))
        payload = fh.read()
    if (size - 32) % 8:
        raise ConfigError(f"{path}: truncated payload")
    return TimeSeries(t0=t0, dt=dt, values=np.frombuffer(payload, dtype="<f8"))
