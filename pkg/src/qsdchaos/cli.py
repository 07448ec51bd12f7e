"""Command-line interface: ``simulate``, ``analyze``, ``sweep`` and ``report``.

Every run writes a manifest next to its outputs. The manifest holds the
fully resolved configuration, so ``qsdchaos --manifest FILE`` repeats the
run and reproduces its CSV files byte for byte.

Configuration comes from three layers, later ones winning: built-in
defaults, a JSON file given with ``--config`` (one object per section:
``simulate``, ``lyap``, ``psd``, ``poincare``, plus ``grid`` and
``workers`` for sweeps), and command-line flags.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import svg
from .core import SeedSpec, TimeSeries, read_csv_columns, series_from_columns, write_columns_csv
from .duffing import ClassicalState, DuffingParams, benettin_lyapunov, final_state, integrate_classical
from .errors import AnalysisError, ConfigError, QsdChaosError, ReportError, TruncationError
from .lyap import ChaosClass, LyapunovEstimate, classify_chaos, estimate_lambda
from .poincare import SectionClass, classify_section, default_r_cluster, occupancy, strobe
from .qsd import (
    RK4_RADIUS_LIMIT,
    QsdParams,
    build_operators,
    coherent_state,
    default_n_basis,
    drift_radius,
    simulate,
)
from .spectral import averaged_spectrum, default_band, is_broadband, periodogram, spectral_flatness

log = logging.getLogger("qsdchaos")

DEFAULT_SEED = 2024
WORKERS_ENV = "QSDCHAOS_WORKERS"
DEFAULT_GRID = ((0.125, 0.01), (0.3, 0.01), (0.125, 0.3), (0.3, 0.3), (0.125, 1.0), (0.3, 1.0))
CLASSICAL_STEPS_PER_PERIOD = 200
CLASSICAL_TRANSIENT_PERIODS = 50
QSD_TRANSIENT_PERIODS = 100
SAMPLES_PER_PERIOD = 100

# Which case of the default grid must show chaos; the beta=0.3 cases are
# reported but not gated.
PAPER_PATTERN = {(0.125, 0.01): True, (0.3, 0.01): False, (0.125, 1.0): False, (0.3, 1.0): False}

# --- configuration schema ------------------------------------------------
# Each entry: key -> (kind, default). ``None`` defaults are resolved from
# the data or from other keys and written back before the run starts.

SIMULATE_SCHEMA = {
    "model": ("choice:qsd,classical", "qsd"),
    "gamma": ("float", 0.3),
    "beta": ("float", 0.3),
    "g": ("float", 0.3),
    "omega": ("float", 1.0),
    "n_basis": ("int?", None),
    "dt": ("float?", None),
    "out_stride": ("int?", None),
    "scheme": ("choice:rk4,euler", "rk4"),
    "periods": ("float", 500.0),
    "transient_periods": ("float?", None),
    "x0": ("float", 1.0),
    "p0": ("float", 0.0),
    "stream": ("int", 0),
    "escalate": ("bool", True),
}
LYAP_SCHEMA = {
    "column": ("str", "x"),
    "m_list": ("ints", [2, 3, 4, 5, 6, 7]),
    "epsilons": ("floats?", None),
    "tau": ("int?", None),
    "theiler": ("int?", None),
    "samples_per_period": ("int", 25),
    "horizon_periods": ("float", 8.0),
    "fit_from": ("int?", None),
    "fit_to": ("int?", None),
    "threshold": ("float", 0.05),
    "omega": ("float?", None),
}
PSD_SCHEMA = {
    "column": ("str", "x"),
    "method": ("choice:averaged,periodogram", "averaged"),
    "window": ("choice:hann,rectangular", "hann"),
    "segment_len": ("int", 8192),
    "overlap": ("float", 0.5),
    "band": ("floats?", None),
    "threshold": ("float", 0.03),
    "omega": ("float?", None),
}
POINCARE_SCHEMA = {
    "grid_cells": ("int", 50),
    "r_cluster": ("float?", None),
    "phase": ("float", 0.0),
    "point_like_max": ("int", 3),
    "few_cycle_max": ("int", 20),
    "min_points": ("int", 100),
    "omega": ("float?", None),
    "beta": ("float?", None),
}
ANALYSIS_SCHEMAS = {"lyap": LYAP_SCHEMA, "psd": PSD_SCHEMA, "poincare": POINCARE_SCHEMA}
# Keys a sweep takes from the simulation instead of the analysis section.
SWEEP_INHERITED = {"omega", "beta", "column"}


def _coerce(kind: str, value, key: str):
    if value is None:
        if kind.endswith("?"):
            return None
        raise ConfigError(f"{key} must not be null")
    base = kind.rstrip("?")
    try:
        if base == "float":
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if base == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if base == "bool":
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if base == "str":
            return str(value)
        if base == "ints":
            return [int(v) for v in (json.loads(value) if isinstance(value, str) else value)]
        if base == "floats":
            return [float(v) for v in (json.loads(value) if isinstance(value, str) else value)]
        if base.startswith("choice:"):
            if value not in base[7:].split(","):
                raise ValueError
            return value
    except (TypeError, ValueError, json.JSONDecodeError):
        raise ConfigError(f"{key}: invalid value {value!r} (expected {base})") from None
    raise AssertionError(kind)


def merge_section(schema: dict, *layers: dict, name: str = "") -> dict:
    """Defaults overlaid with each layer in turn; unknown keys are errors."""
    out = {k: default for k, (_, default) in schema.items()}
    for layer in layers:
        for key, value in (layer or {}).items():
            if key not in schema:
                raise ConfigError(f"unknown key {name + '.' if name else ''}{key}")
            out[key] = value
    return {k: _coerce(schema[k][0], v, f"{name}.{k}" if name else k) for k, v in out.items()}


def _add_schema_flags(parser: argparse.ArgumentParser, schema: dict, prefix: str = "", dest_prefix: str = "",
                      skip=()):
    for key, (kind, default) in schema.items():
        if key in skip:
            continue
        flag = "--" + prefix + key.replace("_", "-")
        dest = dest_prefix + key
        if kind == "bool":
            parser.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction, default=None)
        else:
            parser.add_argument(flag, dest=dest, default=None, metavar=kind.rstrip("?").upper().split(":")[0],
                                help=f"default: {default}")


def _flag_layer(args: argparse.Namespace, schema: dict, dest_prefix: str = "") -> dict:
    layer = {}
    for key in schema:
        value = getattr(args, dest_prefix + key, None)
        if value is not None:
            layer[key] = value
    return layer


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


# --- manifests -----------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(type(obj))


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path: Path, data) -> None:
    text = json.dumps(_clean(data), indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def write_manifest(path: Path, command: str, config: dict, seed: SeedSpec | None, outputs, wall_time: float):
    base = path.parent
    write_json(path, {
        "command": command,
        "config": config,
        "seed": None if seed is None else {"master_seed": seed.master_seed, "stream_index": seed.stream_index},
        "code_version": __version__,
        "outputs": sorted(str(Path(p).relative_to(base)) for p in outputs),
        "wall_time": wall_time,
    })


# --- simulate ------------------------------------------------------------


def resolve_simulate(cfg: dict) -> dict:
    """Fill every data-independent default so the record is explicit."""
    cfg = dict(cfg)
    period = 2 * math.pi / cfg["omega"]
    if cfg["periods"] <= 0:
        raise ConfigError("periods must be positive")
    if cfg["model"] == "classical":
        if cfg["dt"] is None:
            cfg["dt"] = period / CLASSICAL_STEPS_PER_PERIOD
        if cfg["out_stride"] is None:
            cfg["out_stride"] = CLASSICAL_STEPS_PER_PERIOD // SAMPLES_PER_PERIOD
        if cfg["transient_periods"] is None:
            cfg["transient_periods"] = float(CLASSICAL_TRANSIENT_PERIODS)
        cfg["n_basis"] = None
        DuffingParams(cfg["gamma"], cfg["g"], cfg["omega"])
    else:
        if cfg["n_basis"] is None:
            cfg["n_basis"] = default_n_basis(cfg["beta"])
        params = QsdParams(gamma=cfg["gamma"], beta=cfg["beta"], g=cfg["g"], omega=cfg["omega"],
                           n_basis=cfg["n_basis"], dt=cfg["dt"], out_stride=cfg["out_stride"],
                           scheme=cfg["scheme"])
        cfg["dt"] = params.dt
        cfg["out_stride"] = params.out_stride
        if cfg["transient_periods"] is None:
            cfg["transient_periods"] = float(QSD_TRANSIENT_PERIODS)
    if cfg["dt"] <= 0 or cfg["out_stride"] < 1:
        raise ConfigError("dt must be positive and out_stride >= 1")
    if cfg["transient_periods"] < 0:
        raise ConfigError("transient_periods must be >= 0")
    return cfg


def _run_qsd(cfg: dict, seed: SeedSpec):
    period = 2 * math.pi / cfg["omega"]
    duration = (cfg["transient_periods"] + cfg["periods"]) * period
    n_basis, dt, stride = cfg["n_basis"], cfg["dt"], cfg["out_stride"]
    attempts = 2 if cfg["escalate"] else 1
    for attempt in range(attempts):
        params = QsdParams(gamma=cfg["gamma"], beta=cfg["beta"], g=cfg["g"], omega=cfg["omega"],
                           n_basis=n_basis, dt=dt, out_stride=stride, seed=seed, scheme=cfg["scheme"])
        ops = build_operators(n_basis, cfg["beta"], cfg["gamma"])
        try:
            initial = coherent_state(n_basis, cfg["beta"], cfg["x0"], cfg["p0"])
            return params, simulate(params, initial, duration, ops=ops)
        except TruncationError as exc:
            if attempt + 1 == attempts:
                raise
            log.warning("N=%d: %s; retrying with N=%d", n_basis, exc, n_basis + 20)
            n_basis += 20
            # A larger basis has a wider spectrum; refine the step (and keep
            # the output rate) if RK4 would no longer be stable.
            if cfg["scheme"] == "rk4":
                ops = build_operators(n_basis, cfg["beta"], cfg["gamma"])
                k = max(1, math.ceil(drift_radius(ops, cfg["g"]) * dt / RK4_RADIUS_LIMIT))
                dt, stride = dt / k, stride * k
    raise AssertionError("unreachable")


def _discard(series: TimeSeries, transient_time: float) -> TimeSeries:
    k0 = int(round(transient_time / series.dt))
    if k0 >= len(series):
        raise ConfigError("transient discard leaves no samples")
    return TimeSeries(series.t0 + k0 * series.dt, series.dt, series.values[k0:])


def run_simulate(cfg: dict, master_seed: int, out_dir: Path) -> dict:
    """Write ``series.csv``, ``series.json`` and ``series.manifest.json``."""
    start = time.perf_counter()
    cfg = resolve_simulate(cfg)
    seed = SeedSpec(master_seed, cfg["stream"])
    period = 2 * math.pi / cfg["omega"]
    transient_time = cfg["transient_periods"] * period
    if cfg["model"] == "classical":
        params = DuffingParams(cfg["gamma"], cfg["g"], cfg["omega"])
        h = cfg["dt"]
        n_transient = int(round(transient_time / h))
        start_state = final_state(params, ClassicalState(cfg["x0"], cfg["p0"]), h, n_transient)
        n_steps = int(round(cfg["periods"] * period / h))
        x, p = integrate_classical(params, start_state, h, n_steps, momentum=True)
        lam = benettin_lyapunov(params, start_state, h, n_steps)
        s = cfg["out_stride"]
        x = TimeSeries(x.t0, x.dt * s, x.values[::s])
        p = TimeSeries(p.t0, p.dt * s, p.values[::s])
        sidecar = {
            "model": "classical",
            "params": {k: cfg[k] for k in ("gamma", "g", "omega")},
            "lambda_max": lam,
            "lambda_max_per_period": lam * period,
            "T": cfg["periods"] * period,
            "dt": h,
            "sample_dt": x.dt,
            "transient_discard": {"periods": cfg["transient_periods"], "time": transient_time},
            "code_version": __version__,
        }
    else:
        params, result = _run_qsd(cfg, seed)
        x = _discard(result.x, transient_time)
        p = _discard(result.p, transient_time)
        sidecar = {
            "model": "qsd",
            "params": {k: cfg[k] for k in ("gamma", "beta", "g", "omega", "scheme", "x0", "p0")},
            "seed": {"master_seed": seed.master_seed, "stream_index": seed.stream_index},
            "N_initial": cfg["n_basis"],
            "N_final": params.n_basis,
            "dt": params.dt,
            "out_stride": params.out_stride,
            "sample_dt": x.dt,
            "transient_discard": {"periods": cfg["transient_periods"], "time": transient_time},
            "max_tail": result.max_tail,
            "max_imag": result.max_imag,
            "code_version": __version__,
        }
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / "series.csv", out_dir / "series.json"
    write_columns_csv(csv_path, ["t", "x", "p"], [x.times, x.values, p.values])
    write_json(json_path, sidecar)
    write_manifest(out_dir / "series.manifest.json", "simulate", {"simulate": cfg}, seed,
                   [csv_path, json_path], time.perf_counter() - start)
    return {"x": x, "p": p, "sidecar": sidecar, "config": cfg, "outputs": [csv_path, json_path]}


# --- analyze -------------------------------------------------------------


def _sidecar_for(series_path: Path) -> dict:
    side = series_path.with_suffix(".json")
    if side.is_file():
        try:
            return json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            log.warning("ignoring unreadable sidecar %s", side)
    return {}


def resolve_analysis(method: str, cfg: dict, sidecar: dict) -> dict:
    cfg = dict(cfg)
    params = sidecar.get("params", {})
    if "omega" in cfg and cfg["omega"] is None:
        cfg["omega"] = float(params.get("omega", 1.0))
    if method == "poincare":
        if cfg["beta"] is None and "beta" in params:
            cfg["beta"] = float(params["beta"])
        if cfg["r_cluster"] is None:
            cfg["r_cluster"] = default_r_cluster(cfg["beta"])
    if method == "psd" and cfg["band"] is None:
        cfg["band"] = list(default_band(cfg["omega"]))
    if "omega" in cfg and not cfg["omega"] > 0:
        raise ConfigError("omega must be positive")
    return cfg


def _read_xp(path: Path):
    header, data = read_csv_columns(path)
    if header[0] != "t":
        raise ConfigError(f"{path}: first column must be 't'")
    cols = {name: i for i, name in enumerate(header)}
    return header, data, cols


def _column(path: Path, name: str) -> TimeSeries:
    header, data, cols = _read_xp(path)
    if name not in cols:
        if name == "x" and len(header) == 2:
            return series_from_columns(data[:, 0], data[:, 1])
        raise ConfigError(f"{path}: no column {name!r} (have {header})")
    return series_from_columns(data[:, 0], data[:, cols[name]])


def analyze_lyap(series: TimeSeries, cfg: dict, out_dir: Path, title: str = "") -> dict:
    period = 2 * math.pi / cfg["omega"]
    spp = cfg["samples_per_period"] or None
    panel, est = estimate_lambda(
        series, period, samples_per_period=spp, horizon_periods=cfg["horizon_periods"],
        m_list=cfg["m_list"], epsilon_list=cfg["epsilons"], tau=cfg["tau"], theiler=cfg["theiler"],
        fit_from=cfg["fit_from"], fit_to=cfg["fit_to"],
    )
    cls = classify_chaos(est, cfg["threshold"])
    rows = {"m": [], "epsilon": [], "horizon": [], "t": [], "S": []}
    for c in panel:
        n = c.s_values.size
        rows["m"].extend([c.m] * n)
        rows["epsilon"].extend([c.epsilon] * n)
        rows["horizon"].extend(range(n))
        rows["t"].extend(c.times.tolist())
        rows["S"].extend(c.s_values.tolist())
    csv_path = out_dir / "lyap_curves.csv"
    write_columns_csv(csv_path, list(rows), list(rows.values()))
    fitted = isinstance(est, LyapunovEstimate)
    dt = panel[0].dt
    result = {
        "lambda": est.lam if fitted else None,
        "lambda_per_period": est.per_period(period) if fitted else None,
        "fit_from": est.fit_from if fitted else None,
        "fit_to": est.fit_to if fitted else None,
        "r2": est.r_squared if fitted else getattr(est, "best_r_squared", None),
        "classification": cls.value,
        "no_linear_region": not fitted,
        "curves_used": [list(c) for c in est.curves_used],
        "failures": [[m, e, reason] for m, e, reason in panel.failures],
        "tau": panel[0].tau,
        "analysis_dt": dt,
        "t_max": panel[0].t_max,
    }
    json_path = out_dir / "lyap.json"
    write_json(json_path, result)
    fit = (est.lam, est.intercept, est.fit_from * dt, est.fit_to * dt) if fitted else None
    curves = [(c.m, c.epsilon, c.times, c.s_values) for c in panel]
    svg_path = out_dir / "lyap.svg"
    svg_path.write_text(svg.render([[svg.divergence_panel(curves, fit, title)]]), encoding="utf-8")
    return {"result": result, "outputs": [csv_path, json_path, svg_path], "curves": curves, "fit": fit}


def analyze_psd(series: TimeSeries, cfg: dict, out_dir: Path) -> dict:
    if cfg["method"] == "periodogram":
        spec = periodogram(series, cfg["window"])
        seg = len(series)
    else:
        seg = min(cfg["segment_len"], len(series))
        spec = averaged_spectrum(series, seg, cfg["overlap"])
    flat = spectral_flatness(spec, tuple(cfg["band"]))
    broadband = is_broadband(flat, cfg["threshold"])
    csv_path = out_dir / "psd.csv"
    write_columns_csv(csv_path, ["f", "power"], [spec.frequencies, spec.power])
    result = {
        "flatness": flat,
        "band": list(cfg["band"]),
        "method": spec.method,
        "segment_len": seg,
        "peak_frequency": spec.peak_frequency(),
        "df": spec.df,
        "classification": "broadband" if broadband else "narrowband",
    }
    json_path = out_dir / "psd.json"
    write_json(json_path, result)
    return {"result": result, "outputs": [csv_path, json_path]}


def analyze_poincare(x: TimeSeries, p: TimeSeries, cfg: dict, out_dir: Path) -> dict:
    period = 2 * math.pi / cfg["omega"]
    section = strobe(x, p, period, cfg["phase"])
    summary = occupancy(section, cfg["grid_cells"], cfg["r_cluster"])
    cls = classify_section(summary, cfg["point_like_max"], cfg["few_cycle_max"], cfg["min_points"])
    csv_path = out_dir / "section.csv"
    write_columns_csv(csv_path, ["x", "p"], [section.points[:, 0], section.points[:, 1]])
    result = {
        "occupied": summary.occupied,
        "cluster_count": summary.cluster_count,
        "n_points": summary.n_points,
        "grid_cells": summary.grid_cells,
        "r_cluster": cfg["r_cluster"],
        "classification": cls.value,
    }
    json_path = out_dir / "section.json"
    write_json(json_path, result)
    return {"result": result, "outputs": [csv_path, json_path]}


def run_analyze(method: str, series_path: Path, cfg: dict, out_dir: Path) -> dict:
    start = time.perf_counter()
    series_path = Path(series_path).resolve()
    if not series_path.is_file():
        raise ConfigError(f"no such series file: {series_path}")
    cfg = resolve_analysis(method, cfg, _sidecar_for(series_path))
    out_dir.mkdir(parents=True, exist_ok=True)
    if method == "lyap":
        out = analyze_lyap(_column(series_path, cfg["column"]), cfg, out_dir)
    elif method == "psd":
        out = analyze_psd(_column(series_path, cfg["column"]), cfg, out_dir)
    else:
        out = analyze_poincare(_column(series_path, "x"), _column(series_path, "p"), cfg, out_dir)
    stem = {"lyap": "lyap", "psd": "psd", "poincare": "section"}[method]
    config = {"method": method, "series": str(series_path), method: cfg}
    write_manifest(out_dir / f"{stem}.manifest.json", "analyze", config, None, out["outputs"],
                   time.perf_counter() - start)
    return out


# --- sweep ---------------------------------------------------------------

SUMMARY_HEADER = [
    "gamma", "beta", "lambda", "lambda_class", "flatness", "section_class", "status",
    "lambda_per_period", "spectral_class", "cluster_count", "occupied", "n_basis",
]


def _case_dir(out_dir: Path, index: int, gamma: float, beta: float) -> Path:
    return out_dir / f"case{index}_gamma{gamma:g}_beta{beta:g}"


def _sweep_case(job) -> dict:
    index, gamma, beta, cfg, master_seed, case_dir = job
    case_dir = Path(case_dir)
    row = {k: "" for k in SUMMARY_HEADER}
    row.update(gamma=gamma, beta=beta, status="ok")
    try:
        sim_cfg = dict(cfg["simulate"], gamma=gamma, beta=beta, stream=index)
        sim = run_simulate(merge_section(SIMULATE_SCHEMA, sim_cfg, name="simulate"), master_seed, case_dir)
    except QsdChaosError as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
        return row
    row["n_basis"] = sim["sidecar"].get("N_final", "")
    series_csv = case_dir / "series.csv"
    problems = []
    for method in ("lyap", "psd", "poincare"):
        acfg = dict(cfg[method])
        try:
            out = run_analyze(method, series_csv, acfg, case_dir)
        except AnalysisError as exc:
            problems.append(f"{method}: {type(exc).__name__}: {exc}")
            continue
        res = out["result"]
        if method == "lyap":
            row["lambda"] = res["lambda"] if res["lambda"] is not None else float("nan")
            row["lambda_per_period"] = (res["lambda_per_period"]
                                        if res["lambda_per_period"] is not None else float("nan"))
            row["lambda_class"] = res["classification"]
        elif method == "psd":
            row["flatness"] = res["flatness"]
            row["spectral_class"] = res["classification"]
        else:
            row["section_class"] = res["classification"]
            row["cluster_count"] = res["cluster_count"]
            row["occupied"] = res["occupied"]
    if problems:
        row["status"] = "; ".join(problems)
    return row


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_summary(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for row in rows:
        writer.writerow([_format_cell(row[k]) for k in SUMMARY_HEADER])
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_summary(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _worker_count(cfg_workers) -> int:
    if cfg_workers is not None:
        return max(1, int(cfg_workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


def _sweep_figure(out_dir: Path, grid, rows) -> str:
    gammas = sorted({g for g, _ in grid})
    betas = sorted({b for _, b in grid})
    cells: list[list] = [[None] * len(gammas) for _ in betas]
    for i, (g, b) in enumerate(grid):
        title = f"gamma={g:g}, beta={b:g}"
        path = _case_dir(out_dir, i, g, b) / "lyap_curves.csv"
        if not path.is_file():
            cells[betas.index(b)][gammas.index(g)] = svg.Panel(title=title, note=rows[i]["status"][:60])
            continue
        _, data = read_csv_columns(path)
        curves = []
        for m, eps in sorted({(int(r[0]), float(r[1])) for r in data}):
            sel = (data[:, 0] == m) & (data[:, 1] == eps)
            curves.append((m, eps, data[sel, 3], data[sel, 4]))
        res = json.loads((path.parent / "lyap.json").read_text(encoding="utf-8"))
        fit = None
        if res["lambda"] is not None:
            dt = res["analysis_dt"]
            # Intercept of the fitted mean curve, recomputed from the CSV.
            s_mean = np.mean([c[3] for c in curves], axis=0)
            t = np.arange(s_mean.size) * dt
            a, b_ = res["fit_from"], res["fit_to"]
            intercept = float(np.mean(s_mean[a : b_ + 1]) - res["lambda"] * np.mean(t[a : b_ + 1]))
            fit = (res["lambda"], intercept, a * dt, b_ * dt)
        cells[betas.index(b)][gammas.index(g)] = svg.divergence_panel(curves, fit, title)
    return svg.render(cells)


def run_sweep(cfg: dict, master_seed: int, out_dir: Path) -> list[dict]:
    start = time.perf_counter()
    grid = [tuple(map(float, pair)) for pair in cfg["grid"]]
    if not grid:
        raise ConfigError("sweep grid is empty")
    for pair in grid:
        if len(pair) != 2:
            raise ConfigError(f"grid entries must be (gamma, beta) pairs, got {pair}")
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(i, g, b, cfg, master_seed, str(_case_dir(out_dir, i, g, b))) for i, (g, b) in enumerate(grid)]
    workers = min(cfg["workers"], len(jobs))
    if workers <= 1:
        rows = [_sweep_case(job) for job in jobs]
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_case, jobs))
    summary = out_dir / "summary.csv"
    write_summary(summary, rows)
    figure = out_dir / "sweep.svg"
    figure.write_text(_sweep_figure(out_dir, grid, rows), encoding="utf-8")
    write_manifest(out_dir / "sweep.manifest.json", "sweep", cfg, SeedSpec(master_seed, 0),
                   [summary, figure], time.perf_counter() - start)
    return rows


def resolve_sweep(file_cfg: dict, args) -> dict:
    known = {"grid", "workers", "simulate", "lyap", "psd", "poincare"}
    extra = set(file_cfg) - known
    if extra:
        raise ConfigError(f"unknown sweep config keys: {sorted(extra)}")
    sim_layer = dict(file_cfg.get("simulate", {}))
    for key in ("gamma", "beta", "stream"):
        if key in sim_layer:
            raise ConfigError(f"simulate.{key} is set per case by the sweep grid")
    sim = merge_section(SIMULATE_SCHEMA, sim_layer, _flag_layer(args, SIMULATE_SCHEMA, "sim_"), name="simulate")
    for key in ("gamma", "beta", "stream"):
        sim.pop(key)
    out = {"simulate": sim}
    for method, schema in ANALYSIS_SCHEMAS.items():
        layer = dict(file_cfg.get(method, {}))
        bad = SWEEP_INHERITED & set(layer)
        if bad:
            raise ConfigError(f"{method}: {sorted(bad)} come from the simulation in a sweep")
        # Inherited keys stay null here; each case resolves them from its
        # own sidecar and records the values in its analysis manifests.
        out[method] = merge_section(schema, layer, _flag_layer(args, schema, method + "_"), name=method)
    grid = args.grid if args.grid is not None else file_cfg.get("grid", [list(p) for p in DEFAULT_GRID])
    if isinstance(grid, str):
        try:
            grid = json.loads(grid)
        except json.JSONDecodeError:
            raise ConfigError(f"--grid must be JSON, e.g. [[0.125, 0.01]]; got {grid!r}") from None
    out["grid"] = [[float(g), float(b)] for g, b in grid] if grid else []
    if not out["grid"]:
        raise ConfigError("sweep grid is empty")
    workers = args.workers if args.workers is not None else file_cfg.get("workers")
    out["workers"] = _worker_count(workers)
    return out


# --- report --------------------------------------------------------------


def _is_chaotic(row: dict) -> dict:
    return {
        "lyap": row["lambda_class"] == ChaosClass.CHAOTIC.value,
        "spectral": row["spectral_class"] == "broadband",
        "section": row["section_class"] == SectionClass.EXTENDED.value,
    }


def run_report(sweep_dir: Path, out_dir: Path) -> dict:
    start = time.perf_counter()
    summary = Path(sweep_dir) / "summary.csv"
    if not summary.is_file():
        raise ConfigError(f"{sweep_dir} has no summary.csv")
    rows = read_summary(summary)
    cases, excluded = [], []
    for row in rows:
        gamma, beta = float(row["gamma"]), float(row["beta"])
        if row["status"] != "ok":
            excluded.append({"gamma": gamma, "beta": beta, "status": row["status"]})
            continue
        verdict = _is_chaotic(row)
        agree = len(set(verdict.values())) == 1
        case = {"gamma": gamma, "beta": beta, "lambda": float(row["lambda"]), "flatness": float(row["flatness"]),
                "lambda_class": row["lambda_class"], "spectral_class": row["spectral_class"],
                "section_class": row["section_class"], "chaotic": verdict, "agree": agree}
        expected = PAPER_PATTERN.get((gamma, beta))
        if expected is not None:
            case["expected_chaos"] = expected
            case["pattern_ok"] = agree and verdict["lyap"] == expected
        cases.append(case)
    if not cases:
        raise ReportError("sweep has no successful cases")
    concordant = all(c["agree"] for c in cases)
    gated = [c for c in cases if "expected_chaos" in c]
    report = {
        "three_method_concordance": concordant,
        "discordant": [[c["gamma"], c["beta"]] for c in cases if not c["agree"]],
        "paper_pattern_ok": bool(gated) and all(c["pattern_ok"] for c in gated),
        "cases": cases,
        "excluded": excluded,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path, txt_path = out_dir / "report.json", out_dir / "report.txt"
    write_json(json_path, report)
    txt_path.write_text(format_report(report), encoding="utf-8")
    write_manifest(out_dir / "report.manifest.json", "report", {"sweep_dir": str(Path(sweep_dir).resolve())},
                   None, [json_path, txt_path], time.perf_counter() - start)
    return report


def format_report(report: dict) -> str:
    head = f"{'gamma':>7} {'beta':>6} {'lambda':>9} {'flatness':>9} {'lyap':>12} {'spectrum':>11} " \
           f"{'section':>10} {'agree':>6} {'pattern':>8}"
    lines = [head, "-" * len(head)]
    for c in report["cases"]:
        pattern = {True: "ok", False: "MISS"}.get(c.get("pattern_ok"), "-")
        lam = "n/a" if not math.isfinite(c["lambda"]) else f"{c['lambda']:.4f}"
        lines.append(f"{c['gamma']:>7g} {c['beta']:>6g} {lam:>9} {c['flatness']:>9.4f} {c['lambda_class']:>12} "
                     f"{c['spectral_class']:>11} {c['section_class']:>10} {str(c['agree']).lower():>6} "
                     f"{pattern:>8}")
    for e in report["excluded"]:
        lines.append(f"{e['gamma']:>7g} {e['beta']:>6g} excluded: {e['status']}")
    lines.append("")
    lines.append(f"three_method_concordance: {str(report['three_method_concordance']).lower()}")
    lines.append(f"paper_pattern_ok: {str(report['paper_pattern_ok']).lower()}")
    return "\n".join(lines) + "\n"


# --- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdchaos", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
    parser.add_argument("--out-dir", default=None, help="output directory (default: current directory)")
    parser.add_argument("--manifest", default=None, help="repeat the run recorded in this manifest")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="QSD or classical trajectory")
    _add_schema_flags(sim, SIMULATE_SCHEMA)

    ana = sub.add_parser("analyze", help="Lyapunov, spectral or section analysis of a series CSV")
    ana.add_argument("analysis", metavar="method", choices=sorted(ANALYSIS_SCHEMAS))
    ana.add_argument("series", help="CSV with columns t,x[,p] (or t,value)")
    merged = {}
    for schema in ANALYSIS_SCHEMAS.values():
        merged.update(schema)
    _add_schema_flags(ana, merged)

    sw = sub.add_parser("sweep", help="simulate and analyze every (gamma, beta) pair")
    sw.add_argument("--grid", default=None, help="JSON list of [gamma, beta] pairs")
    sw.add_argument("--workers", type=int, default=None, help=f"worker processes (env {WORKERS_ENV})")
    _add_schema_flags(sw, SIMULATE_SCHEMA, dest_prefix="sim_", skip=("gamma", "beta", "stream"))
    for method, schema in ANALYSIS_SCHEMAS.items():
        _add_schema_flags(sw, schema, prefix=method + "-", dest_prefix=method + "_", skip=SWEEP_INHERITED)

    rep = sub.add_parser("report", help="three-method concordance report for a sweep")
    rep.add_argument("sweep_dir")
    return parser


def _execute(command: str, config: dict, master_seed: int, out_dir: Path, extra=None):
    if command == "simulate":
        cfg = merge_section(SIMULATE_SCHEMA, config.get("simulate", {}), name="simulate")
        run_simulate(cfg, master_seed, out_dir)
    elif command == "analyze":
        method = config["method"]
        cfg = merge_section(ANALYSIS_SCHEMAS[method], config.get(method, {}), name=method)
        run_analyze(method, Path(config["series"]), cfg, out_dir)
    elif command == "sweep":
        cfg = dict(config)
        cfg["simulate"] = merge_section(
            SIMULATE_SCHEMA, dict(cfg["simulate"], gamma=0.0, beta=1.0, stream=0), name="simulate")
        for key in ("gamma", "beta", "stream"):
            cfg["simulate"].pop(key)
        rows = run_sweep(cfg, master_seed, out_dir)
        for row in rows:
            print(f"gamma={row['gamma']:g} beta={row['beta']:g} lambda_class={row['lambda_class'] or '-'} "
                  f"spectral={row['spectral_class'] or '-'} section={row['section_class'] or '-'} "
                  f"status={row['status']}")
    elif command == "report":
        report = run_report(Path(config["sweep_dir"]), out_dir)
        sys.stdout.write(format_report(report))
    else:
        raise ConfigError(f"unknown command {command!r}")


def _rerun(args) -> None:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        command, config = manifest["command"], manifest["config"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot use manifest {path}: {exc}") from None
    seed = manifest.get("seed") or {}
    master = args.seed if args.seed is not None else int(seed.get("master_seed", DEFAULT_SEED))
    out_dir = Path(args.out_dir) if args.out_dir else path.parent
    _execute(command, config, master, out_dir)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.manifest:
            _rerun(args)
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        file_cfg = _load_config_file(args.config)
        master = args.seed if args.seed is not None else int(file_cfg.pop("seed", DEFAULT_SEED))
        file_cfg.pop("seed", None)
        out_dir = Path(args.out_dir) if args.out_dir else Path.cwd()
        if args.command == "simulate":
            cfg = merge_section(SIMULATE_SCHEMA, file_cfg.get("simulate", {}), _flag_layer(args, SIMULATE_SCHEMA),
                                name="simulate")
            run_simulate(cfg, master, out_dir)
        elif args.command == "analyze":
            schema = ANALYSIS_SCHEMAS[args.analysis]
            cfg = merge_section(schema, file_cfg.get(args.analysis, {}), _flag_layer(args, schema),
                                name=args.analysis)
            run_analyze(args.analysis, Path(args.series), cfg, out_dir)
        elif args.command == "sweep":
            _execute("sweep", resolve_sweep(file_cfg, args), master, out_dir)
        elif args.command == "report":
            out = Path(args.out_dir) if args.out_dir else Path(args.sweep_dir)
            _execute("report", {"sweep_dir": args.sweep_dir}, master, out)
        return 0
    except QsdChaosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
