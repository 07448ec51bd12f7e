"""Minimal SVG line plots for divergence curves and the sweep grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
FIT_COLOR = "#d62728"


@dataclass
class Line:
    x: np.ndarray
    y: np.ndarray
    color: str = PALETTE[0]
    width: float = 1.0
    dash: str | None = None


@dataclass
class Panel:
    lines: list[Line] = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    note: str = ""


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, count: int = 4) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _bounds(lines: list[Line]):
    xs = [ln.x[np.isfinite(ln.y)] for ln in lines if len(ln.x)]
    ys = [ln.y[np.isfinite(ln.y)] for ln in lines if len(ln.y)]
    xs = [a for a in xs if a.size]
    ys = [a for a in ys if a.size]
    if not xs:
        return 0.0, 1.0, 0.0, 1.0
    x0, x1 = min(a.min() for a in xs), max(a.max() for a in xs)
    y0, y1 = min(a.min() for a in ys), max(a.max() for a in ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    return float(x0), float(x1), float(y0 - pad), float(y1 + pad)


def _panel_elements(panel: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 52.0, 12.0, 24.0, 36.0
    pw, ph = w - left - right, h - top - bottom
    x0, x1, y0, y1 = _bounds(panel.lines)

    def sx(v):
        return ox + left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return oy + top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<rect x="{_fmt(ox + left)}" y="{_fmt(oy + top)}" width="{_fmt(pw)}" height="{_fmt(ph)}" '
        'fill="none" stroke="#000" stroke-width="0.8"/>'
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(sx(t))}" y1="{_fmt(oy + top + ph)}" x2="{_fmt(sx(t))}" '
                   f'y2="{_fmt(oy + top + ph + 4)}" stroke="#000" stroke-width="0.8"/>')
        out.append(f'<text x="{_fmt(sx(t))}" y="{_fmt(oy + top + ph + 15)}" font-size="10" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_fmt(ox + left - 4)}" y1="{_fmt(sy(t))}" x2="{_fmt(ox + left)}" '
                   f'y2="{_fmt(sy(t))}" stroke="#000" stroke-width="0.8"/>')
        out.append(f'<text x="{_fmt(ox + left - 6)}" y="{_fmt(sy(t) + 3)}" font-size="10" '
                   f'text-anchor="end">{_fmt(t)}</text>')
    for ln in panel.lines:
        ok = np.isfinite(ln.y)
        if not np.any(ok):
            continue
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(ln.x[ok], ln.y[ok]))
        dash = f' stroke-dasharray="{ln.dash}"' if ln.dash else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{ln.color}" '
                   f'stroke-width="{ln.width}"{dash}/>')
    if panel.title:
        out.append(f'<text x="{_fmt(ox + left + pw / 2)}" y="{_fmt(oy + 15)}" font-size="12" '
                   f'text-anchor="middle">{escape(panel.title)}</text>')
    if panel.xlabel:
        out.append(f'<text x="{_fmt(ox + left + pw / 2)}" y="{_fmt(oy + h - 4)}" font-size="10" '
                   f'text-anchor="middle">{escape(panel.xlabel)}</text>')
    if panel.ylabel:
        cx, cy = ox + 12, oy + top + ph / 2
        out.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="10" text-anchor="middle" '
                   f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(panel.ylabel)}</text>')
    if panel.note:
        out.append(f'<text x="{_fmt(ox + left + 6)}" y="{_fmt(oy + top + 12)}" font-size="10">'
                   f'{escape(panel.note)}</text>')
    return out


def render(panels: list[list[Panel | None]], cell_w: float = 360, cell_h: float = 260) -> str:
    """Grid of panels (rows of columns) as an SVG document string."""
    rows = len(panels)
    cols = max((len(r) for r in panels), default=1)
    w, h = cols * cell_w, rows * cell_h
    body = []
    for i, row in enumerate(panels):
        for j, panel in enumerate(row):
            if panel is not None:
                body.extend(_panel_elements(panel, j * cell_w, i * cell_h, cell_w, cell_h))
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'viewBox="0 0 {_fmt(w)} {_fmt(h)}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *body, "</svg>", ""])


def divergence_panel(curves, fit=None, title: str = "") -> Panel:
    """``curves``: iterable of ``(m, epsilon, t, S)``; ``fit``: ``(lam, intercept, t_from, t_to)``."""
    panel = Panel(title=title, xlabel="t", ylabel="S(eps, m, t)")
    ms = sorted({int(c[0]) for c in curves})
    for m, eps, t, s in curves:
        color = PALETTE[ms.index(int(m)) % len(PALETTE)]
        panel.lines.append(Line(np.asarray(t, float), np.asarray(s, float), color, 0.8))
    if fit is not None:
        lam, intercept, t_from, t_to = fit
        t = np.array([t_from, t_to], dtype=float)
        panel.lines.append(Line(t, lam * t + intercept, FIT_COLOR, 2.0, "5,3"))
        panel.note = f"lambda = {lam:.3g}"
    else:
        panel.note = "no linear region"
    return panel
