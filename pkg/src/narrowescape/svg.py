"""Self-contained SVG emission for line and contour plots.

Fixed 800x600 viewport, no external assets, no timestamps: identical input
produces byte-identical output.  Data series are the only polyline elements
in the document; frames, ticks and isolines use rect, line and path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 800
HEIGHT = 600
MARGIN_L = 72
MARGIN_R = 24
MARGIN_T = 42
MARGIN_B = 56

PALETTE = ("#1f6fb4", "#d1495b", "#3a7d44", "#8e5ba6", "#c97b2d", "#4d4d4d")


@dataclass(frozen=True)
class Series:
    """One plotted curve; x and y must be finite and equal length."""

    x: np.ndarray
    y: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.x.ndim != 1 or self.x.shape != self.y.shape or len(self.x) == 0:
            raise ValueError("series needs matching nonempty 1-D x and y")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("series values must be finite")


def _axis_range(lo: float, hi: float) -> tuple[float, float]:
    if lo == hi:
        pad = 0.5 if lo == 0.0 else 0.5 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e = math.ceil(math.log10(lo) - 1e-9)
        hi_e = math.floor(math.log10(hi) + 1e-9)
        if lo_e > hi_e:
            return [lo, hi]
        return [10.0**e for e in range(lo_e, hi_e + 1)]
    raw = np.linspace(lo, hi, 5)
    return [float(v) for v in raw]


def _fmt_tick(v: float) -> str:
    if v != 0.0 and (abs(v) < 1e-3 or abs(v) >= 1e4):
        return f"{v:.0e}"
    return f"{v:.4g}"


class _Frame:
    """Maps data coordinates to viewport pixels and draws the axes."""

    def __init__(self, xlo, xhi, ylo, yhi, logx=False, logy=False):
        if logx and xlo <= 0.0:
            raise ValueError("log-x axis needs positive x values")
        if logy and ylo <= 0.0:
            raise ValueError("log-y axis needs positive y values")
        self.logx, self.logy = logx, logy
        self.xlo, self.xhi = _axis_range(xlo, xhi)
        self.ylo, self.yhi = _axis_range(ylo, yhi)
        tx = math.log10 if logx else float
        ty = math.log10 if logy else float
        self._tx, self._ty = tx, ty
        self._x0, self._x1 = tx(self.xlo), tx(self.xhi)
        self._y0, self._y1 = ty(self.ylo), ty(self.yhi)

    def px(self, x: float) -> float:
        frac = (self._tx(x) - self._x0) / (self._x1 - self._x0)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: float) -> float:
        frac = (self._ty(y) - self._y0) / (self._y1 - self._y0)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)

    def draw(self, out: list, title: str, xlabel: str, ylabel: str):
        out.append(
            f'<rect x="{MARGIN_L}" y="{MARGIN_T}" '
            f'width="{WIDTH - MARGIN_L - MARGIN_R}" '
            f'height="{HEIGHT - MARGIN_T - MARGIN_B}" '
            'fill="none" stroke="#333333" stroke-width="1"/>'
        )
        y_base = HEIGHT - MARGIN_B
        for xv in _ticks(self.xlo, self.xhi, self.logx):
            p = self.px(xv)
            out.append(
                f'<line x1="{p:.2f}" y1="{y_base}" x2="{p:.2f}" '
                f'y2="{y_base + 5}" stroke="#333333" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{p:.2f}" y="{y_base + 20}" font-size="12" '
                f'text-anchor="middle">{_fmt_tick(xv)}</text>'
            )
        for yv in _ticks(self.ylo, self.yhi, self.logy):
            p = self.py(yv)
            out.append(
                f'<line x1="{MARGIN_L - 5}" y1="{p:.2f}" x2="{MARGIN_L}" '
                f'y2="{p:.2f}" stroke="#333333" stroke-width="1"/>'
            )
            out.append(
                f'<text x="{MARGIN_L - 9}" y="{p + 4:.2f}" font-size="12" '
                f'text-anchor="end">{_fmt_tick(yv)}</text>'
            )
        if title:
            out.append(
                f'<text x="{WIDTH / 2:.0f}" y="26" font-size="16" '
                f'text-anchor="middle">{escape(title)}</text>'
            )
        if xlabel:
            out.append(
                f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 14}" font-size="13" '
                f'text-anchor="middle">{escape(xlabel)}</text>'
            )
        if ylabel:
            cy = (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
            out.append(
                f'<text x="20" y="{cy:.0f}" font-size="13" text-anchor="middle" '
                f'transform="rotate(-90 20 {cy:.0f})">{escape(ylabel)}</text>'
            )


def _document(body: list) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
        'font-family="sans-serif">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def line_plot(series: Sequence[Series], title: str = "", xlabel: str = "",
              ylabel: str = "", logx: bool = False, logy: bool = False) -> str:
    """Render one polyline per series inside shared axes."""
    series = list(series)
    if not series:
        raise ValueError("need at least one series")
    xlo = min(s.x.min() for s in series)
    xhi = max(s.x.max() for s in series)
    ylo = min(s.y.min() for s in series)
    yhi = max(s.y.max() for s in series)
    frame = _Frame(xlo, xhi, ylo, yhi, logx=logx, logy=logy)
    body: list = []
    frame.draw(body, title, xlabel, ylabel)
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{frame.px(xv):.2f},{frame.py(yv):.2f}" for xv, yv in zip(s.x, s.y)
        )
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            'stroke-width="1.8"/>'
        )
    lx = WIDTH - MARGIN_R - 170
    ly = MARGIN_T + 16
    for i, s in enumerate(series):
        if not s.label:
            continue
        color = PALETTE[i % len(PALETTE)]
        body.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.8"/>'
        )
        body.append(
            f'<text x="{lx + 30}" y="{ly}" font-size="12">{escape(s.label)}</text>'
        )
        ly += 17
    return _document(body)


def _level_color(frac: float) -> str:
    lo = (33, 102, 172)
    hi = (178, 24, 43)
    rgb = tuple(round(a + frac * (b - a)) for a, b in zip(lo, hi))
    return "#%02x%02x%02x" % rgb


def contour_levels(values: np.ndarray, n: int = 10) -> np.ndarray:
    """n levels strictly inside (min, max); empty for a constant field."""
    vmin, vmax = float(np.min(values)), float(np.max(values))
    if vmin == vmax:
        return np.empty(0)
    return np.linspace(vmin, vmax, n + 2)[1:-1]


def contour_plot(vertices: np.ndarray, triangles: np.ndarray,
                 values: np.ndarray, levels: int | Sequence[float] = 10,
                 title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Marching-triangles isolines of a nodal field on a triangulation.

    Crossing segments are accumulated per level into one path element; the
    outline of the triangulation is drawn from its boundary edges.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles)
    values = np.asarray(values, dtype=float)
    if len(vertices) == 0 or len(triangles) == 0:
        raise ValueError("need a nonempty triangulation")
    if isinstance(levels, (int, np.integer)):
        levels = contour_levels(values, int(levels))
    levels = np.asarray(levels, dtype=float)

    frame = _Frame(vertices[:, 0].min(), vertices[:, 0].max(),
                   vertices[:, 1].min(), vertices[:, 1].max())
    body: list = []
    frame.draw(body, title, xlabel, ylabel)

    edges: dict = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    outline = []
    for (a, b), count in edges.items():
        if count == 1:
            pa, pb = vertices[a], vertices[b]
            outline.append(
                f"M{frame.px(pa[0]):.2f} {frame.py(pa[1]):.2f}"
                f"L{frame.px(pb[0]):.2f} {frame.py(pb[1]):.2f}"
            )
    if outline:
        body.append(
            f'<path d="{"".join(outline)}" fill="none" stroke="#888888" '
            'stroke-width="0.8"/>'
        )

    tv = values[triangles]
    pts = vertices[triangles]
    for li, lev in enumerate(levels):
        segs = []
        above = tv >= lev
        mixed = np.flatnonzero(above.any(axis=1) & ~above.all(axis=1))
        for t in mixed:
            cross = []
            for e in range(3):
                i, j = e, (e + 1) % 3
                vi, vj = tv[t, i], tv[t, j]
                if (vi >= lev) == (vj >= lev) or vi == vj:
                    continue
                s = (lev - vi) / (vj - vi)
                p = pts[t, i] + s * (pts[t, j] - pts[t, i])
                cross.append(p)
            if len(cross) == 2:
                segs.append(
                    f"M{frame.px(cross[0][0]):.2f} {frame.py(cross[0][1]):.2f}"
                    f"L{frame.px(cross[1][0]):.2f} {frame.py(cross[1][1]):.2f}"
                )
        if segs:
            frac = li / max(len(levels) - 1, 1)
            body.append(
                f'<path d="{"".join(segs)}" fill="none" '
                f'stroke="{_level_color(frac)}" stroke-width="1.2"/>'
            )
    return _document(body)


def render_svg(series, kind: str = "line", **options) -> str:
    """Dispatch to the line or contour renderer.

    kind "line" takes a Series or sequence of Series; kind "contour" takes a
    (vertices, triangles, values) triple.
    """
    if kind == "line":
        if isinstance(series, Series):
            series = [series]
        return line_plot(series, **options)
    if kind == "contour":
        vertices, triangles, values = series
        return contour_plot(vertices, triangles, values, **options)
    raise ValueError(f"unknown plot kind {kind!r}")
