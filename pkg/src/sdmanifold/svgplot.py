"""Minimal deterministic SVG line plots (no plotting dependency).

Coordinates are written with fixed precision so identical input gives
identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 30, 45
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _label(v: float) -> str:
    s = f"{v:.4g}"
    return "0" if s in ("-0", "0") else s


@dataclass
class Axes:
    xlo: float
    xhi: float
    ylo: float
    yhi: float

    @classmethod
    def fit(cls, xs, ys, equal: bool = False) -> "Axes":
        xs = np.asarray(xs, dtype=float).ravel()
        ys = np.asarray(ys, dtype=float).ravel()
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        xlo, xhi = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        ylo, yhi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if xhi - xlo < 1e-12:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi - ylo < 1e-12:
            ylo, yhi = ylo - 0.5, yhi + 0.5
        px, py = 0.05 * (xhi - xlo), 0.05 * (yhi - ylo)
        return cls(xlo - px, xhi + px, ylo - py, yhi + py)

    def sx(self, x) -> float:
        return MARGIN_L + (x - self.xlo) / (self.xhi - self.xlo) * (WIDTH - MARGIN_L - MARGIN_R)

    def sy(self, y) -> float:
        return HEIGHT - MARGIN_B - (y - self.ylo) / (self.yhi - self.ylo) * (HEIGHT - MARGIN_T - MARGIN_B)


class Canvas:
    def __init__(self, axes: Axes, title: str, xlabel: str, ylabel: str):
        self.ax = axes
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        ]
        self._frame(xlabel, ylabel)

    def _frame(self, xlabel, ylabel):
        a = self.ax
        x0, x1 = MARGIN_L, WIDTH - MARGIN_R
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
        self.parts.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
                          f'fill="none" stroke="black"/>')
        for t in nice_ticks(a.xlo, a.xhi):
            X = _fmt(a.sx(t))
            self.parts.append(f'<line x1="{X}" y1="{y0}" x2="{X}" y2="{y0 + 4}" stroke="black"/>')
            self.parts.append(f'<text x="{X}" y="{y0 + 16}" text-anchor="middle">{_label(t)}</text>')
        for t in nice_ticks(a.ylo, a.yhi):
            Y = _fmt(a.sy(t))
            self.parts.append(f'<line x1="{x0 - 4}" y1="{Y}" x2="{x0}" y2="{Y}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 6}" y="{Y}" text-anchor="end" '
                              f'dominant-baseline="middle">{_label(t)}</text>')
        self.parts.append(f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 8}" text-anchor="middle">'
                          f'{_esc(xlabel)}</text>')
        self.parts.append(f'<text x="14" y="{(y0 + y1) // 2}" text-anchor="middle" '
                          f'transform="rotate(-90 14 {(y0 + y1) // 2})">{_esc(ylabel)}</text>')

    def polyline(self, xs, ys, color: str, width: float = 1.5) -> None:
        pts = " ".join(f"{_fmt(self.ax.sx(x))},{_fmt(self.ax.sy(y))}" for x, y in zip(xs, ys))
        if pts:
            self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                              f'stroke-width="{width}"/>')

    def circle(self, x, y, color: str, r: float = 3.5) -> None:
        self.parts.append(f'<circle cx="{_fmt(self.ax.sx(x))}" cy="{_fmt(self.ax.sy(y))}" r="{r}" '
                          f'fill="none" stroke="{color}"/>')

    def arrow(self, x, y, heading: float, color: str, length: float = 18.0) -> None:
        # heading is measured in data coordinates; draw it in screen space
        X, Y = self.ax.sx(x), self.ax.sy(y)
        dx, dy = math.cos(heading), -math.sin(heading)
        X2, Y2 = X + length * dx, Y + length * dy
        hx, hy = -dy, dx
        tip = (f"{_fmt(X2)},{_fmt(Y2)} {_fmt(X2 - 6 * dx + 3 * hx)},{_fmt(Y2 - 6 * dy + 3 * hy)} "
               f"{_fmt(X2 - 6 * dx - 3 * hx)},{_fmt(Y2 - 6 * dy - 3 * hy)}")
        self.parts.append(f'<line x1="{_fmt(X)}" y1="{_fmt(Y)}" x2="{_fmt(X2)}" y2="{_fmt(Y2)}" '
                          f'stroke="{color}"/>')
        self.parts.append(f'<polygon points="{tip}" fill="{color}"/>')

    def legend(self, labels) -> None:
        for i, lab in enumerate(labels):
            y = MARGIN_T + 14 + 14 * i
            x = WIDTH - MARGIN_R - 90
            c = COLORS[i % len(COLORS)]
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" stroke="{c}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x + 24}" y="{y + 4}">{_esc(lab)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def series_plot(t, columns: dict, title: str, xlabel: str = "t") -> str:
    """One polyline per named column against a shared abscissa."""
    t = np.asarray(t, dtype=float)
    ys = [np.asarray(v, dtype=float) for v in columns.values()]
    axes = Axes.fit(t, np.concatenate(ys) if ys else [])
    cv = Canvas(axes, title, xlabel, "value")
    for i, y in enumerate(ys):
        cv.polyline(t, y, COLORS[i % len(COLORS)])
    cv.legend(list(columns))
    return cv.render()


def world_plot(t, xc, yc, theta, period: float, title: str = "world-frame path") -> str:
    """Path with circles and heading arrows at the sampling instants."""
    t, xc, yc, theta = (np.asarray(a, dtype=float) for a in (t, xc, yc, theta))
    axes = Axes.fit(xc, yc)
    cv = Canvas(axes, title, "x_c", "y_c")
    cv.polyline(xc, yc, COLORS[0])
    on_grid = np.abs(t / period - np.round(t / period)) < 1e-9
    for i in np.flatnonzero(on_grid):
        cv.circle(xc[i], yc[i], COLORS[1])
        # direction in the plotted (possibly anisotropic) frame
        sxs = (WIDTH - MARGIN_L - MARGIN_R) / (axes.xhi - axes.xlo)
        sys_ = (HEIGHT - MARGIN_T - MARGIN_B) / (axes.yhi - axes.ylo)
        cv.arrow(xc[i], yc[i], math.atan2(math.sin(theta[i]) * sys_, math.cos(theta[i]) * sxs), COLORS[1])
    return cv.render()
