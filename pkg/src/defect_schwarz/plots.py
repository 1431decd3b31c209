"""Minimal hand-written SVG line charts for experiment results."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ConfigurationError

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=130, top=40, bottom=55)
COLORS = {"direct": "#1f77b4", "nd": "#d62728", "oo": "#2ca02c"}
FALLBACK = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


class _Axes:
    def __init__(self, xs, ys, log_y=False):
        self.log_y = log_y
        xs = [float(x) for x in xs]
        ys = [float(y) for y in ys if not log_y or y > 0]
        if not xs or not ys:
            raise ConfigurationError("nothing to plot")
        self.x0, self.x1 = _pad(min(xs), max(xs), False)
        self.y0, self.y1 = _pad(min(ys), max(ys), log_y)
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def _ty(self, y):
        return math.log10(y) if self.log_y else y

    def px(self, x):
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        lo, hi = self._ty(self.y0), self._ty(self.y1)
        return MARGIN["top"] + (hi - self._ty(y)) / (hi - lo) * self.ph


def _pad(lo, hi, log):
    if log:
        lo, hi = 10 ** math.floor(math.log10(lo)), 10 ** math.ceil(math.log10(hi))
        return (lo, hi * 10) if lo == hi else (lo, hi)
    if lo == hi:
        d = abs(lo) * 0.1 or 1.0
        return lo - d, hi + d
    d = 0.05 * (hi - lo)
    return lo - d, hi + d


def _ticks(lo, hi, log):
    if log:
        return [10.0**k for k in range(round(math.log10(lo)), round(math.log10(hi)) + 1)]
    step = 10 ** math.floor(math.log10((hi - lo) / 5))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= 6:
            step *= m
            break
    t = math.ceil(lo / step) * step
    out = []
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def _frame(ax: _Axes, title, xlabel, ylabel) -> list:
    L, T = MARGIN["left"], MARGIN["top"]
    el = [
        f'<rect x="{L}" y="{T}" width="{ax.pw}" height="{ax.ph}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{L + ax.pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="16" y="{T + ax.ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {T + ax.ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for x in _ticks(ax.x0, ax.x1, False):
        X = ax.px(x)
        el.append(f'<line x1="{X:.2f}" y1="{T + ax.ph}" x2="{X:.2f}" y2="{T + ax.ph + 5}" stroke="black"/>')
        el.append(f'<text x="{X:.2f}" y="{T + ax.ph + 19}" text-anchor="middle" font-size="11">{x:g}</text>')
    for y in _ticks(ax.y0, ax.y1, ax.log_y):
        Y = ax.py(y)
        el.append(f'<line x1="{L - 5}" y1="{Y:.2f}" x2="{L}" y2="{Y:.2f}" stroke="black"/>')
        el.append(f'<text x="{L - 8}" y="{Y + 4:.2f}" text-anchor="end" font-size="11">{y:g}</text>')
    return el


def _series(ax: _Axes, name, pts, color, idx, err=None) -> list:
    el = []
    coords = [(ax.px(x), ax.py(y)) for x, y in pts if not ax.log_y or y > 0]
    if len(coords) > 1:
        path = " ".join(f"{X:.2f},{Y:.2f}" for X, Y in coords)
        el.append(f'<polyline class="series" data-name="{escape(name)}" points="{path}" fill="none" '
                  f'stroke="{color}" stroke-width="1.8"/>')
    if err is not None:
        for (x, y), e in zip(pts, err):
            X = ax.px(x)
            el.append(f'<line x1="{X:.2f}" y1="{ax.py(y - e):.2f}" x2="{X:.2f}" y2="{ax.py(y + e):.2f}" '
                      f'stroke="{color}"/>')
    if len(pts) <= 40:
        for X, Y in coords:
            el.append(f'<circle class="marker" cx="{X:.2f}" cy="{Y:.2f}" r="3" fill="{color}"/>')
    ly = MARGIN["top"] + 14 + 18 * idx
    lx = WIDTH - MARGIN["right"] + 12
    el.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
    el.append(f'<text x="{lx + 26}" y="{ly}" font-size="11">{escape(name)}</text>')
    return el


def line_chart(series: dict, path, title="", xlabel="", ylabel="", log_y=False, errors=None) -> Path:
    """Write an SVG with one polyline per entry of ``series`` (name -> [(x, y)])."""
    errors = errors or {}
    xs = [x for pts in series.values() for x, _ in pts]
    ys = []
    for name, pts in series.items():
        e = errors.get(name, [0.0] * len(pts))
        for (_, y), d in zip(pts, e):
            ys.extend([y - d, y + d] if not log_y else [y])
    ax = _Axes(xs, ys, log_y)
    el = _frame(ax, title, xlabel, ylabel)
    for i, (name, pts) in enumerate(series.items()):
        color = COLORS.get(name.split(" ")[0], FALLBACK[i % len(FALLBACK)])
        el += _series(ax, name, pts, color, i, errors.get(name))
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="white"/>\n'
           + "\n".join(el) + "\n</svg>\n")
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    return path


def emit_plots(result, path) -> list:
    """Iterations-vs-p, RMSE-vs-iteration and (if present) deviation-vs-p charts."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not result.rows and not result.deviations:
        raise ConfigurationError("empty result, nothing to plot")
    files = []
    its, errs = {}, {}
    for v, p, st, _ in result.summary() if result.rows else []:
        if st is not None:
            its.setdefault(v, []).append((p, st.mean))
            errs.setdefault(v, []).append(st.std)
    if its:
        files.append(line_chart(its, out / "iterations.svg", "Mean PCG iterations", "defect probability p",
                                "iterations", errors=errs))
    curves = {f"{v} p={p:g}": list(enumerate(c.tolist())) for (v, p), c in result.rmse_curves().items()}
    if curves:
        files.append(line_chart(curves, out / "rmse.svg", "RMSE of the energy error", "iteration",
                                "RMSE", log_y=True))
    dev = {}
    for p, v, d in result.deviation_summary():
        dev.setdefault(v, []).append((p, d))
    if dev:
        files.append(line_chart(dev, out / "deviation.svg", "Relative deviation from Direct-DD",
                                "defect probability p", "RMSE of relative deviation"))
    return files
