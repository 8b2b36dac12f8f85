"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
W, H, PAD = 640, 420, 60


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [10.0 ** k for k in range(math.floor(lo), math.ceil(hi) + 1)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 5))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(series: dict[str, tuple[list[float], list[float]]], title: str = "", xlabel: str = "",
              ylabel: str = "", logx: bool = False, logy: bool = False, step: bool = False) -> str:
    """Render named (x, y) series; ``step`` draws right-continuous staircases."""
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {k: [(tx(a), ty(b)) for a, b in zip(*xy) if (not logx or a > 0) and (not logy or b > 0)]
           for k, xy in series.items()}
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def X(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def Y(v):
        return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, logx):
        v = tx(t) if logx else t
        if x0 - 1e-12 <= v <= x1 + 1e-12:
            out.append(f'<text x="{X(v):.2f}" y="{H - PAD + 16}" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1, logy):
        v = ty(t) if logy else t
        if y0 - 1e-12 <= v <= y1 + 1e-12:
            out.append(f'<text x="{PAD - 6}" y="{Y(v) + 4:.2f}" font-size="11" text-anchor="end">{t:g}</text>')
    for i, (name, p) in enumerate(pts.items()):
        if not p:
            continue
        col = PALETTE[i % len(PALETTE)]
        coords = []
        for j, (a, b) in enumerate(p):
            if step and j > 0:
                coords.append(f"{X(a):.2f},{Y(p[j - 1][1]):.2f}")
            coords.append(f"{X(a):.2f},{Y(b):.2f}")
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{" ".join(coords)}"/>')
        if not step:
            out.extend(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{col}"/>' for a, b in p)
        out.append(f'<text x="{W - PAD - 4}" y="{PAD + 16 + 14 * i}" font-size="12" text-anchor="end" '
                   f'fill="{col}">{escape(name)}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD / 2}" font-size="14" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 16}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{H / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def staircase_series(u) -> tuple[list[float], list[float]]:
    """Points of a step function including the zero exterior, for ``step=True`` plots."""
    xs = [float(u.breakpoints[0])] + [float(b) for b in u.breakpoints] + [float(u.breakpoints[-1])]
    ys = [0.0] + [float(v) for v in u.values] + [0.0, 0.0]
    return xs, ys[: len(xs)]
