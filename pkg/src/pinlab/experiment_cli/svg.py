"""Minimal hand-written SVG line and scatter plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=72, right=20, top=36, bottom=56)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v):
    if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
        return float(v)
    return None


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(k) for k in range(a, b + 1, step) if lo - 1e-9 <= k <= hi + 1e-9]
    span = hi - lo
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v: float, log: bool) -> str:
    return f"1e{int(v)}" if log else f"{v:.4g}"


def render_plot(rows: list[dict], spec: dict, axes: str = "auto") -> str | None:
    """Render the series described by ``spec`` from ``rows``; None when there is nothing to draw.

    ``spec`` keys: x, series [{y, label, points}], xlog, ylog, title, xlabel,
    group (split into one series per value of that column), fit {slope, intercept}
    (a line y = intercept + slope x in log-log coordinates).
    """
    if not spec or not rows:
        return None
    xlog = spec.get("xlog", False) if axes == "auto" else axes == "log"
    ylog = spec.get("ylog", False) if axes == "auto" else axes == "log"
    series = []
    for s in spec["series"]:
        groups = sorted({r.get(spec["group"]) for r in rows}) if spec.get("group") else [None]
        for g in groups:
            pts = []
            for r in rows:
                if g is not None and r.get(spec["group"]) != g:
                    continue
                x, y = _num(r.get(spec["x"])), _num(r.get(s["y"]))
                if x is None or y is None or (xlog and x <= 0) or (ylog and y <= 0):
                    continue
                pts.append((math.log10(x) if xlog else x, math.log10(y) if ylog else y))
            label = s.get("label", s["y"]) + (f" ({spec['group']}={g:.3g})" if g is not None else "")
            if pts:
                series.append((label, sorted(pts), s.get("points", False)))
    if not series:
        return None
    xs = [p[0] for _, pts, _ in series for p in pts]
    ys = [p[1] for _, pts, _ in series for p in pts]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(spec.get("title", ""))}</text>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, xlog):
        out.append(f'<line x1="{px(t):.2f}" y1="{MARGIN["top"] + ph}" x2="{px(t):.2f}" y2="{MARGIN["top"] + ph + 5}" '
                   f'stroke="black"/><text x="{px(t):.2f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">'
                   f'{_fmt(t, xlog)}</text>')
    for t in _ticks(y0, y1, ylog):
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{py(t):.2f}" x2="{MARGIN["left"]}" y2="{py(t):.2f}" '
                   f'stroke="black"/><text x="{MARGIN["left"] - 8}" y="{py(t) + 4:.2f}" text-anchor="end">'
                   f'{_fmt(t, ylog)}</text>')
    xlabel = spec.get("xlabel", spec["x"])
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(xlabel)}{" (log)" if xlog else ""}</text>')
    for i, (label, pts, points) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        if points:
            out += [f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>' for x, y in pts]
        else:
            d = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN["top"] + 16 + 16 * i
        out.append(f'<rect x="{MARGIN["left"] + 10}" y="{ly - 9}" width="10" height="10" fill="{color}"/>'
                   f'<text x="{MARGIN["left"] + 26}" y="{ly}">{escape(label)}</text>')
    fit = spec.get("fit")
    if fit and xlog and ylog:
        # fitted in natural logs; convert to log10 coordinates
        s, c = fit["slope"], fit["intercept"] / math.log(10)
        out.append(f'<line x1="{px(x0):.2f}" y1="{py(c + s * x0):.2f}" x2="{px(x1):.2f}" y2="{py(c + s * x1):.2f}" '
                   f'stroke="black" stroke-dasharray="6,4" class="fit"/>')
        out.append(f'<text x="{MARGIN["left"] + pw - 8}" y="{MARGIN["top"] + ph - 10}" text-anchor="end" '
                   f'class="slope">fitted slope = {s:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out)
