"""Dependency-free SVG line charts of a ratio series with its fitted trend."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=64, right=20, top=36, bottom=48)


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        span = abs(hi) or 1.0
        lo, hi = lo - span / 2, hi + span / 2
        span = hi - lo
    raw = span / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = np.floor(lo / step) * step
    ticks = np.arange(start, hi + step * 0.5, step)
    return ticks[(ticks >= lo - 1e-12) & (ticks <= hi + 1e-12)], lo, hi


def render_svg(months, values, trend_values, title="") -> str:
    """SVG with exactly two ``<path>`` elements: the series and a dashed trend.

    ``values`` and ``trend_values`` are fractions; the y axis is labeled in percent.
    """
    months = np.asarray(months, dtype="datetime64[M]")
    y = 100.0 * np.asarray(values, dtype=float)
    yt = 100.0 * np.asarray(trend_values, dtype=float)
    n = y.size
    lo = float(min(y.min(), yt.min()))
    hi = float(max(y.max(), yt.max()))
    # a span at rounding level (e.g. a fitted constant) is drawn as flat
    if hi - lo <= 1e-9 * max(1.0, abs(hi)):
        lo = hi = 0.5 * (lo + hi)
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    ticks, lo, hi = _nice_ticks(lo - pad, hi + pad)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(i):
        return x0 + (x1 - x0) * (i / (n - 1) if n > 1 else 0.5)

    def sy(v):
        return y0 - (y0 - y1) * (v - lo) / (hi - lo)

    def path(vals):
        pts = " L ".join(f"{sx(i):.2f} {sy(v):.2f}" for i, v in enumerate(vals))
        return "M " + pts

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for t in ticks:
        yy = sy(t)
        out.append(f'<line x1="{x0 - 4}" y1="{yy:.2f}" x2="{x0}" y2="{yy:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{yy + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{t:g}%</text>')
    # about six x labels, always including both ends
    label_idx = sorted({0, n - 1, *np.linspace(0, n - 1, 6).round().astype(int).tolist()})
    for i in label_idx:
        xx = sx(i)
        out.append(f'<line x1="{xx:.2f}" y1="{y0}" x2="{xx:.2f}" y2="{y0 + 4}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{y0 + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{months[i]}</text>')
    out.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">percent</text>')
    out.append(f'<path d="{path(y)}" fill="none" stroke="#1f4e79" stroke-width="1.5"/>')
    out.append(f'<path d="{path(yt)}" fill="none" stroke="#7f7f7f" stroke-width="1.5" '
               f'stroke-dasharray="6,4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
