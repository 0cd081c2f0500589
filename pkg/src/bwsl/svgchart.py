"""Minimal deterministic SVG charts (line and bar).

Byte-identical output for identical inputs: fixed canvas, fixed palette,
fixed float formatting, no timestamps.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 840, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return format(x, ".2f")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * abs(hi):
        ticks.append(round(v, 12))
        v += step
    return ticks


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{title}</text>',
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{x_label}</text>',
            f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {HEIGHT // 2})">{y_label}</text>',
        ]

    def scale(self, x_range, y_range):
        x0, x1 = x_range
        y0, y1 = y_range
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            y1 = y0 + 1.0
        inner_w = WIDTH - MARGIN_L - MARGIN_R
        inner_h = HEIGHT - MARGIN_T - MARGIN_B

        def sx(x):
            return MARGIN_L + (x - x0) / (x1 - x0) * inner_w

        def sy(y):
            return HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * inner_h

        return sx, sy, (x0, x1, y0, y1)

    def axes(self, sx, sy, bounds):
        x0, x1, y0, y1 = bounds
        left, bottom = MARGIN_L, HEIGHT - MARGIN_B
        self.parts.append(
            f'<line x1="{left}" y1="{MARGIN_T}" x2="{left}" y2="{bottom}" stroke="black"/>'
        )
        self.parts.append(
            f'<line x1="{left}" y1="{bottom}" x2="{WIDTH - MARGIN_R}" y2="{bottom}" stroke="black"/>'
        )
        for v in _ticks(y0, y1):
            y = sy(v)
            self.parts.append(
                f'<line x1="{left - 4}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{v:g}</text>'
            )
        for v in _ticks(x0, x1):
            x = sx(v)
            self.parts.append(
                f'<line x1="{_fmt(x)}" y1="{bottom}" x2="{_fmt(x)}" y2="{bottom + 4}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{_fmt(x)}" y="{bottom + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{v:g}</text>'
            )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_chart(series, title: str, x_label: str, y_label: str) -> str:
    """Multi-series line chart; ``series`` is [(label, xs, ys), ...]."""
    canvas = _Canvas(title, x_label, y_label)
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    sx, sy, bounds = canvas.scale(
        (min(all_x), max(all_x)), (min(all_y), max(all_y))
    )
    canvas.axes(sx, sy, bounds)
    for idx, (label, xs, ys) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        canvas.parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        canvas.parts.append(
            f'<text x="{WIDTH - MARGIN_R - 10}" y="{MARGIN_T + 16 * idx + 12}" '
            f'text-anchor="end" font-family="sans-serif" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    return canvas.finish()


def bar_chart(labels, values, title: str, x_label: str, y_label: str) -> str:
    """Single-series bar chart with labeled bars."""
    canvas = _Canvas(title, x_label, y_label)
    lo = min(0.0, min(values))
    hi = max(0.0, max(values))
    sx, sy, bounds = canvas.scale((0.0, float(len(values))), (lo, hi))
    canvas.axes(lambda x: sx(x), sy, (bounds[0], bounds[1], bounds[2], bounds[3]))
    zero_y = sy(0.0)
    slot = (WIDTH - MARGIN_L - MARGIN_R) / max(len(values), 1)
    for i, (label, value) in enumerate(zip(labels, values)):
        x = MARGIN_L + i * slot + slot * 0.15
        y = sy(value)
        top = min(y, zero_y)
        height = abs(zero_y - y)
        color = PALETTE[0] if value >= 0 else PALETTE[1]
        canvas.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(top)}" width="{_fmt(slot * 0.7)}" '
            f'height="{_fmt(height)}" fill="{color}"/>'
        )
        canvas.parts.append(
            f'<text x="{_fmt(x + slot * 0.35)}" y="{HEIGHT - MARGIN_B + 18}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="10">{label}</text>'
        )
    return canvas.finish()
