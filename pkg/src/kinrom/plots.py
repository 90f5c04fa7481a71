"""Minimal static line charts written directly as SVG.

Just enough for the report command: polylines over linear axes with ticks
and a small legend, no external plotting dependency.
"""

from __future__ import annotations

import math

__all__ = ["line_chart_svg"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / max(n, 1)))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out or [lo, hi]


def line_chart_svg(
    path,
    series: list[dict],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_y: bool = False,
    width: int = 720,
    height: int = 440,
) -> None:
    """Write a polyline chart; each series is {'x': [...], 'y': [...],
    'label': str}.  With ``log_y`` the y values must be positive."""
    margin_l, margin_r, margin_t, margin_b = 70, 20, 36, 52
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    xs = [float(v) for s in series for v in s["x"]]
    ys = [float(v) for s in series for v in s["y"]]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    if log_y:
        ys = [math.log10(max(v, 1e-300)) for v in ys]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return margin_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{px(tx):.1f}" y1="{margin_t + plot_h}" x2="{px(tx):.1f}" '
            f'y2="{margin_t + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px(tx):.1f}" y="{margin_t + plot_h + 18}" '
            f'text-anchor="middle">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        label = f"1e{ty:g}" if log_y else f"{ty:g}"
        parts.append(
            f'<line x1="{margin_l - 5}" y1="{py(ty):.1f}" x2="{margin_l}" '
            f'y2="{py(ty):.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{margin_l - 8}" y="{py(ty) + 4:.1f}" text-anchor="end">{label}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{margin_l + plot_w / 2}" y="{height - 12}" '
            f'text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{margin_t + plot_h / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {margin_t + plot_h / 2})">{ylabel}</text>'
        )
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = []
        for x, y in zip(s["x"], s["y"]):
            yv = math.log10(max(float(y), 1e-300)) if log_y else float(y)
            pts.append(f"{px(float(x)):.2f},{py(yv):.2f}")
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if s.get("label"):
            ly = margin_t + 14 + 16 * i
            parts.append(
                f'<line x1="{margin_l + plot_w - 120}" y1="{ly - 4}" '
                f'x2="{margin_l + plot_w - 96}" y2="{ly - 4}" stroke="{color}" '
                f'stroke-width="2"/>'
            )
            parts.append(f'<text x="{margin_l + plot_w - 90}" y="{ly}">{s["label"]}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
