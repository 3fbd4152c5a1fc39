"""Self-contained SVG charts with fixed number formatting, so reruns are byte-identical."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd")
WIDTH, HEIGHT = 720, 360
MARGIN = {"left": 60, "right": 150, "top": 40, "bottom": 50}


def _f(x: float) -> str:
    return f"{x:.2f}"


def _header(title: str, comment: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f"<!-- {escape(comment)} -->",
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _axes(y_lo: float, y_hi: float, y_label: str, ticks: int = 5) -> list[str]:
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>']
    for k in range(ticks + 1):
        v = y_lo + (y_hi - y_lo) * k / ticks
        y = y0 - (y0 - y1) * k / ticks
        out.append(f'<line x1="{x0 - 4}" y1="{_f(y)}" x2="{x0}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{_f(y + 4)}" text-anchor="end">{v:.2f}</text>')
    out.append(f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{escape(y_label)}</text>')
    return out


def _legend(names) -> list[str]:
    x = WIDTH - MARGIN["right"] + 12
    out = []
    for k, name in enumerate(names):
        y = MARGIN["top"] + 18 * k
        out.append(f'<rect x="{x}" y="{y}" width="12" height="12" fill="{PALETTE[k % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 10}">{escape(name)}</text>')
    return out


def bar_chart(groups: list[str], series: dict[str, list[float]], title: str, y_label: str,
              comment: str = "", reference: float | None = None) -> str:
    """Grouped bars: one group per entry of ``groups``, one bar per series."""
    names = list(series)
    values = np.array([series[n] for n in names], dtype=float)
    y_hi = max(float(values.max()) if values.size else 1.0, reference or 0.0) * 1.1 or 1.0
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    group_w = (x1 - x0) / max(len(groups), 1)
    bar_w = 0.8 * group_w / max(len(names), 1)
    out = _header(title, comment) + _axes(0.0, y_hi, y_label)
    for g, label in enumerate(groups):
        gx = x0 + g * group_w + 0.1 * group_w
        for k in range(len(names)):
            h = (y0 - y1) * values[k, g] / y_hi
            out.append(f'<rect x="{_f(gx + k * bar_w)}" y="{_f(y0 - h)}" width="{_f(bar_w)}" '
                       f'height="{_f(h)}" fill="{PALETTE[k % len(PALETTE)]}"/>')
        out.append(f'<text x="{_f(gx + 0.4 * group_w)}" y="{y0 + 16}" text-anchor="middle">{escape(label)}</text>')
    if reference is not None:
        y = y0 - (y0 - y1) * reference / y_hi
        out.append(f'<line x1="{x0}" y1="{_f(y)}" x2="{x1}" y2="{_f(y)}" stroke="gray" stroke-dasharray="4 3"/>')
    out += _legend(names)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(series: dict[str, np.ndarray], title: str, y_label: str, comment: str = "",
               y_range: tuple[float, float] = (-1.0, 1.0)) -> str:
    """Overlaid traces sharing one x axis (frame index)."""
    names = list(series)
    n = max(len(np.asarray(v)) for v in series.values())
    lo, hi = y_range
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    out = _header(title, comment) + _axes(lo, hi, y_label)
    for k, name in enumerate(names):
        v = np.clip(np.asarray(series[name], dtype=float), lo, hi)
        xs = x0 + (x1 - x0) * np.arange(len(v)) / max(n - 1, 1)
        ys = y0 - (y0 - y1) * (v - lo) / (hi - lo)
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="1.2" points="{pts}"/>')
    out.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">frame</text>')
    out += _legend(names)
    out.append("</svg>")
    return "\n".join(out) + "\n"
