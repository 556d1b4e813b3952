"""Minimal log-log SVG plots of convergence histories."""
from __future__ import annotations

import math
from typing import Dict, Sequence
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _decades(lo: float, hi: float):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b += 1
    return a, b


def loglog_svg(
    x: Sequence[float],
    series: Dict[str, Sequence[float]],
    slope: float = -2.0,
    xlabel: str = "#dofs",
    title: str = "",
    width: int = 640,
    height: int = 480,
) -> str:
    """SVG text with one polyline per series and a dashed reference slope."""
    pts = [(float(a), float(b)) for s in series.values() for a, b in zip(x, s) if b and b > 0]
    if not pts:
        raise ValueError("nothing to plot")
    xa, xb = _decades(min(p[0] for p in pts), max(p[0] for p in pts))
    ya, yb = _decades(min(p[1] for p in pts), max(p[1] for p in pts))
    L, R, T, B = 70, 20, 30, 50
    W, H = width - L - R, height - T - B

    def px(v):
        return L + W * (math.log10(v) - xa) / (xb - xa)

    def py(v):
        return T + H * (1 - (math.log10(v) - ya) / (yb - ya))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="black"/>',
    ]
    for d in range(xa, xb + 1):
        X = px(10.0**d)
        out.append(f'<line x1="{X:.1f}" y1="{T}" x2="{X:.1f}" y2="{T + H}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.1f}" y="{T + H + 18}" text-anchor="middle">1e{d}</text>')
    for d in range(ya, yb + 1):
        Y = py(10.0**d)
        out.append(f'<line x1="{L}" y1="{Y:.1f}" x2="{L + W}" y2="{Y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{L - 6}" y="{Y + 4:.1f}" text-anchor="end">1e{d}</text>')

    for i, (name, ys) in enumerate(series.items()):
        c = COLORS[i % len(COLORS)]
        line = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, ys) if b and b > 0)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{line}"/>')
        out.append(f'<text x="{L + 10}" y="{T + 16 + 16 * i}" fill="{c}">{escape(name)}</text>')

    # reference slope anchored at the first point of the first series
    first = next(iter(series.values()))
    x0, y0 = float(x[0]), float(first[0])
    x1 = float(x[-1])
    y1 = y0 * (x1 / x0) ** slope
    if y1 > 0:
        out.append(
            f'<line x1="{px(x0):.1f}" y1="{py(y0):.1f}" x2="{px(x1):.1f}" y2="{py(y1):.1f}" '
            f'stroke="gray" stroke-dasharray="6,4"/>'
        )
        k = len(series)
        out.append(f'<text x="{L + 10}" y="{T + 16 + 16 * k}" fill="gray">slope {slope:g}</text>')
    out.append(f'<text x="{L + W / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if title:
        out.append(f'<text x="{L + W / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
