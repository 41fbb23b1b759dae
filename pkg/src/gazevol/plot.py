"""Minimal SVG line plots of per-slice gaze density, one curve per window."""
from __future__ import annotations

from html import escape

import numpy as np

from .density import DensityProfile

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 170, 30, 45


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def density_svg(profiles: list[DensityProfile], title: str = "", nz: int | None = None) -> str:
    """Density curves vs slice index; degenerate windows drawn as vertical lines."""
    shown = [p for p in profiles if not p.empty]
    axes = [p.slice_axis for p in shown if len(p.slice_axis)]
    if axes:
        x_lo = float(min(a.min() for a in axes))
        x_hi = float(max(a.max() for a in axes))
    else:
        x_lo, x_hi = 0.0, float((nz or 1) - 1)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    curves = [p.density.max() for p in shown if not p.degenerate and len(p.density)]
    y_hi = float(max(curves)) * 1.1 if curves else 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return TOP + ph - y / y_hi * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT}" y="18" font-family="sans-serif" font-size="13">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for x in np.linspace(x_lo, x_hi, 6):
        out.append(
            f'<text x="{_fmt(sx(x))}" y="{TOP + ph + 16}" font-family="sans-serif" font-size="10" '
            f'text-anchor="middle">{x:.0f}</text>'
        )
    out.append(
        f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 8}" font-family="sans-serif" font-size="11" '
        f'text-anchor="middle">slice index</text>'
    )
    out.append(
        f'<text x="14" y="{TOP + ph / 2:.1f}" font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {TOP + ph / 2:.1f})" text-anchor="middle">density</text>'
    )
    drawn = [(wid, p) for wid, p in enumerate(profiles) if not p.empty]
    for i, (wid, p) in enumerate(drawn):
        color = PALETTE[i % len(PALETTE)]
        if p.degenerate:
            x = sx(float(p.slice_axis[0]))
            out.append(
                f'<line class="degenerate" data-window="{wid}" x1="{_fmt(x)}" y1="{TOP}" x2="{_fmt(x)}" '
                f'y2="{TOP + ph}" stroke="{color}" stroke-width="1.5"/>'
            )
        else:
            pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(p.slice_axis, p.density))
            out.append(
                f'<polyline class="density" data-window="{wid}" points="{pts}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
        ly = TOP + 14 * i + 6
        out.append(f'<line x1="{WIDTH - RIGHT + 10}" y1="{ly}" x2="{WIDTH - RIGHT + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(
            f'<text x="{WIDTH - RIGHT + 32}" y="{ly + 4}" font-family="sans-serif" font-size="10">'
            f"w{wid}: {p.duration:.2f} s</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
