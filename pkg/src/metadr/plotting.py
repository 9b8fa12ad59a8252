"""Self-contained SVG rendering of evaluation curves.

Hand-rolled rather than a plotting library so the output bytes are a pure
function of the data (no embedded ids, fonts, or timestamps).
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from metadr.experiments import EvalCurves

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 720.0, 440.0
_LEFT, _RIGHT, _TOP, _BOTTOM = 64.0, 16.0, 28.0, 48.0


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_plot(curves: EvalCurves, path, *, title: str = "",
                ylabel: str = "mean reward") -> None:
    """One mean line plus a +/-1 SE band per arm, with axes and a legend."""
    arms = list(curves.arms.items())
    if not arms:
        raise ValueError("render_plot needs at least one arm")
    days = arms[0][1].days
    xs = np.arange(1, days + 1, dtype=np.float64)

    y_lo = min(float((c.mean_rewards - c.stderr_rewards).min()) for _, c in arms)
    y_hi = max(float((c.mean_rewards + c.stderr_rewards).max()) for _, c in arms)
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 1.0
    y_lo -= pad
    y_hi += pad

    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM
    x_span = max(days - 1, 1)

    def px(day: float) -> float:
        return _LEFT + (day - 1) / x_span * plot_w

    def py(value: float) -> float:
        return _TOP + (y_hi - value) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH:.0f}" '
        f'height="{_HEIGHT:.0f}" viewBox="0 0 {_WIDTH:.0f} {_HEIGHT:.0f}">',
        f'<rect x="0" y="0" width="{_WIDTH:.0f}" height="{_HEIGHT:.0f}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="18" font-family="sans-serif" '
            f'font-size="14" text-anchor="middle">{escape(title)}</text>'
        )

    for key, (arm, curve) in enumerate(arms):
        color = _PALETTE[key % len(_PALETTE)]
        upper = curve.mean_rewards + curve.stderr_rewards
        lower = curve.mean_rewards - curve.stderr_rewards
        band = " ".join(
            f"{_fmt(px(x))},{_fmt(py(u))}" for x, u in zip(xs, upper)
        ) + " " + " ".join(
            f"{_fmt(px(x))},{_fmt(py(l))}" for x, l in zip(xs[::-1], lower[::-1])
        )
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.18"/>')
        line = " ".join(f"{_fmt(px(x))},{_fmt(py(v))}" for x, v in zip(xs, curve.mean_rewards))
        parts.append(
            f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )

    axis_y = _TOP + plot_h
    parts.append(
        f'<line x1="{_LEFT:.1f}" y1="{axis_y:.1f}" x2="{_LEFT + plot_w:.1f}" '
        f'y2="{axis_y:.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_LEFT:.1f}" y1="{_TOP:.1f}" x2="{_LEFT:.1f}" '
        f'y2="{axis_y:.1f}" stroke="black"/>'
    )
    for tick in _ticks(1.0, float(days)):
        x = px(tick)
        parts.append(f'<line x1="{_fmt(x)}" y1="{axis_y:.1f}" x2="{_fmt(x)}" '
                     f'y2="{axis_y + 5:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(x)}" y="{axis_y + 18:.1f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{tick:.0f}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        parts.append(f'<line x1="{_LEFT - 5:.1f}" y1="{_fmt(y)}" x2="{_LEFT:.1f}" '
                     f'y2="{_fmt(y)}" stroke="black"/>')
        parts.append(
            f'<text x="{_LEFT - 8:.1f}" y="{_fmt(y + 4)}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{tick:.3g}</text>'
        )
    parts.append(
        f'<text x="{_LEFT + plot_w / 2:.1f}" y="{_HEIGHT - 8:.1f}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle">day</text>'
    )
    parts.append(
        f'<text x="16" y="{_TOP + plot_h / 2:.1f}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {_TOP + plot_h / 2:.1f})">{escape(ylabel)}</text>'
    )

    legend_x = _LEFT + plot_w - 170.0
    legend_y = _TOP + 8.0
    for key, (arm, _) in enumerate(arms):
        color = _PALETTE[key % len(_PALETTE)]
        y = legend_y + key * 18.0
        parts.append(f'<rect x="{_fmt(legend_x)}" y="{_fmt(y)}" width="12" '
                     f'height="12" fill="{color}"/>')
        parts.append(
            f'<text x="{_fmt(legend_x + 18)}" y="{_fmt(y + 10)}" '
            f'font-family="sans-serif" font-size="11">{escape(arm)}</text>'
        )
    parts.append("</svg>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
