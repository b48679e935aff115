"""Minimal deterministic SVG heatmaps (no timestamps or random ids)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# perceptually ordered anchors, interpolated linearly in RGB
_ANCHORS = np.array([
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
], dtype=float)


def _color(u: float) -> str:
    u = min(max(u, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(u), len(_ANCHORS) - 2)
    rgb = _ANCHORS[i] + (u - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(c)) for c in rgb))


def heatmap_svg(values, title: str = "", cell: int = 12) -> str:
    """Heatmap of a 2D array (row 0 drawn at the bottom) on a linear colour scale."""
    z = np.atleast_2d(np.asarray(values, dtype=float))
    ny, nx = z.shape
    lo, hi = float(np.min(z)), float(np.max(z))
    span = hi - lo if hi > lo else 1.0
    width = nx * cell
    height = ny * cell
    top = 24
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 20}" height="{height + top + 40}" '
        f'viewBox="0 0 {width + 20} {height + top + 40}">',
        f'<text x="10" y="16" font-family="sans-serif" font-size="12">{escape(title)}</text>',
    ]
    for i in range(ny):
        y = top + (ny - 1 - i) * cell
        for j in range(nx):
            color = _color((z[i, j] - lo) / span)
            lines.append(f'<rect x="{10 + j * cell}" y="{y}" width="{cell}" height="{cell}" fill="{color}"/>')
    lines.append(
        f'<text x="10" y="{top + height + 16}" font-family="sans-serif" font-size="11">'
        f'min {lo:.6g} ({_color(0.0)})  max {hi:.6g} ({_color(1.0)})  linear scale</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
