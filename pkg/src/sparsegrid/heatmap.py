"""Self-contained SVG rendering of a comm-loss F1 matrix."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

F1_LOW = 0.3
F1_HIGH = 1.0
# ramp end points: dark red at F1_LOW, light yellow at F1_HIGH
_RAMP_LOW = (128, 0, 38)
_RAMP_HIGH = (255, 255, 204)
_EMPTY = "#f0f0f0"

CELL = 56
LEFT = 90
TOP = 50
LEGEND_W = 18


def ramp_color(value: float) -> str:
    """Linear colour ramp over [F1_LOW, F1_HIGH]; values outside are clamped."""
    t = (min(max(value, F1_LOW), F1_HIGH) - F1_LOW) / (F1_HIGH - F1_LOW)
    rgb = [round(lo + t * (hi - lo)) for lo, hi in zip(_RAMP_LOW, _RAMP_HIGH)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_svg(mat: np.ndarray, row_labels, col_labels, title: str = "") -> str:
    """Rows are window lengths, columns loss durations; NaN cells stay blank."""
    mat = np.asarray(mat, dtype=float)
    n_rows, n_cols = mat.shape
    if n_rows != len(row_labels) or n_cols != len(col_labels):
        raise ValueError("label count does not match matrix shape")
    width = LEFT + n_cols * CELL + 40 + LEGEND_W + 50
    height = TOP + n_rows * CELL + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT}" y="22" font-size="14">{escape(title)}</text>')
    for i, rl in enumerate(row_labels):
        y = TOP + i * CELL
        out.append(
            f'<text x="{LEFT - 8}" y="{y + CELL / 2 + 4:.0f}" text-anchor="end">{escape(str(rl))} ms</text>'
        )
        for j in range(n_cols):
            x = LEFT + j * CELL
            v = mat[i, j]
            if math.isnan(v):
                out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{_EMPTY}" stroke="white"/>')
                continue
            out.append(f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{ramp_color(v)}" stroke="white"/>')
            ink = "white" if v < 0.65 else "black"
            out.append(
                f'<text x="{x + CELL / 2:.0f}" y="{y + CELL / 2 + 4:.0f}" text-anchor="middle" '
                f'fill="{ink}">{v:.3f}</text>'
            )
    for j, cl in enumerate(col_labels):
        x = LEFT + j * CELL + CELL / 2
        out.append(
            f'<text x="{x:.0f}" y="{TOP + n_rows * CELL + 18}" text-anchor="middle">{escape(str(cl))}</text>'
        )
    out.append(
        f'<text x="{LEFT + n_cols * CELL / 2:.0f}" y="{TOP + n_rows * CELL + 38}" '
        'text-anchor="middle">communication loss (ms)</text>'
    )
    # legend
    lx = LEFT + n_cols * CELL + 40
    steps = 20
    h = n_rows * CELL / steps
    for k in range(steps):
        v = F1_HIGH - (k + 0.5) * (F1_HIGH - F1_LOW) / steps
        out.append(
            f'<rect x="{lx}" y="{TOP + k * h:.2f}" width="{LEGEND_W}" height="{h + 0.5:.2f}" fill="{ramp_color(v)}"/>'
        )
    out.append(f'<text x="{lx + LEGEND_W + 4}" y="{TOP + 4}">{F1_HIGH:.1f}</text>')
    out.append(f'<text x="{lx + LEGEND_W + 4}" y="{TOP + n_rows * CELL}">{F1_LOW:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
