"""Deterministic file writers: CSV at 17 significant digits and a plain SVG heatmap."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

_VIRIDIS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


def num(v) -> str:
    return f"{float(v):.17g}"


def write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def write_grid_csv(path, values: np.ndarray):
    """Rows ``i, j, value`` in C order."""
    values = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for (i, j), v in np.ndenumerate(values):
            w.writerow([i, j, num(v)])


def write_rows_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([num(x) if isinstance(x, (float, np.floating)) else x for x in r])


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    k = min(int(t), len(_VIRIDIS) - 2)
    c = _VIRIDIS[k] + (t - k) * (_VIRIDIS[k + 1] - _VIRIDIS[k])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(x)) for x in c))


def _panel(values: np.ndarray, x0: float, title: str, size: float = 300.0) -> list[str]:
    nx, ny = values.shape
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    cw, ch = size / nx, size / ny
    out = [f'<text x="{x0:.2f}" y="20" font-family="sans-serif" font-size="13">'
           f'{title} [{lo:.3e}, {hi:.3e}]</text>']
    for (i, j), v in np.ndenumerate(values):
        # j grows upward
        y = 30 + (ny - 1 - j) * ch
        out.append(f'<rect x="{x0 + i * cw:.3f}" y="{y:.3f}" width="{cw:.3f}" height="{ch:.3f}" '
                   f'fill="{_color((v - lo) / span)}"/>')
    return out


def write_heatmap_svg(path, panels: list[tuple[str, np.ndarray]], size: float = 300.0):
    width = len(panels) * (size + 40) + 20
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
             f'height="{size + 50:.0f}" viewBox="0 0 {width:.0f} {size + 50:.0f}">',
             '<rect width="100%" height="100%" fill="white"/>']
    for k, (title, values) in enumerate(panels):
        parts += _panel(np.asarray(values, dtype=float), 20 + k * (size + 40), title, size)
    parts.append("</svg>")
    write_text(path, "\n".join(parts) + "\n")
