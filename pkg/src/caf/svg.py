"""Dependency-free SVG 1.1 emission for heatmaps and line plots.

The color ramp is a fixed monotone white-to-dark-blue scale; each artifact
annotates the value range it maps, so images remain comparable by eye.
"""

from __future__ import annotations

import numpy as np

_RAMP_LOW = (247, 251, 255)
_RAMP_HIGH = (8, 48, 107)

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#e377c2", "#17becf", "#bcbd22", "#7f7f7f", "#aec7e8", "#ffbb78"]


def ramp_color(v: float) -> str:
    """Map v in [0, 1] onto the monotone ramp as an #rrggbb string."""
    v = min(max(float(v), 0.0), 1.0)
    rgb = tuple(
        int(round(lo + v * (hi - lo))) for lo, hi in zip(_RAMP_LOW, _RAMP_HIGH)
    )
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _escape(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _document(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def heatmap_svg(matrix: np.ndarray, labels: list[str], title: str) -> str:
    """Square heatmap with row/column labels and min/max annotations."""
    matrix = np.asarray(matrix, dtype=float)
    n_rows, n_cols = matrix.shape
    cell = 26
    margin_left, margin_top = 110, 70
    width = margin_left + n_cols * cell + 20
    height = margin_top + n_rows * cell + 40
    lo, hi = float(matrix.min()), float(matrix.max())
    span = hi - lo if hi > lo else 1.0

    body = [
        f'<text x="{margin_left}" y="24" font-family="monospace" font-size="14">{_escape(title)}</text>',
        f'<text x="{margin_left}" y="42" font-family="monospace" font-size="11">'
        f"scale: min={lo:.4g} (light) max={hi:.4g} (dark)</text>",
    ]
    for i in range(n_rows):
        y = margin_top + i * cell
        body.append(
            f'<text x="{margin_left - 6}" y="{y + cell * 0.7:.1f}" text-anchor="end" '
            f'font-family="monospace" font-size="10">{_escape(labels[i])}</text>'
        )
        for j in range(n_cols):
            x = margin_left + j * cell
            color = ramp_color((matrix[i, j] - lo) / span)
            body.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}" stroke="#cccccc" stroke-width="0.5"/>'
            )
    for j in range(n_cols):
        x = margin_left + j * cell + cell * 0.7
        y = margin_top - 6
        body.append(
            f'<text x="{x:.1f}" y="{y}" text-anchor="start" font-family="monospace" '
            f'font-size="10" transform="rotate(-60 {x:.1f} {y})">{_escape(labels[j])}</text>'
        )
    return _document(width, height, body)


def line_plot_svg(
    x: np.ndarray,
    series: dict[str, np.ndarray],
    title: str,
    xlabel: str = "",
    ylabel: str = "",
) -> str:
    """Multi-series line plot with a simple legend and axis annotations."""
    x = np.asarray(x, dtype=float)
    width, height = 720, 420
    ml, mr, mt, mb = 70, 160, 50, 50
    plot_w, plot_h = width - ml - mr, height - mt - mb

    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return mt + (y_hi - v) / (y_hi - y_lo) * plot_h

    body = [
        f'<text x="{ml}" y="26" font-family="monospace" font-size="14">{_escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>',
        f'<text x="{ml + plot_w / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="monospace" font-size="11">{_escape(xlabel)}</text>',
        f'<text x="16" y="{mt + plot_h / 2:.0f}" font-family="monospace" font-size="11" '
        f'transform="rotate(-90 16 {mt + plot_h / 2:.0f})" text-anchor="middle">{_escape(ylabel)}</text>',
        f'<text x="{ml - 6}" y="{sy(y_hi) + 4:.1f}" text-anchor="end" '
        f'font-family="monospace" font-size="10">{y_hi:.4g}</text>',
        f'<text x="{ml - 6}" y="{sy(y_lo) + 4:.1f}" text-anchor="end" '
        f'font-family="monospace" font-size="10">{y_lo:.4g}</text>',
        f'<text x="{sx(x_lo):.1f}" y="{mt + plot_h + 16}" text-anchor="middle" '
        f'font-family="monospace" font-size="10">{x_lo:g}</text>',
        f'<text x="{sx(x_hi):.1f}" y="{mt + plot_h + 16}" text-anchor="middle" '
        f'font-family="monospace" font-size="10">{x_hi:g}</text>',
    ]
    if x_lo < 0 < x_hi:
        body.append(
            f'<line x1="{sx(0):.1f}" y1="{mt}" x2="{sx(0):.1f}" y2="{mt + plot_h}" '
            f'stroke="#999999" stroke-dasharray="4 3"/>'
        )
    for idx, (name, ys) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(xv):.1f},{sy(yv):.1f}" for xv, yv in zip(x, np.asarray(ys, float)))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = mt + 14 + idx * 16
        body.append(
            f'<line x1="{width - mr + 10}" y1="{ly - 4}" x2="{width - mr + 34}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        body.append(
            f'<text x="{width - mr + 40}" y="{ly}" font-family="monospace" '
            f'font-size="10">{_escape(name)}</text>'
        )
    return _document(width, height, body)
