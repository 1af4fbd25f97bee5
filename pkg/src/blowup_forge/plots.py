"""Minimal SVG line plots drawn from emitted CSV tables."""

from __future__ import annotations

import csv
import math
from typing import Sequence

_W, _H, _PAD = 640, 420, 60
_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _scale(values, log):
    vals = [math.log10(v) if log else v for v in values]
    lo, hi = min(vals), max(vals)
    if hi == lo:
        hi = lo + 1.0
    return vals, lo, hi


def line_plot_from_csv(csv_path: str, svg_path: str, x: str, ys: Sequence[str], title: str = "",
                       logx: bool = False, logy: bool = False) -> None:
    """Write an SVG with one polyline per column ``ys`` against column ``x``.

    Rows with non-finite values, or non-positive values on a log axis,
    are skipped.
    """
    header, rows = _read(csv_path)
    ix = header.index(x)
    series = []
    for name in ys:
        iy = header.index(name)
        pts = []
        for row in rows:
            try:
                a, b = float(row[ix]), float(row[iy])
            except ValueError:
                continue
            if not (math.isfinite(a) and math.isfinite(b)):
                continue
            if (logx and a <= 0) or (logy and b <= 0):
                continue
            pts.append((a, b))
        series.append((name, pts))
    xs = [p[0] for _, pts in series for p in pts] or [0.0, 1.0]
    ys_all = [p[1] for _, pts in series for p in pts] or [0.0, 1.0]
    _, x0, x1 = _scale(xs, logx)
    _, y0, y1 = _scale(ys_all, logy)

    def px(a):
        a = math.log10(a) if logx else a
        return _PAD + (a - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(b):
        b = math.log10(b) if logy else b
        return _H - _PAD - (b - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
           'fill="none" stroke="black"/>',
           f'<text x="{_W / 2}" y="{_PAD / 2}" text-anchor="middle" font-size="14">{title}</text>']
    xl = ("log10 " if logx else "") + x
    out.append(f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle" font-size="12">{xl}</text>')
    out.append(f'<text x="{_PAD}" y="{_H - _PAD + 15}" font-size="10">{x0:.3g}</text>')
    out.append(f'<text x="{_W - _PAD}" y="{_H - _PAD + 15}" text-anchor="end" font-size="10">{x1:.3g}</text>')
    out.append(f'<text x="{_PAD - 5}" y="{_H - _PAD}" text-anchor="end" font-size="10">{y0:.3g}</text>')
    out.append(f'<text x="{_PAD - 5}" y="{_PAD + 10}" text-anchor="end" font-size="10">{y1:.3g}</text>')
    for k, (name, pts) in enumerate(series):
        colour = _COLOURS[k % len(_COLOURS)]
        if pts:
            coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        yl = ("log10 " if logy else "") + name
        out.append(f'<text x="{_W - _PAD - 5}" y="{_PAD + 15 + 14 * k}" text-anchor="end" '
                   f'font-size="11" fill="{colour}">{yl}</text>')
    out.append("</svg>")
    with open(svg_path, "w") as fh:
        fh.write("\n".join(out) + "\n")
