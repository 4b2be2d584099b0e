"""Marching-squares contours and a small deterministic SVG writer."""

from __future__ import annotations

import numpy as np

# edge ids: 0 bottom (i0,j0)-(i1,j0), 1 right, 2 top, 3 left; corners ordered counter-clockwise
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(2, 0)], 11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}


def marching_squares(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, level: float = 0.0):
    """Segments of ``{values = level}`` on the grid ``values[i, j] at (xs[i], ys[j])``.

    Returns an array ``(k, 2, 2)`` of segment endpoints. Saddle cells are
    resolved by the cell-centre average. Non-finite corners skip the cell.
    """
    v = np.asarray(values, dtype=np.float64) - level
    segs = []
    nx, ny = v.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
            if not all(np.isfinite(c)):
                continue
            code = sum(1 << k for k, val in enumerate(c) if val < 0)
            if code in (0, 15):
                continue
            P = ((xs[i], ys[j]), (xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1]))

            def edge(e):
                a, b = e, (e + 1) % 4
                t = c[a] / (c[a] - c[b])
                return (P[a][0] + t * (P[b][0] - P[a][0]), P[a][1] + t * (P[b][1] - P[a][1]))

            if code in (5, 10):
                # cut off the two corners that the centre value separates
                cut_odd = (code == 5) == (sum(c) / 4 < 0)
                pairs = [(0, 1), (2, 3)] if cut_odd else [(3, 0), (1, 2)]
            else:
                pairs = _CASES[code]
            for a, b in pairs:
                segs.append((edge(a), edge(b)))
    return np.array(segs, dtype=np.float64).reshape(-1, 2, 2)


_PALETTE = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#117a65", "#5d6d7e"]


def svg_document(layers, bounds, width: int = 480, title: str = "") -> str:
    """SVG text for ``layers = [(label, segments), ...]`` inside ``bounds = (x0, x1, y0, y1)``.

    Coordinates are printed with fixed precision so output is byte-stable.
    """
    x0, x1, y0, y1 = map(float, bounds)
    scale = width / (x1 - x0)
    height = int(round((y1 - y0) * scale))

    def tx(x):
        return (x - x0) * scale

    def ty(y):
        return (y1 - y) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{_escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white" stroke="#999999"/>',
    ]
    for k, (label, segs) in enumerate(layers):
        color = _PALETTE[k % len(_PALETTE)]
        d = " ".join(f"M{tx(a[0]):.3f} {ty(a[1]):.3f}L{tx(b[0]):.3f} {ty(b[1]):.3f}" for a, b in segs)
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2">'
                   f"<title>{_escape(label)}</title></path>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
