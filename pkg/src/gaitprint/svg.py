"""Minimal deterministic SVG output: fingerprint heatmaps and accuracy curves."""
from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

# viridis sampled at 9 evenly spaced points
_VIRIDIS = np.array([
    (68, 1, 84), (71, 44, 122), (59, 81, 139), (44, 113, 142), (33, 144, 141),
    (39, 173, 129), (92, 200, 99), (170, 220, 50), (253, 231, 37),
], dtype=float)


def viridis(x: float) -> str:
    x = min(max(x, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    i = min(int(x), len(_VIRIDIS) - 2)
    rgb = _VIRIDIS[i] + (x - i) * (_VIRIDIS[i + 1] - _VIRIDIS[i])
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def fingerprint_svg(panels: Mapping[int, np.ndarray], lo: float, hi: float, title: str = "",
                    annotate: bool = False, cell_px: int = 22) -> str:
    """One square panel per lag. Row 0 (lowest value band) is drawn at the bottom.

    NaN cells are left blank; finite cells are coloured by estimate on a
    scale shared by all panels.
    """
    lags = list(panels)
    n = next(iter(panels.values())).shape[0] if panels else 0
    vals = np.concatenate([p[np.isfinite(p)] for p in panels.values()]) if panels else np.array([])
    vmin, vmax = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    span = vmax - vmin or 1.0
    pad, gap, top = 40, 30, 40
    side = n * cell_px
    width = pad + len(lags) * (side + gap)
    height = top + side + 50
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="{pad}" y="16" font-size="13">{escape(title)}</text>')
    for k, u in enumerate(lags):
        x0 = pad + k * (side + gap)
        out.append(f'<text x="{x0}" y="{top - 6}">lag {u}</text>')
        out.append(f'<rect x="{x0}" y="{top}" width="{side}" height="{side}" fill="#f4f4f4" stroke="#999"/>')
        P = panels[u]
        for r in range(n):
            for c in range(n):
                b = P[r, c]
                if not math.isfinite(b):
                    continue
                x, y = x0 + c * cell_px, top + (n - 1 - r) * cell_px
                out.append(f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
                           f'fill="{viridis((b - vmin) / span)}"><title>{b:.4g}</title></rect>')
                if annotate:
                    out.append(f'<text x="{x + 2}" y="{y + cell_px - 6}" font-size="7" fill="#fff">{b:.2g}</text>')
        out.append(f'<text x="{x0}" y="{top + side + 14}">{_fmt(lo)}</text>')
        out.append(f'<text x="{x0 + side - 12}" y="{top + side + 14}">{_fmt(hi)}</text>')
        out.append(f'<text x="{x0 + side / 2 - 30}" y="{top + side + 28}">lagged value (g)</text>')
    out.append(f'<text x="{pad}" y="{height - 6}">colour: estimate {vmin:.3g} to {vmax:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sensitivity_svg(curves: Mapping[str, Sequence[dict]], ks: Sequence[int] = (1, 5),
                    title: str = "") -> str:
    """Accuracy against window length; one panel per k, one line per curve label."""
    pw, ph, pad, gap = 260, 180, 45, 40
    width = pad + len(ks) * (pw + gap)
    height = pad + ph + 50
    dashes = ["", "6,3", "2,2", "10,4,2,4"]
    colours = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"]
    windows = sorted({r["window"] for rows in curves.values() for r in rows}) or [1]
    lw_min, lw_max = math.log(windows[0]), math.log(windows[-1]) if windows[-1] > windows[0] else math.log(windows[0]) + 1
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="{pad}" y="16" font-size="13">{escape(title)}</text>')
    for p, k in enumerate(ks):
        x0, y0 = pad + p * (pw + gap), pad
        out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>')
        out.append(f'<text x="{x0}" y="{y0 - 6}">rank-{k} accuracy</text>')
        for tick in (0.0, 0.5, 1.0):
            ty = y0 + ph * (1 - tick)
            out.append(f'<text x="{x0 - 24}" y="{ty + 3:.1f}">{tick:.1f}</text>')
        for w in windows:
            tx = x0 + pw * (math.log(w) - lw_min) / (lw_max - lw_min)
            out.append(f'<text x="{tx - 4:.1f}" y="{y0 + ph + 14}">{w}</text>')
        out.append(f'<text x="{x0 + pw / 2 - 40}" y="{y0 + ph + 30}">seconds averaged</text>')
        for i, (label, rows) in enumerate(curves.items()):
            pts = sorted((r["window"], r["accuracy"]) for r in rows if r["k"] == k)
            path = " ".join(f"{x0 + pw * (math.log(w) - lw_min) / (lw_max - lw_min):.1f},"
                            f"{y0 + ph * (1 - a):.1f}" for w, a in pts)
            dash = f' stroke-dasharray="{dashes[i % 4]}"' if dashes[i % 4] else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{colours[i % 4]}" stroke-width="2"{dash}/>')
            if p == 0:
                out.append(f'<text x="{x0 + 6}" y="{y0 + 14 + 12 * i}" fill="{colours[i % 4]}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
