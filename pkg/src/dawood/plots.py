"""Hand-written SVG line plots of per-level training diagnostics."""
from __future__ import annotations

from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

PANELS = [("entropy", "weighted entropy"), ("chi2", "weighted chi2"), ("kl", "weighted KL")]
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
PANEL_W, PANEL_H, PAD = 260, 200, 40


def level_means(rows: list[dict], key: str) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Per alpha: levels and the tree-averaged value of ``key`` at each level."""
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[float(r["alpha"])][int(r["level"])].append(float(r[key]))
    out = {}
    for a in sorted(acc):
        levels = np.array(sorted(acc[a]))
        out[a] = levels, np.array([np.mean(acc[a][lv]) for lv in levels])
    return out


def _panel(x0: float, key: str, title: str, rows: list[dict]) -> list[str]:
    series = level_means(rows, key)
    max_level = max(int(r["level"]) for r in rows)
    top = max((v.max() for _, v in series.values()), default=1.0)
    top = top if top > 0 else 1.0
    sx = lambda lv: x0 + PAD + (PANEL_W - PAD) * lv / max(max_level, 1)
    sy = lambda v: PAD + (PANEL_H - PAD) * (1 - v / top)
    out = [f'<text x="{x0 + PANEL_W / 2 + PAD / 2:.1f}" y="20" text-anchor="middle">'
           f'{escape(title)}</text>',
           f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(max_level):.1f}" '
           f'y2="{sy(0):.1f}" stroke="black"/>',
           f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(0):.1f}" y2="{sy(top):.1f}" '
           f'stroke="black"/>',
           f'<text x="{sx(0) - 4:.1f}" y="{sy(top) + 4:.1f}" text-anchor="end" '
           f'font-size="10">{top:.3g}</text>',
           f'<text x="{sx(0) - 4:.1f}" y="{sy(0) + 4:.1f}" text-anchor="end" '
           f'font-size="10">0</text>',
           f'<text x="{sx(0):.1f}" y="{sy(0) + 14:.1f}" text-anchor="middle" '
           f'font-size="10">level 0</text>',
           f'<text x="{sx(max_level):.1f}" y="{sy(0) + 14:.1f}" text-anchor="middle" '
           f'font-size="10">level {max_level}</text>']
    for i, (a, (levels, vals)) in enumerate(series.items()):
        pts = " ".join(f"{sx(lv):.1f},{sy(v):.1f}" for lv, v in zip(levels, vals))
        out.append(f'<polyline fill="none" stroke="{COLORS[i % len(COLORS)]}" '
                   f'stroke-width="1.5" points="{pts}"><title>alpha={a:g}</title></polyline>')
    return out


def diagnostics_svg(rows: list[dict]) -> str:
    """Three panels (entropy, chi2, KL against tree level), one line per alpha."""
    if not rows:
        raise ValueError("no diagnostics rows to plot")
    width = len(PANELS) * (PANEL_W + PAD) + PAD
    height = PANEL_H + 3 * PAD
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (key, title) in enumerate(PANELS):
        parts.extend(_panel(i * (PANEL_W + PAD), key, title, rows))
    alphas = sorted({float(r["alpha"]) for r in rows})
    for i, a in enumerate(alphas):
        x = PAD + 110 * i
        y = PANEL_H + 2 * PAD
        parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" '
                     f'stroke="{COLORS[i % len(COLORS)]}" stroke-width="3"/>')
        parts.append(f'<text x="{x + 26}" y="{y + 4}">alpha={a:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
