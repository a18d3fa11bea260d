"""Log-log plots of result tables as self-contained SVG text."""
from __future__ import annotations

import math
from collections import defaultdict
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _series(rows: list[dict]) -> dict:
    out = defaultdict(list)
    for r in rows:
        if not r["N"]:
            continue
        try:
            est, lo, hi = float(r["estimate"]), float(r["ci_lo"]), float(r["ci_hi"])
        except ValueError:
            continue
        if not math.isfinite(est):
            continue
        out[(r["kind"], r["lambda"])].append((int(r["N"]), est, lo, hi))
    return {k: sorted(v) for k, v in out.items()}


def _ticks(lo: float, hi: float) -> list[float]:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(a, b + 1)]


def svg_plot(rows: list[dict], title: str = "") -> str:
    """Estimate against ``N`` on log axes, one series per ``(kind, lambda)``, with interval bars.

    Nonpositive values cannot sit on a log axis and are clipped to the
    smallest positive value present.
    """
    series = _series(rows)
    xs = [p[0] for s in series.values() for p in s]
    ys = [v for s in series.values() for p in s for v in p[1:] if v > 0]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<text x="{WIDTH / 2}" y="20" text-anchor="middle">{escape(title)}</text>']
    if not xs or not ys:
        parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT / 2}" text-anchor="middle">no plottable rows</text>')
        return "\n".join(parts + ["</svg>"]) + "\n"
    floor = min(ys)
    x0, x1 = math.log10(min(xs)), math.log10(max(xs))
    y0, y1 = math.log10(floor), math.log10(max(ys))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return HEIGHT - MARGIN - (math.log10(max(y, floor)) - y0) / (y1 - y0) * ph

    parts.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(10 ** x0, 10 ** x1):
        if 10 ** x0 <= t <= 10 ** x1:
            parts.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(10 ** y0, 10 ** y1):
        if 10 ** y0 <= t <= 10 ** y1:
            parts.append(f'<text x="{MARGIN - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 16}" text-anchor="middle">N</text>')
    for k, ((kind, lam), pts) in enumerate(sorted(series.items())):
        colour = PALETTE[k % len(PALETTE)]
        path = " ".join(f"{'M' if i == 0 else 'L'}{px(n):.1f},{py(e):.1f}" for i, (n, e, _, _) in enumerate(pts))
        parts.append(f'<path d="{path}" fill="none" stroke="{colour}"/>')
        for n, e, lo, hi in pts:
            parts.append(f'<line x1="{px(n):.1f}" y1="{py(lo):.1f}" x2="{px(n):.1f}" y2="{py(hi):.1f}" '
                         f'stroke="{colour}"/>')
            parts.append(f'<circle cx="{px(n):.1f}" cy="{py(e):.1f}" r="3" fill="{colour}"/>')
        parts.append(f'<text x="{MARGIN + 8}" y="{MARGIN + 16 + 14 * k}" fill="{colour}">'
                     f'{escape(kind)} lambda={escape(lam)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
