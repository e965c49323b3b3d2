"""Minimal dependency-free SVG rendering of sweep curves and report bars."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ("#c0392b", "#2980b9", "#111111", "#27ae60", "#8e44ad", "#d35400")

_COLUMNS = ("miou_f", "miou_n", "miou_s")


def _axis_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def render_plot(results, path, width: int = 640, height: int = 440) -> None:
    """Render SNR-vs-mIoU line curves, one polyline per pipeline column.

    Legend labels match the CSV column names. Y axis is mIoU in percent.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to plot")

    series = []
    for idx, r in enumerate(results):
        for col in _COLUMNS:
            values = r.column(col)
            pts = [(s, v) for s, v in zip(r.snr_db, values) if not math.isnan(v)]
            if not pts:
                continue
            label = col
            if len(results) > 1:
                label += f" ({r.modulation or idx})"
            series.append((label, pts))
    if not series:
        raise ValueError("results contain no plottable values")

    all_x = [x for _, pts in series for x, _ in pts]
    x_lo, x_hi = min(all_x), max(all_x)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo, y_hi = 0.0, 100.0

    ml, mr, mt, mb = 64, 160, 24, 48
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y: float) -> float:
        return mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for t in _axis_ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" font-size="11" '
            f'text-anchor="middle">{t:g}</text>'
        )
    for t in _axis_ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" font-size="11" '
            f'text-anchor="end">{t:g}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" font-size="13" '
        f'text-anchor="middle">SNR dB</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">mIoU %</text>'
    )

    for i, (label, pts) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(100.0 * y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 16 + 18 * i
        parts.append(
            f'<line x1="{ml + pw + 12}" y1="{ly - 4}" x2="{ml + pw + 36}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{ml + pw + 42}" y="{ly}" font-size="12">{escape(label)}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")


def render_bars(groups, path, ylabel: str, width: int = 520, height: int = 360) -> None:
    """Render labeled bars, e.g. bits per image or MACs per pipeline.

    `groups` is a list of (label, value) pairs.
    """
    groups = list(groups)
    if not groups:
        raise ValueError("no bars to plot")
    vmax = max(v for _, v in groups)
    if vmax <= 0:
        vmax = 1.0
    ml, mr, mt, mb = 72, 20, 24, 56
    pw, ph = width - ml - mr, height - mt - mb
    slot = pw / len(groups)
    bar_w = slot * 0.55

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="16" y="{mt + ph / 2:.1f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for i, (label, value) in enumerate(groups):
        x = ml + slot * i + (slot - bar_w) / 2
        bh = ph * (value / vmax)
        y = mt + ph - bh
        color = _COLORS[i % len(_COLORS)]
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{bh:.2f}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{y - 6:.2f}" font-size="11" '
            f'text-anchor="middle">{value:g}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{mt + ph + 18}" font-size="12" '
            f'text-anchor="middle">{escape(str(label))}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
