"""Minimal hand-written SVG line charts.

Charts are pure renderings of data already written to CSV; the output is
deterministic so reruns give identical files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    color: str | None = None
    width: float = 1.5
    opacity: float = 1.0
    dashed: bool = False


@dataclass
class Panel:
    series: list[Series]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    vlines: list[tuple[float, str]] = field(default_factory=list)
    legend: bool = True


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _panel_svg(p: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 55.0, 15.0, 28.0, 40.0
    pw, ph = w - left - right, h - top - bottom
    xs = [v for s in p.series for v in s.x]
    ys = [v for s in p.series for v in s.y]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ox + left + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return oy + top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<rect x="{ox + left:.2f}" y="{oy + top:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
           f'fill="none" stroke="#333" stroke-width="1"/>']
    if p.title:
        out.append(f'<text x="{ox + left + pw / 2:.2f}" y="{oy + 18:.2f}" text-anchor="middle" '
                   f'font-size="13">{escape(p.title)}</text>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{X(t):.2f}" y1="{oy + top + ph:.2f}" x2="{X(t):.2f}" '
                   f'y2="{oy + top + ph + 4:.2f}" stroke="#333"/>')
        out.append(f'<text x="{X(t):.2f}" y="{oy + top + ph + 16:.2f}" text-anchor="middle" '
                   f'font-size="10">{_fmt(t)}</text>')
    for t in _ticks(y0 + pad, y1 - pad):
        out.append(f'<line x1="{ox + left - 4:.2f}" y1="{Y(t):.2f}" x2="{ox + left:.2f}" '
                   f'y2="{Y(t):.2f}" stroke="#333"/>')
        out.append(f'<text x="{ox + left - 6:.2f}" y="{Y(t) + 3:.2f}" text-anchor="end" '
                   f'font-size="10">{_fmt(t)}</text>')
    if p.xlabel:
        out.append(f'<text x="{ox + left + pw / 2:.2f}" y="{oy + h - 6:.2f}" text-anchor="middle" '
                   f'font-size="11">{escape(p.xlabel)}</text>')
    if p.ylabel:
        cx, cy = ox + 14, oy + top + ph / 2
        out.append(f'<text x="{cx:.2f}" y="{cy:.2f}" text-anchor="middle" font-size="11" '
                   f'transform="rotate(-90 {cx:.2f} {cy:.2f})">{escape(p.ylabel)}</text>')
    for k, s in enumerate(p.series):
        color = s.color or PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(s.x, s.y))
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="{s.width}" stroke-opacity="{s.opacity}"{dash}/>')
    for v, label in p.vlines:
        if x0 <= v <= x1:
            out.append(f'<line x1="{X(v):.2f}" y1="{oy + top:.2f}" x2="{X(v):.2f}" '
                       f'y2="{oy + top + ph:.2f}" stroke="#000" stroke-dasharray="4,3"/>')
            out.append(f'<text x="{X(v) + 4:.2f}" y="{oy + top + 12:.2f}" font-size="10">'
                       f'{escape(label)}</text>')
    if p.legend:
        named = [(k, s) for k, s in enumerate(p.series) if s.label]
        for row, (k, s) in enumerate(named):
            color = s.color or PALETTE[k % len(PALETTE)]
            ly = oy + top + 14 + 14 * row
            lx = ox + left + pw - 110
            out.append(f'<line x1="{lx:.2f}" y1="{ly - 4:.2f}" x2="{lx + 18:.2f}" y2="{ly - 4:.2f}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 22:.2f}" y="{ly:.2f}" font-size="10">{escape(s.label)}</text>')
    return out


def render(panels: Sequence[Sequence[Panel]], path: str | Path, cell_w: float = 420.0,
           cell_h: float = 300.0) -> Path:
    """Write a grid of panels (rows of columns) to ``path``."""
    rows = len(panels)
    cols = max(len(r) for r in panels)
    width, height = cols * cell_w, rows * cell_h
    body = []
    for i, row in enumerate(panels):
        for j, panel in enumerate(row):
            body.extend(_panel_svg(panel, j * cell_w, i * cell_h, cell_w, cell_h))
    doc = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        *body,
        "</svg>",
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(doc) + "\n")
    return path
