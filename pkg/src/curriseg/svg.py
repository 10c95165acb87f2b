"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ValueOutOfRange

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 20, 36, 48


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(
    path,
    series: list[tuple[str, list[float], list[float]]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> None:
    """Write a line chart; `series` is a list of (name, xs, ys)."""
    if not series or all(len(xs) == 0 for _, xs, _ in series):
        raise ValueOutOfRange("line_chart needs at least one non-empty series")
    for name, xs, ys in series:
        if len(xs) != len(ys):
            raise ValueOutOfRange(f"series {name!r}: {len(xs)} x values vs {len(ys)} y values")

    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    px_w = _W - _ML - _MR
    px_h = _H - _MT - _MB

    def sx(v: float) -> float:
        return _ML + (v - x_lo) / (x_hi - x_lo) * px_w

    def sy(v: float) -> float:
        return _MT + (1.0 - (v - y_lo) / (y_hi - y_lo)) * px_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{px_w}" height="{px_h}" '
        'fill="none" stroke="#999"/>',
    ]
    if title:
        out.append(
            f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
            f"{escape(title)}</text>"
        )

    for tv in _ticks(x_lo, x_hi):
        x = sx(tv)
        out.append(f'<line x1="{x:.1f}" y1="{_MT + px_h}" x2="{x:.1f}" y2="{_MT + px_h + 4}" stroke="#999"/>')
        out.append(
            f'<text x="{x:.1f}" y="{_MT + px_h + 18}" text-anchor="middle">{_fmt(tv)}</text>'
        )
    for tv in _ticks(y_lo, y_hi):
        y = sy(tv)
        out.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="#999"/>')
        out.append(
            f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt(tv)}</text>'
        )
    if x_label:
        out.append(
            f'<text x="{_ML + px_w / 2:.1f}" y="{_H - 10}" text-anchor="middle">'
            f"{escape(x_label)}</text>"
        )
    if y_label:
        out.append(
            f'<text x="16" y="{_MT + px_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_MT + px_h / 2:.1f})">{escape(y_label)}</text>'
        )

    for i, (name, xs, ys) in enumerate(series):
        if not xs:
            continue
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = _MT + 14 + 16 * i
        out.append(
            f'<line x1="{_ML + px_w - 130}" y1="{ly - 4}" x2="{_ML + px_w - 110}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{_ML + px_w - 104}" y="{ly}">{escape(name)}</text>')

    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
