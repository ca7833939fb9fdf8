"""Minimal deterministic SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math
from typing import Sequence

from .csvio import atomic_write_text

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 28, 42
_MAX_POINTS = 4000


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(1, target)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks


def _decimate(xs: Sequence[float], ys: Sequence[float]):
    n = len(xs)
    if n <= _MAX_POINTS:
        return xs, ys
    step = (n + _MAX_POINTS - 1) // _MAX_POINTS
    idx = list(range(0, n, step))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return [xs[i] for i in idx], [ys[i] for i in idx]


def _panel(
    parts: list[str],
    series,
    x0: float,
    y0: float,
    width: float,
    height: float,
    title: str,
    xlabel: str,
    ylabel: str,
) -> None:
    finite_x = [x for _, xs, _ in series for x in xs if math.isfinite(x)]
    finite_y = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    if not finite_x or not finite_y:
        finite_x, finite_y = [0.0, 1.0], [0.0, 1.0]
    xlo, xhi = min(finite_x), max(finite_x)
    ylo, yhi = min(finite_y), max(finite_y)
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        pad = max(1e-12, abs(ylo)) * 0.5 + 1e-12
        ylo, yhi = ylo - pad, yhi + pad
    else:
        pad = 0.05 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad

    px0, px1 = x0 + _MARGIN_L, x0 + width - _MARGIN_R
    py0, py1 = y0 + _MARGIN_T, y0 + height - _MARGIN_B

    def sx(v):
        return px0 + (v - xlo) / (xhi - xlo) * (px1 - px0)

    def sy(v):
        return py1 - (v - ylo) / (yhi - ylo) * (py1 - py0)

    parts.append(
        f'<rect x="{px0:.1f}" y="{py0:.1f}" width="{px1 - px0:.1f}" '
        f'height="{py1 - py0:.1f}" fill="none" stroke="#888"/>'
    )
    if title:
        parts.append(
            f'<text x="{(px0 + px1) / 2:.1f}" y="{y0 + 18:.1f}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{title}</text>'
        )
    for v in _nice_ticks(xlo, xhi):
        x = sx(v)
        parts.append(f'<line x1="{x:.1f}" y1="{py1:.1f}" x2="{x:.1f}" y2="{py1 + 4:.1f}" stroke="#444"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{py1 + 16:.1f}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{v:g}</text>'
        )
    for v in _nice_ticks(ylo, yhi):
        y = sy(v)
        parts.append(f'<line x1="{px0 - 4:.1f}" y1="{y:.1f}" x2="{px0:.1f}" y2="{y:.1f}" stroke="#444"/>')
        parts.append(
            f'<text x="{px0 - 6:.1f}" y="{y + 3:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{v:g}</text>'
        )
    parts.append(
        f'<text x="{(px0 + px1) / 2:.1f}" y="{py1 + 32:.1f}" text-anchor="middle" '
        f'font-size="11" font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="{x0 + 14:.1f}" y="{(py0 + py1) / 2:.1f}" text-anchor="middle" '
        f'font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 {x0 + 14:.1f} {(py0 + py1) / 2:.1f})">{ylabel}</text>'
    )
    for k, (label, xs, ys) in enumerate(series):
        xs_d, ys_d = _decimate(xs, ys)
        pts = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}"
            for x, y in zip(xs_d, ys_d)
            if math.isfinite(x) and math.isfinite(y)
        )
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"/>')
        if label:
            lx, ly = px1 - 110, py0 + 14 + 16 * k
            parts.append(f'<line x1="{lx:.1f}" y1="{ly:.1f}" x2="{lx + 22:.1f}" y2="{ly:.1f}" stroke="{color}" stroke-width="2"/>')
            parts.append(
                f'<text x="{lx + 27:.1f}" y="{ly + 4:.1f}" font-size="11" '
                f'font-family="sans-serif">{label}</text>'
            )


def line_chart(
    path: str,
    series,
    title: str = "",
    xlabel: str = "t",
    ylabel: str = "",
    width: int = 860,
    height: int = 440,
) -> None:
    """One panel of (label, xs, ys) series."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    _panel(parts, series, 0, 0, width, height, title, xlabel, ylabel)
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def stacked_panels(
    path: str,
    panels,
    xlabel: str = "t",
    width: int = 860,
    panel_height: int = 300,
) -> None:
    """Vertical stack of (title, ylabel, series) panels sharing the x label."""
    height = panel_height * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (title, ylabel, series) in enumerate(panels):
        _panel(parts, series, 0, i * panel_height, width, panel_height, title, xlabel, ylabel)
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
