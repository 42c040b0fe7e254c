"""Minimal deterministic SVG charts (lines with error bars, heatmaps).

Written directly as text so report bytes are stable across machines; no
plotting library is involved.
"""

from __future__ import annotations

import math

WIDTH = 640
HEIGHT = 420
MARGIN_L = 70
MARGIN_R = 150
MARGIN_T = 40
MARGIN_B = 56

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#17becf", "#7f7f7f")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12:
        out.append(round(t, 12))
        t += step
    return out


class Figure:
    def __init__(self, title: str, x_label: str, y_label: str):
        self.title = title
        self.x_label = x_label
        self.y_label = y_label
        self.parts: list[str] = []
        self.x_range = (0.0, 1.0)
        self.y_range = (0.0, 1.0)
        self.legend: list[tuple[str, str]] = []

    def set_ranges(self, xs: list[float], ys: list[float], y_pad: float = 0.08):
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 1, x_hi + 1
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 1, y_hi + 1
        pad = (y_hi - y_lo) * y_pad
        self.x_range = (x_lo - 0.04 * (x_hi - x_lo), x_hi + 0.04 * (x_hi - x_lo))
        self.y_range = (y_lo - pad, y_hi + pad)

    def _px(self, x: float) -> float:
        lo, hi = self.x_range
        return MARGIN_L + (x - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R)

    def _py(self, y: float) -> float:
        lo, hi = self.y_range
        return HEIGHT - MARGIN_B - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)

    def line(self, xs, ys, color: str, label: str = "", err: list[float] | None = None):
        pts = " ".join(f"{_fmt(self._px(x))},{_fmt(self._py(y))}" for x, y in zip(xs, ys))
        self.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'
        )
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<circle cx="{_fmt(self._px(x))}" cy="{_fmt(self._py(y))}" '
                f'r="3" fill="{color}"/>'
            )
        if err is not None:
            for x, y, e in zip(xs, ys, err):
                if e is None:
                    continue
                x0 = _fmt(self._px(x))
                self.parts.append(
                    f'<line x1="{x0}" y1="{_fmt(self._py(y - e))}" x2="{x0}" '
                    f'y2="{_fmt(self._py(y + e))}" stroke="{color}" stroke-width="1"/>'
                )
                for yy in (y - e, y + e):
                    self.parts.append(
                        f'<line x1="{_fmt(self._px(x) - 4)}" y1="{_fmt(self._py(yy))}" '
                        f'x2="{_fmt(self._px(x) + 4)}" y2="{_fmt(self._py(yy))}" '
                        f'stroke="{color}" stroke-width="1"/>'
                    )
        if label:
            self.legend.append((label, color))

    def annotate(self, text: str):
        self.parts.append(
            f'<text x="{MARGIN_L + 10}" y="{MARGIN_T + 16}" font-size="13" '
            f'font-family="monospace" fill="#333">{text}</text>'
        )

    def render(self) -> str:
        axes = []
        x_axis_y = HEIGHT - MARGIN_B
        axes.append(
            f'<line x1="{MARGIN_L}" y1="{x_axis_y}" x2="{WIDTH - MARGIN_R}" '
            f'y2="{x_axis_y}" stroke="#000"/>'
        )
        axes.append(
            f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
            f'y2="{x_axis_y}" stroke="#000"/>'
        )
        for t in _ticks(*self.x_range):
            if not self.x_range[0] <= t <= self.x_range[1]:
                continue
            px = _fmt(self._px(t))
            axes.append(
                f'<line x1="{px}" y1="{x_axis_y}" x2="{px}" y2="{x_axis_y + 5}" stroke="#000"/>'
            )
            axes.append(
                f'<text x="{px}" y="{x_axis_y + 20}" font-size="12" text-anchor="middle">'
                f"{t:g}</text>"
            )
        for t in _ticks(*self.y_range):
            if not self.y_range[0] <= t <= self.y_range[1]:
                continue
            py = _fmt(self._py(t))
            axes.append(
                f'<line x1="{MARGIN_L - 5}" y1="{py}" x2="{MARGIN_L}" y2="{py}" stroke="#000"/>'
            )
            axes.append(
                f'<text x="{MARGIN_L - 9}" y="{py}" font-size="12" text-anchor="end" '
                f'dominant-baseline="middle">{t:g}</text>'
            )
        legend = []
        ly = MARGIN_T
        for label, color in self.legend:
            legend.append(
                f'<rect x="{WIDTH - MARGIN_R + 12}" y="{ly}" width="14" height="4" '
                f'fill="{color}"/>'
            )
            legend.append(
                f'<text x="{WIDTH - MARGIN_R + 32}" y="{ly + 5}" font-size="12">{label}</text>'
            )
            ly += 20
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
            f'<text x="{WIDTH / 2:g}" y="22" font-size="15" text-anchor="middle" '
            f'font-weight="bold">{self.title}</text>\n'
            f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2:g}" y="{HEIGHT - 14}" '
            f'font-size="13" text-anchor="middle">{self.x_label}</text>\n'
            f'<text x="16" y="{(MARGIN_T + HEIGHT - MARGIN_B) / 2:g}" font-size="13" '
            f'text-anchor="middle" transform="rotate(-90 16 '
            f'{(MARGIN_T + HEIGHT - MARGIN_B) / 2:g})">{self.y_label}</text>\n'
            + "\n".join(axes + self.parts + legend)
            + "\n</svg>\n"
        )


def heatmap(
    title: str,
    row_labels: list[str],
    col_labels: list[str],
    values: list[list[float | None]],
    x_label: str,
    y_label: str,
) -> str:
    """Grid heatmap; cells carry their numeric value. None renders gray."""
    flat = [v for row in values for v in row if v is not None]
    lo = min(flat) if flat else 0.0
    hi = max(flat) if flat else 1.0
    if hi == lo:
        hi = lo + 1.0
    cell_w = (WIDTH - MARGIN_L - 60) / max(1, len(col_labels))
    cell_h = (HEIGHT - MARGIN_T - MARGIN_B) / max(1, len(row_labels))
    parts = []
    for i, rlabel in enumerate(row_labels):
        y = MARGIN_T + i * cell_h
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(y + cell_h / 2)}" font-size="12" '
            f'text-anchor="end" dominant-baseline="middle">{rlabel}</text>'
        )
        for j, _ in enumerate(col_labels):
            v = values[i][j]
            x = MARGIN_L + j * cell_w
            if v is None:
                fill = "#cccccc"
            else:
                frac = (v - lo) / (hi - lo)
                # white -> dark red ramp
                red = 255
                gb = round(235 * (1.0 - frac))
                fill = f"#{red:02x}{gb:02x}{gb:02x}"
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cell_w)}" '
                f'height="{_fmt(cell_h)}" fill="{fill}" stroke="#666"/>'
            )
            if v is not None:
                parts.append(
                    f'<text x="{_fmt(x + cell_w / 2)}" y="{_fmt(y + cell_h / 2)}" '
                    f'font-size="12" text-anchor="middle" dominant-baseline="middle">'
                    f"{v:.4f}</text>"
                )
    for j, clabel in enumerate(col_labels):
        x = MARGIN_L + j * cell_w + cell_w / 2
        parts.append(
            f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN_B + 20}" font-size="12" '
            f'text-anchor="middle">{clabel}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
        f'<text x="{WIDTH / 2:g}" y="22" font-size="15" text-anchor="middle" '
        f'font-weight="bold">{title}</text>\n'
        f'<text x="{WIDTH / 2:g}" y="{HEIGHT - 14}" font-size="13" '
        f'text-anchor="middle">{x_label}</text>\n'
        f'<text x="16" y="{HEIGHT / 2:g}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT / 2:g})">{y_label}</text>\n'
        + "\n".join(parts)
        + "\n</svg>\n"
    )
