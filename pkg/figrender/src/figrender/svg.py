"""Minimal deterministic SVG assembly.

Everything is plain text generated from the inputs alone (no timestamps, no
library version strings), so identical inputs yield identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")

FONT = "font-family=\"Helvetica, Arial, sans-serif\""


def fnum(v: float) -> str:
    """Deterministic short form for coordinates and labels."""
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


@dataclass
class Frame:
    """Maps data coordinates into one plot rectangle."""

    x0: float
    y0: float
    width: float
    height: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]

    def px(self, x: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * self.width

    def py(self, y: float) -> float:
        lo, hi = self.ylim
        return self.y0 + self.height - (y - lo) / (hi - lo) * self.height


@dataclass
class Canvas:
    width: int
    height: int
    parts: list[str] = field(default_factory=list)

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self, x: float, y: float, s: str, size: int = 12, anchor: str = "middle",
             rotate: float | None = None) -> None:
        transform = ""
        if rotate is not None:
            transform = f" transform=\"rotate({fnum(rotate)} {fnum(x)} {fnum(y)})\""
        self.add(
            f"<text x=\"{fnum(x)}\" y=\"{fnum(y)}\" {FONT} font-size=\"{size}\" "
            f"text-anchor=\"{anchor}\" fill=\"#222222\"{transform}>{escape(s)}</text>"
        )

    def line(self, x1, y1, x2, y2, color="#333333", width=1.0) -> None:
        self.add(
            f"<line x1=\"{fnum(x1)}\" y1=\"{fnum(y1)}\" x2=\"{fnum(x2)}\" y2=\"{fnum(y2)}\" "
            f"stroke=\"{color}\" stroke-width=\"{fnum(width)}\"/>"
        )

    def render(self) -> str:
        body = "\n".join(f"  {p}" for p in self.parts)
        return (
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f"<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{self.width}\" "
            f"height=\"{self.height}\" viewBox=\"0 0 {self.width} {self.height}\">\n"
            f"  <rect width=\"{self.width}\" height=\"{self.height}\" fill=\"#ffffff\"/>\n"
            f"{body}\n"
            "</svg>\n"
        )


def escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def draw_axes(canvas: Canvas, frame: Frame, x_label: str, y_label: str) -> None:
    x0, y0 = frame.x0, frame.y0
    x1, y1 = frame.x0 + frame.width, frame.y0 + frame.height
    canvas.line(x0, y1, x1, y1)
    canvas.line(x0, y0, x0, y1)
    for t in nice_ticks(*frame.xlim):
        if frame.xlim[0] <= t <= frame.xlim[1]:
            px = frame.px(t)
            canvas.line(px, y1, px, y1 + 4)
            canvas.text(px, y1 + 16, fnum(t), size=10)
    for t in nice_ticks(*frame.ylim):
        if frame.ylim[0] <= t <= frame.ylim[1]:
            py = frame.py(t)
            canvas.line(x0 - 4, py, x0, py)
            canvas.text(x0 - 7, py + 3, fnum(t), size=10, anchor="end")
    if x_label:
        canvas.text((x0 + x1) / 2, y1 + 34, x_label, size=12)
    if y_label:
        canvas.text(x0 - 46, (y0 + y1) / 2, y_label, size=12, rotate=-90.0)


def draw_legend(canvas: Canvas, frame: Frame, entries: list[tuple[str, str]]) -> None:
    lx = frame.x0 + frame.width - 150
    ly = frame.y0 + 8
    for i, (label, color) in enumerate(entries):
        y = ly + 16 * i
        canvas.add(
            f"<rect x=\"{fnum(lx)}\" y=\"{fnum(y)}\" width=\"12\" height=\"10\" "
            f"fill=\"{color}\" fill-opacity=\"0.7\"/>"
        )
        canvas.text(lx + 18, y + 9, label, size=11, anchor="start")
