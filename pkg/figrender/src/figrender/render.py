"""Figure specs and rendering.

A FigureSpec names input CSVs, a figure kind, and an output path. Rendering
validates the CSV schemas first, computes nothing beyond bin counts and
coordinate transforms, and emits a deterministic SVG. Histogram bars carry
``data-count`` and ``data-bin-left``/``data-bin-right`` attributes so the
counts can be audited straight from the rendered file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .csvdata import check_columns, numeric_column, read_table
from .errors import FigRenderError
from .svg import PALETTE, Canvas, Frame, draw_axes, draw_legend, fnum

FIGURE_KINDS = ("margin_histogram", "alpha_curve", "error_curve", "sweep_panel")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[tuple[str, str], ...]  # (path, label) pairs
    output: str
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    bins: int = 60
    x_column: str = ""
    y_column: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise FigRenderError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise FigRenderError("figure spec needs at least one input CSV")
        if not self.output:
            raise FigRenderError("figure spec needs an output path")
        if self.bins < 1:
            raise FigRenderError("bins must be positive")
        if self.kind in ("error_curve", "sweep_panel") and not (self.x_column and self.y_column):
            raise FigRenderError(f"{self.kind} needs x_column and y_column")


def spec_from_dict(d: dict) -> FigureSpec:
    inputs = []
    for item in d.get("inputs", []):
        if isinstance(item, str):
            inputs.append((item, item))
        else:
            inputs.append((item["path"], item.get("label", item["path"])))
    return FigureSpec(
        kind=d.get("kind", ""),
        inputs=tuple(inputs),
        output=d.get("output", ""),
        title=d.get("title", ""),
        x_label=d.get("x_label", ""),
        y_label=d.get("y_label", ""),
        bins=int(d.get("bins", 60)),
        x_column=d.get("x_column", ""),
        y_column=d.get("y_column", ""),
    )


def load_spec(path) -> FigureSpec:
    with open(path) as f:
        return spec_from_dict(json.load(f))


def histogram_counts(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Half-open binning on explicit edges, last bin closed."""
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    counts = np.zeros(len(edges) - 1, dtype=int)
    for i in idx:
        counts[i] += 1
    return counts


MARGINS = (70, 20, 40, 55)  # left, right, top, bottom
PANEL_HEIGHT = 200.0
PANEL_GAP = 50.0


def _frame(canvas: Canvas, xlim, ylim, y0=None, height=None) -> Frame:
    left, right, top, bottom = MARGINS
    return Frame(
        x0=left,
        y0=top if y0 is None else y0,
        width=canvas.width - left - right,
        height=(canvas.height - top - bottom) if height is None else height,
        xlim=xlim,
        ylim=ylim,
    )


def _render_margin_histogram(spec: FigureSpec, canvas: Canvas) -> None:
    tables = {path: read_table(path) for path, _ in spec.inputs}
    check_columns(tables, ["value"])
    series = {path: numeric_column(tables[path], "value") for path, _ in spec.inputs}

    lo = min(float(v.min()) for v in series.values())
    hi = max(float(v.max()) for v in series.values())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, spec.bins + 1)
    all_counts = {path: histogram_counts(v, edges) for path, v in series.items()}
    ymax = max(int(c.max()) for c in all_counts.values())

    frame = _frame(canvas, (lo, hi), (0.0, ymax * 1.05))
    draw_axes(canvas, frame, spec.x_label or "margin", spec.y_label or "count")
    legend = []
    for i, (path, label) in enumerate(spec.inputs):
        color = PALETTE[i % len(PALETTE)]
        legend.append((label, color))
        counts = all_counts[path]
        canvas.add(f"<g class=\"series\" data-label=\"{label}\">")
        for b in range(spec.bins):
            if counts[b] == 0:
                continue
            x_left = frame.px(edges[b])
            x_right = frame.px(edges[b + 1])
            y_top = frame.py(float(counts[b]))
            y_base = frame.py(0.0)
            canvas.add(
                f"<rect x=\"{fnum(x_left)}\" y=\"{fnum(y_top)}\" "
                f"width=\"{fnum(x_right - x_left)}\" height=\"{fnum(y_base - y_top)}\" "
                f"fill=\"{color}\" fill-opacity=\"0.55\" "
                f"data-count=\"{int(counts[b])}\" "
                f"data-bin-left=\"{float(edges[b])!r}\" data-bin-right=\"{float(edges[b + 1])!r}\"/>"
            )
        canvas.add("</g>")
    draw_legend(canvas, frame, legend)


def _polyline(canvas: Canvas, frame: Frame, xs, ys, color: str, dashed=False) -> None:
    pts = " ".join(f"{fnum(frame.px(x))},{fnum(frame.py(y))}" for x, y in zip(xs, ys))
    dash = " stroke-dasharray=\"5,3\"" if dashed else ""
    canvas.add(
        f"<polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" "
        f"stroke-width=\"1.5\"{dash}/>"
    )


def _render_alpha_curve(spec: FigureSpec, canvas: Canvas) -> None:
    tables = {path: read_table(path) for path, _ in spec.inputs}
    check_columns(tables, ["gamma", "alpha_hat", "alpha_exact"])

    xmax = max(float(max(numeric_column(t, "gamma"))) for t in tables.values())
    ymax = max(float(max(numeric_column(t, "alpha_hat"))) for t in tables.values())
    frame = _frame(canvas, (0.0, xmax), (0.0, max(ymax, 1e-9) * 1.05))
    draw_axes(canvas, frame, spec.x_label or "gamma", spec.y_label or "failure probability")
    legend = []
    for i, (path, label) in enumerate(spec.inputs):
        color = PALETTE[i % len(PALETTE)]
        t = tables[path]
        g = numeric_column(t, "gamma")
        _polyline(canvas, frame, g, numeric_column(t, "alpha_hat"), color)
        _polyline(canvas, frame, g, numeric_column(t, "alpha_exact"), color, dashed=True)
        legend.append((f"{label} (label-free)", color))
        legend.append((f"{label} (labelled)", color))
    draw_legend(canvas, frame, legend)


def _render_error_curve(spec: FigureSpec, canvas: Canvas, inputs=None, y0=None,
                        height=None, title="") -> None:
    inputs = spec.inputs if inputs is None else inputs
    tables = {path: read_table(path) for path, _ in inputs}
    check_columns(tables, [spec.x_column, spec.y_column])

    xs = {p: numeric_column(t, spec.x_column) for p, t in tables.items()}
    ys = {p: numeric_column(t, spec.y_column) for p, t in tables.items()}
    xlo = min(float(v.min()) for v in xs.values())
    xhi = max(float(v.max()) for v in xs.values())
    yhi = max(float(v.max()) for v in ys.values())
    frame = _frame(canvas, (xlo, xhi if xhi > xlo else xlo + 1.0),
                   (0.0, max(yhi, 1e-9) * 1.05), y0=y0, height=height)
    draw_axes(canvas, frame, spec.x_label or spec.x_column, spec.y_label or spec.y_column)
    if title:
        canvas.text(frame.x0 + frame.width / 2, frame.y0 - 8, title, size=12)
    legend = []
    for i, (path, label) in enumerate(inputs):
        color = PALETTE[i % len(PALETTE)]
        order = np.argsort(xs[path], kind="stable")
        _polyline(canvas, frame, xs[path][order], ys[path][order], color)
        for x, y in zip(xs[path][order], ys[path][order]):
            canvas.add(
                f"<circle cx=\"{fnum(frame.px(x))}\" cy=\"{fnum(frame.py(y))}\" r=\"2.5\" "
                f"fill=\"{color}\" data-x=\"{float(x)!r}\" data-y=\"{float(y)!r}\"/>"
            )
        legend.append((label, color))
    if len(inputs) > 1:
        draw_legend(canvas, frame, legend)


def _render_sweep_panel(spec: FigureSpec, canvas: Canvas) -> None:
    top = MARGINS[2]
    for i, item in enumerate(spec.inputs):
        _render_error_curve(
            spec,
            canvas,
            inputs=[item],
            y0=top + i * (PANEL_HEIGHT + PANEL_GAP),
            height=PANEL_HEIGHT,
            title=item[1],
        )


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path written."""
    if spec.kind == "sweep_panel":
        top, bottom = MARGINS[2], MARGINS[3]
        n = len(spec.inputs)
        height = int(top + n * PANEL_HEIGHT + (n - 1) * PANEL_GAP + bottom)
    else:
        height = 500
    canvas = Canvas(width=800, height=height)
    if spec.title:
        canvas.text(400, 22, spec.title, size=15)
    if spec.kind == "margin_histogram":
        _render_margin_histogram(spec, canvas)
    elif spec.kind == "alpha_curve":
        _render_alpha_curve(spec, canvas)
    elif spec.kind == "error_curve":
        _render_error_curve(spec, canvas)
    else:
        _render_sweep_panel(spec, canvas)
    with open(spec.output, "w", newline="\n") as f:
        f.write(canvas.render())
    return spec.output


def render_batch(manifest_path) -> list[str]:
    """Render every figure spec listed in a manifest file, one at a time."""
    with open(manifest_path) as f:
        manifest = json.load(f)
    outputs = []
    for spec_path in manifest.get("figures", []):
        outputs.append(render(load_spec(spec_path)))
    return outputs
