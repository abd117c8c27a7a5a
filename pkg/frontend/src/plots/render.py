"""Figure assembly: group CSV rows into panels and series, draw, save.

Rendering is deterministic: panels and series are ordered by sorted key, x
values are sorted, and line styles are assigned by series position, so the
same CSV and spec always produce the same structure (axes count, line count,
legend labels, axis scales).
"""

from __future__ import annotations

import math
import warnings

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvdata import read_rows
from .spec import PlotSpec

LINE_STYLES = ["-", "--", "-."]
MARKERS = ["o", "s", "^", "v", "D", "x", "+", "*"]


class RenderError(Exception):
    pass


def series_label(spec: PlotSpec, key: tuple) -> str:
    parts = []
    for col, val in zip(spec.series, key):
        parts.append(f"{col}={val}" if val not in ("", None) else f"{col}=-")
    return ", ".join(parts)


def _group(rows, cols):
    out: dict[tuple, list] = {}
    for row in rows:
        out.setdefault(tuple(row[c] for c in cols), []).append(row)
    return dict(sorted(out.items(), key=lambda kv: tuple(map(str, kv[0]))))


def _draw_series(ax, spec: PlotSpec, rows, ycol):
    drawn = 0
    for idx, (key, grp) in enumerate(_group(rows, spec.series).items()):
        pts = sorted((r[spec.x_column], r[ycol]) for r in grp)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        if not ys or all(not math.isfinite(y) for y in ys):
            warnings.warn(f"series {series_label(spec, key)}: no finite data, skipped")
            continue
        ax.plot(
            xs,
            ys,
            linestyle=LINE_STYLES[idx % len(LINE_STYLES)],
            marker=MARKERS[idx % len(MARKERS)],
            label=series_label(spec, key),
        )
        drawn += 1
    return drawn


def _render_vs_dt(spec: PlotSpec, rows):
    panels = _group(rows, [spec.panels])
    n = len(panels)
    ncols = 2 if n > 1 else 1
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.2 * nrows), squeeze=False)
    flat = axes.ravel()
    for ax, ((pval,), grp) in zip(flat, panels.items()):
        ax.set_title(f"{spec.panels} = {pval}")
        ax.set_xscale("log")
        ax.set_xlabel("dt")
        ax.set_ylabel("iterations")
        if _draw_series(ax, spec, grp, "iterations_mean"):
            ax.legend(fontsize="small")
    for ax in flat[n:]:
        ax.set_axis_off()
    fig.tight_layout()
    return fig


def _render_vs_N(spec: PlotSpec, rows):
    fig, (ax_it, ax_wt) = plt.subplots(2, 1, figsize=(6.0, 6.4), sharex=True)
    ax_it.set_ylabel("iterations")
    ax_wt.set_ylabel("wall time [s]")
    ax_wt.set_xlabel("N")
    ax_wt.set_yscale("log")
    if _draw_series(ax_it, spec, rows, "iterations_mean"):
        ax_it.legend(fontsize="small")
    _draw_series(ax_wt, spec, rows, "wall_time_mean")
    fig.tight_layout()
    return fig


def render(spec: PlotSpec, csv_path: str | None = None, out_path: str | None = None):
    """Draw the figure described by spec from the CSV; returns the Figure.

    csv_path and out_path override the spec's own fields; if out_path ends
    up None the figure is returned unsaved.
    """
    csv_path = csv_path or spec.csv
    if csv_path is None:
        raise RenderError("no CSV given: pass --csv or set csv in the spec")
    rows = read_rows(csv_path, spec.columns_needed())
    if spec.kind == "vs_dt":
        fig = _render_vs_dt(spec, rows)
    else:
        fig = _render_vs_N(spec, rows)
    out_path = out_path or spec.out
    if out_path is not None:
        fig.savefig(out_path)
    return fig
