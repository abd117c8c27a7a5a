"""Plot specification files: which figure to draw and how to group the rows.

A spec is a small INI file with a single [figure] section:

    [figure]
    kind = vs_dt            ; or vs_N
    panels = preconditioner ; column whose values become panels (vs_dt only)
    series = preconditioner, r, k
    csv = results.csv       ; optional, --csv overrides
    out = figure.png        ; optional, --out overrides

vs_dt draws iteration counts against the time step, one panel per distinct
value of the panel column.  vs_N draws two stacked panels, iterations on top
and wallclock time below, against the number of observation times.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field


class SpecError(Exception):
    pass


KINDS = ("vs_dt", "vs_N")


@dataclass
class PlotSpec:
    kind: str
    series: list[str] = field(default_factory=lambda: ["preconditioner", "r", "k"])
    panels: str | None = None
    csv: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.series:
            raise SpecError("series needs at least one column")
        if self.kind == "vs_dt" and self.panels is None:
            raise SpecError("vs_dt figures need a panels column")

    @property
    def x_column(self):
        return "dt" if self.kind == "vs_dt" else "N"

    def columns_needed(self) -> list[str]:
        cols = [self.x_column, "iterations_mean", *self.series]
        if self.kind == "vs_N":
            cols.append("wall_time_mean")
        if self.panels is not None:
            cols.append(self.panels)
        # preserve order, drop duplicates
        return list(dict.fromkeys(cols))


def load_spec(path: str) -> PlotSpec:
    """Parse a spec file; raises SpecError with the offending file named."""
    cp = configparser.ConfigParser()
    try:
        read = cp.read(path)
    except configparser.Error as e:
        raise SpecError(f"{path}: {e}") from e
    if not read:
        raise SpecError(f"{path}: cannot read spec file")
    if not cp.has_section("figure"):
        raise SpecError(f"{path}: missing [figure] section")
    sec = cp["figure"]
    known = {"kind", "panels", "series", "csv", "out"}
    for key in sec:
        if key not in known:
            raise SpecError(f"{path}: unknown key {key!r} in [figure]")
    if "kind" not in sec:
        raise SpecError(f"{path}: [figure] needs a kind")
    kwargs = {"kind": sec["kind"].strip()}
    if "series" in sec:
        kwargs["series"] = [c.strip() for c in sec["series"].split(",") if c.strip()]
    for key in ("panels", "csv", "out"):
        if key in sec:
            kwargs[key] = sec[key].strip()
    try:
        return PlotSpec(**kwargs)
    except SpecError as e:
        raise SpecError(f"{path}: {e}") from e
