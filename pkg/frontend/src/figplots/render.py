"""Grouped line charts from sweep result CSVs.

One figure per invocation: symbol rate on the x axis, either net bit rate
(Gbit/s) or the per-channel-use rate (bpcu) on the y axis, one labeled curve
per value of the grouping column.  Output is SVG by default so figures diff
cleanly in review; rendering is deterministic for identical inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "figplots"

import matplotlib.pyplot as plt  # noqa: E402

PANELS = {
    "net": ("r_b_bits_per_s", "net bit rate [Gbit/s]", 1e-9),
    "air": ("i_s_bpcu", "achievable rate [bpcu]", 1.0),
}

X_COLUMN = "r_sym_baud"

# sweep CSVs carry one row per stage and evaluation mode; default to the
# deployable receiver's aggregate, which repeats on the stage-1 row
DEFAULT_FILTERS = {"stage": "1", "mode": "decision"}


@dataclass(frozen=True)
class PlotSpec:
    csv_paths: tuple[str, ...]
    panel: str
    group_by: str
    out_path: str
    filters: dict = field(default_factory=lambda: dict(DEFAULT_FILTERS))

    def __post_init__(self):
        object.__setattr__(self, "csv_paths", tuple(self.csv_paths))
        if not self.csv_paths:
            raise ValueError("need at least one input CSV")
        if self.panel not in PANELS:
            raise ValueError(f"panel must be one of {sorted(PANELS)}, "
                             f"got {self.panel!r}")


def read_rows(paths) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


def extract_curves(spec: PlotSpec) -> dict[str, tuple[list[float], list[float]]]:
    """Per group value: x (symbol rate) and y (panel column) point lists,
    sorted by x.  Raises with the offending names when columns are missing."""
    rows = read_rows(spec.csv_paths)
    if not rows:
        raise ValueError("input CSVs contain no data rows")
    y_column = PANELS[spec.panel][0]
    required = {X_COLUMN, y_column, spec.group_by}
    missing = sorted(required - set(rows[0].keys()))
    if missing:
        raise ValueError(f"missing required columns: {', '.join(missing)}")
    for key, value in spec.filters.items():
        if key in rows[0]:
            rows = [r for r in rows if r[key] == value]
    groups: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        groups.setdefault(r[spec.group_by], []).append(
            (float(r[X_COLUMN]), float(r[y_column])))
    curves = {}
    for value in sorted(groups, key=_group_sort_key):
        points = sorted(set(groups[value]))
        curves[value] = ([p[0] for p in points], [p[1] for p in points])
    return curves


def _group_sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def render(spec: PlotSpec) -> dict[str, tuple[list[float], list[float]]]:
    """Write the figure and return the plotted curve data per group."""
    curves = extract_curves(spec)
    y_label, y_scale = PANELS[spec.panel][1:]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        for value, (x, y) in curves.items():
            ax.plot(np.multiply(x, 1e-9), np.multiply(y, y_scale),
                    marker="o", label=f"{spec.group_by} = {value}")
        ax.set_xlabel("symbol rate [GBaud]")
        ax.set_ylabel(y_label)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        Path(spec.out_path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out_path, metadata=_deterministic_metadata(spec.out_path))
    finally:
        plt.close(fig)
    return curves


def _deterministic_metadata(out_path: str) -> dict | None:
    suffix = Path(out_path).suffix.lower()
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".png":
        return {"Software": None}
    return None
