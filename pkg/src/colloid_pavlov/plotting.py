"""SVG line plots of resistance trajectories.

One fixed style: 800x500 px canvas, log10 resistance axis, a legend for
each series. Output is byte-stable for identical input (no timestamp, fixed
hash salt for element ids).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .reports import read_csv  # noqa: E402

FIGSIZE = (8.0, 5.0)
DPI = 100  # 8x5 in at 100 dpi -> 800x500
STYLE = {
    "svg.hashsalt": "colloid-pavlov",
    "svg.fonttype": "path",
    "font.size": 11,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
}


def line_plot(path: str | Path, x: Sequence[float], series: dict[str, Sequence[float]],
              xlabel: str, ylabel: str = "resistance (ohm)", title: str | None = None,
              markers: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
        for label, ys in series.items():
            ax.plot(x, ys, marker="o" if markers else None, label=label)
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def plot_csv(csv_path: str | Path, svg_path: str | Path) -> Path:
    """Plot a ``cycles.csv`` (R_B per cycle) or ``trace.csv`` (R vs time)."""
    _, cols = read_csv(csv_path)
    if "r_b_after_bell_ohm" in cols:
        x = [int(c) for c in cols["cycle"]]
        series = {"after bell": [float(v) for v in cols["r_b_after_bell_ohm"]],
                  "after food": [float(v) for v in cols["r_b_after_food_ohm"]]}
        return line_plot(svg_path, x, series, "cycle", "R_B (ohm)", "Sample B resistance")
    if "t_s" in cols:
        x = [float(t) for t in cols["t_s"]]
        series = {"R_A": [float(v) for v in cols["r_a_ohm"]],
                  "R_B": [float(v) for v in cols["r_b_ohm"]]}
        return line_plot(svg_path, x, series, "time (s)", markers=False)
    raise ValueError(f"{csv_path}: neither a cycles nor a trace file")
