"""CSV and SVG export of simulation traces."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .engine import SimTrace

__all__ = ["CSV_FIELDS", "csv_header", "write_csv", "read_csv", "write_plots"]

CSV_FIELDS = ("x", "v", "a", "ex", "ev", "ea", "g", "u")


def csv_header(trace: SimTrace) -> list[str]:
    cols = ["t"]
    for s in range(trace.n_slots):
        cols.extend(f"{f}_{s + 1}" for f in CSV_FIELDS)
    return cols


def write_csv(trace: SimTrace, path) -> Path:
    """One row per sample; columns ``t`` then per vehicle ``x v a ex ev ea g u``."""
    path = Path(path)
    n = trace.n_slots
    block = np.stack([trace.x, trace.v, trace.a, trace.e[..., 0],
                      trace.e[..., 1], trace.e[..., 2], trace.g, trace.u],
                     axis=2).reshape(trace.t.size, n * len(CSV_FIELDS))
    data = np.column_stack([trace.t, block])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(csv_header(trace))
        for row in data:
            wr.writerow(["" if np.isnan(x) else repr(float(x)) for x in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(x) if x else np.nan for x in r] for r in rows[1:]])
    return rows[0], data


def write_plots(trace: SimTrace, out_dir, stem: str = "trace") -> list[Path]:
    """Position, velocity and error panels as SVG line charts."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = [("position", "x [m]", [trace.leader[:, 0]], trace.x),
              ("velocity", "v [m/s]", [trace.leader[:, 1]], trace.v),
              ("position_error", "x error [m]", [], trace.e[..., 0]),
              ("velocity_error", "v error [m/s]", [], trace.e[..., 1]),
              ("acceleration_error", "a error [m/s^2]", [], trace.e[..., 2])]
    paths = []
    for name, ylabel, lead, data in panels:
        fig, ax = plt.subplots(figsize=(7, 4))
        for y in lead:
            ax.plot(trace.t, y, "k--", lw=1.2, label="leader")
        for s in range(trace.n_slots):
            ax.plot(trace.t, data[:, s], lw=0.9, label=trace.labels[s])
        for ev in trace.events:
            if ev["kind"] in ("merge", "split"):
                ax.axvline(ev["time"], color="grey", ls=":", lw=0.8)
        ax.set_xlabel("t [s]")
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        p = out_dir / f"{stem}_{name}.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        paths.append(p)
    return paths
