"""Static plots of trace files.

One figure, stacked panels sharing the time axis: voltage magnitudes,
active powers, reactive powers and frequency each get their own panel so
a fault, the ride-through window and the re-balanced endpoint are
readable at a glance.  Output is a vector file; nothing interactive.
"""

from __future__ import annotations

import csv

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "trace-plot"   # deterministic output
import matplotlib.pyplot as plt
import numpy as np

# panel family -> (column prefix/name, axis label)
_FAMILIES = (
    ("v_", "voltage (pu)"),
    ("p_", "active power (MW)"),
    ("q_", "reactive power (MVAr)"),
    ("f_", "frequency (Hz)"),
)


class PlotError(ValueError):
    """Trace file unusable or requested columns absent."""


def read_trace_csv(path: str) -> dict[str, np.ndarray]:
    """Load a trace CSV as column name -> array."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if "t" not in header:
        raise PlotError(f"{path}: no 't' column in header")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise PlotError(f"{path}: non-numeric cell: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise PlotError(f"{path}: ragged rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def _family_of(column: str) -> str:
    for prefix, _ in _FAMILIES:
        if column.startswith(prefix):
            return prefix
    return "other"


def plot_trace(csv_path: str, out_path: str,
               columns: list[str] | None = None) -> list[str]:
    """Render selected columns (default: the standard families) to a file.

    Returns the list of columns actually drawn.
    """
    table = read_trace_csv(csv_path)
    t = table["t"]
    if columns:
        missing = [c for c in columns if c not in table]
        if missing:
            raise PlotError(f"{csv_path}: no such column(s): "
                            f"{', '.join(missing)}")
        chosen = list(columns)
    else:
        # default view: magnitudes, powers and frequency; angles and
        # bookkeeping columns stay out of the way
        chosen = [c for c in table
                  if _family_of(c) != "other" and not c.endswith("_ang")]
    if not chosen:
        raise PlotError(f"{csv_path}: nothing to plot")

    panels: dict[str, list[str]] = {}
    for c in chosen:
        panels.setdefault(_family_of(c), []).append(c)
    order = [p for p, _ in _FAMILIES if p in panels]
    if "other" in panels:
        order.append("other")
    labels = dict(_FAMILIES)

    fig, axes = plt.subplots(len(order), 1, sharex=True,
                             figsize=(9.0, 2.2 * len(order)), squeeze=False)
    for ax, fam in zip(axes[:, 0], order):
        for c in panels[fam]:
            ax.plot(t, table[c], lw=0.9, label=c)
        ax.set_ylabel(labels.get(fam, ""))
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper right", fontsize=7, ncol=2)
    axes[-1, 0].set_xlabel("t (s)")
    fig.tight_layout()
    if out_path.endswith(".svg"):
        fig.savefig(out_path, metadata={"Date": None})
    else:
        fig.savefig(out_path)
    plt.close(fig)
    return chosen
