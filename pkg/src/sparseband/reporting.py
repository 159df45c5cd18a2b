"""Delimited curve exports and the matplotlib figures rendered next to them."""

from __future__ import annotations

import csv
import io

import numpy as np

__all__ = [
    "write_curve_csv",
    "plot_curve",
    "plot_selection_trace",
    "plot_node_table",
    "plot_label_image",
]


def write_curve_csv(path, header, rows) -> None:
    """RFC-4180 CSV with a one-line header; floats written via repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _axes(xlabel, ylabel, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.5), dpi=120)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    import matplotlib.pyplot as plt
    plt.close(fig)


def plot_curve(path, x, y, xlabel, ylabel, title, marker="o") -> None:
    fig, ax = _axes(xlabel, ylabel, title)
    ax.plot(x, y, marker=marker)
    _save(fig, path)


def plot_selection_trace(path, steps, title) -> None:
    """Accuracy trace of a greedy selection: one point per accepted band."""
    fig, ax = _axes("step", "accuracy", title)
    xs = np.arange(1, len(steps) + 1)
    ys = [s["accuracy"] for s in steps]
    ax.plot(xs, ys, marker="o")
    for x, s in zip(xs, steps):
        ax.annotate(str(s["band"]), (x, s["accuracy"]),
                    textcoords="offset points", xytext=(0, 6), fontsize=8)
    ax.set_ylim(0.0, 1.05)
    _save(fig, path)


def plot_node_table(path, rows, title) -> None:
    """Fitted tree nodes in the (lambda, cardinality) plane, one color per level."""
    fig, ax = _axes("lambda", "group cardinality", title)
    ax.set_xscale("log")
    levels = sorted({r["level"] for r in rows})
    for level in levels:
        pts = [(r["lambda"], r["cardinality"]) for r in rows
               if r["level"] == level and r["fitted"]]
        if pts:
            xs, ys = zip(*pts)
            ax.scatter(xs, ys, s=18, label=f"level {level}")
    if any(r["fitted"] for r in rows):
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_label_image(path, labels: np.ndarray, title) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5), dpi=120)
    ax.imshow(labels, interpolation="nearest", cmap="viridis")
    ax.set_title(title)
    ax.set_axis_off()
    _save(fig, path)
