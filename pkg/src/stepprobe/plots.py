"""Figure rendering for experiment reports.

Figures are written as SVG with a fixed hash salt and no embedded date,
so rerunning a report produces byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _configure() -> None:
    plt.rcParams["svg.hashsalt"] = "stepprobe"


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def ratio_curve(
    points: Sequence[Mapping],
    path: str | Path,
    chance: float | None = 0.5,
    ylabel: str = "distractor share r",
    title: str = "",
) -> Path:
    """Share-vs-distance curve, distance decreasing left to right.

    Each point needs d, value, low, high; points with no defined value
    are skipped but keep their slot on the axis.
    """
    _configure()
    ordered = sorted(points, key=lambda p: -p["d"])
    fig, ax = plt.subplots(figsize=(4.8, 3.2), constrained_layout=True)
    xs, ys, lows, highs, labels = [], [], [], [], []
    for slot, point in enumerate(ordered):
        labels.append(str(point["d"]))
        if point.get("value") is None:
            continue
        xs.append(slot)
        ys.append(point["value"])
        lows.append(max(0.0, point["value"] - point["low"]))
        highs.append(max(0.0, point["high"] - point["value"]))
    if xs:
        ax.errorbar(xs, ys, yerr=[lows, highs], marker="o", capsize=3)
    if chance is not None:
        ax.axhline(chance, linestyle="--", linewidth=1, color="gray")
        ax.annotate(
            f"chance = {chance:.3g}",
            xy=(0.02, chance),
            xycoords=("axes fraction", "data"),
            va="bottom",
            fontsize=8,
            color="gray",
        )
    ax.set_xticks(range(len(ordered)))
    ax.set_xticklabels(labels)
    ax.set_xlabel("steps from the answer (d)")
    ax.set_ylabel(ylabel)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title, fontsize=10)
    path = Path(path)
    _save(fig, path)
    return path


def selection_bars(
    rows: Sequence[Mapping],
    path: str | Path,
    title: str = "",
) -> Path:
    """Distractor selection frequency per variant, with interval bars.

    Each row needs variant, frequency, low, high; rows with no defined
    frequency get an empty slot.
    """
    _configure()
    fig, ax = plt.subplots(figsize=(4.8, 3.2), constrained_layout=True)
    labels = [str(row["variant"]) for row in rows]
    xs, ys, lows, highs = [], [], [], []
    for slot, row in enumerate(rows):
        if row.get("frequency") is None:
            continue
        xs.append(slot)
        ys.append(row["frequency"])
        lows.append(max(0.0, row["frequency"] - row["low"]))
        highs.append(max(0.0, row["high"] - row["frequency"]))
    if xs:
        ax.bar(xs, ys, width=0.6)
        ax.errorbar(xs, ys, yerr=[lows, highs], fmt="none", ecolor="black", capsize=3)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("selection frequency")
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title, fontsize=10)
    path = Path(path)
    _save(fig, path)
    return path
