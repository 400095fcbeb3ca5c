"""Figures for run reports (non-interactive Agg backend)."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402


def plot_rcs(
    curves: Iterable[Tuple[str, Sequence[float], Sequence[float]]],
    path,
    title: str = "",
    xlabel: str = "theta (deg)",
    floor_dbsm: Optional[float] = -60.0,
) -> None:
    """Overlay ``(label, theta_deg, dBsm)`` curves and save to ``path``."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, th, db in curves:
        db = np.asarray(db, dtype=float)
        if floor_dbsm is not None:
            db = np.where(np.isfinite(db), np.maximum(db, floor_dbsm), np.nan)
        ax.plot(th, db, label=label, lw=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("RCS (dBsm)")
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_partition(rows, n: int, path, title: str = "H-matrix partition") -> None:
    """Draw the block partition; low-rank blocks are shaded by rank, dense blocks in red.

    ``rows`` are the dictionaries produced by ``hmatrix.partition_rows``.
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    low, dense, ranks = [], [], []
    for r in rows:
        rect = Rectangle((r["col_start"], r["row_start"]), r["col_stop"] - r["col_start"], r["row_stop"] - r["row_start"])
        if int(r["admissible"]):
            low.append(rect)
            ranks.append(float(r["rank"]) if r["rank"] != "" else 0.0)
        else:
            dense.append(rect)
    if low:
        pc = PatchCollection(low, cmap="Greens", edgecolor="k", linewidth=0.2)
        pc.set_array(np.asarray(ranks))
        ax.add_collection(pc)
        fig.colorbar(pc, ax=ax, fraction=0.046, pad=0.04, label="ACA rank")
    if dense:
        ax.add_collection(PatchCollection(dense, facecolor="tab:red", edgecolor="k", linewidth=0.2, alpha=0.8))
    ax.set_xlim(0, n)
    ax.set_ylim(n, 0)
    ax.set_aspect("equal")
    ax.set_xlabel("column (tree order)")
    ax.set_ylabel("row (tree order)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
