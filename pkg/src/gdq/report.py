"""Rendering of run artifacts: CSV tables and matplotlib figures.

Every command that emits delimited output can render a companion figure next
to it: the corpus entropy histogram for ``stats``, the per-patch bit
allocation map and bit histogram for ``report``, and the FAB/PSNR trade-off
scatter for ``sweep``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .plan import PatchPlan

BIT_CMAP = "viridis"


def write_histogram_csv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    """Bin table: one row per bin with its edges and count."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(counts):
            writer.writerow([f"{edges[i]:.9g}", f"{edges[i + 1]:.9g}", int(count)])


def write_per_patch_csv(path, plans: list[PatchPlan]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "row", "col", "entropy", "gbc_bit", "final_bit", "p"])
        for p in plans:
            writer.writerow([
                p.patch_id, p.origin[0], p.origin[1],
                "" if p.entropy is None else f"{p.entropy:.9g}",
                p.gbc_bit, p.final_bit,
                "" if p.score is None else f"{p.score:.9g}",
            ])


def write_sweep_csv(path, rows: list[dict]) -> None:
    fields = ["config", "fab", "psnr_db", "ssim", "bitops_ratio", "status"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})


def render_entropy_histogram(path, edges: np.ndarray, counts: np.ndarray,
                             cutoffs=None) -> None:
    """Corpus entropy distribution, optionally with threshold cutoffs marked."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    centers = 0.5 * (np.asarray(edges[:-1]) + np.asarray(edges[1:]))
    width = float(edges[1] - edges[0]) if len(edges) > 1 else 1.0
    ax.bar(centers, counts, width=width * 0.95, color="#4878cf")
    if cutoffs:
        for cut in cutoffs:
            ax.axvline(cut, color="#d65f5f", linestyle="--", linewidth=1)
    ax.set_xlabel("patch entropy (nats)")
    ax.set_ylabel("patch count")
    ax.set_title("Entropy distribution over corpus patches")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bit_map(path, plans: list[PatchPlan], patch_size: int) -> None:
    """Spatial map of the final bit allocated to each patch."""
    if not plans:
        raise ValueError("no plans to render")
    rows = sorted({p.origin[0] for p in plans})
    cols = sorted({p.origin[1] for p in plans})
    r_index = {r: i for i, r in enumerate(rows)}
    c_index = {c: i for i, c in enumerate(cols)}
    grid = np.full((len(rows), len(cols)), np.nan)
    for p in plans:
        grid[r_index[p.origin[0]], c_index[p.origin[1]]] = p.final_bit
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(grid, cmap=BIT_CMAP, interpolation="nearest")
    fig.colorbar(im, ax=ax, label="final bit-width")
    ax.set_title(f"Per-patch bit allocation ({patch_size}px tiles)")
    ax.set_xlabel("patch column")
    ax.set_ylabel("patch row")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bit_histogram(path, plans: list[PatchPlan]) -> None:
    bits = [p.final_bit for p in plans]
    values = sorted(set(bits))
    counts = [bits.count(v) for v in values]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.bar([str(v) for v in values], counts, color="#6acc65")
    ax.set_xlabel("final bit-width")
    ax.set_ylabel("patches")
    ax.set_title("Bit allocation histogram")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_tradeoff(path, rows: list[dict]) -> None:
    """FAB vs PSNR scatter for the sweep rows that succeeded."""
    ok = [r for r in rows if r.get("status") == "ok" and r.get("psnr_db") not in ("", None)]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for row in ok:
        ax.scatter(float(row["fab"]), float(row["psnr_db"]), s=40)
        ax.annotate(row["config"], (float(row["fab"]), float(row["psnr_db"])),
                    textcoords="offset points", xytext=(5, 3), fontsize=8)
    ax.set_xlabel("FAB (average bit-width)")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title("Accuracy / efficiency trade-off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
