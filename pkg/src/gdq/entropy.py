"""Gaussian-kernel density entropy of image patches and corpus statistics.

A patch's pixels are softly binned: pixel i contributes kernel mass
exp(-(x_i - v_j)^2 / (2 sigma^2)) to every bin center v_j = (j + 0.5) / B.
The default ("bin_wise") entropy is the Shannon entropy of the normalized
per-bin mass. The literal per-pixel alternative ("pixel_wise"), which scores
a constant patch as maximally entropic, is kept behind a switch.

Entropies are in nats. Corpus-level statistics are the ascending-sorted
per-patch entropies, from which quantile thresholds are read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path

import numpy as np

from .image_io import to_luma

INTERPRETATIONS = ("bin_wise", "pixel_wise")


@dataclass(frozen=True)
class EntropyConfig:
    """Kernel-density entropy settings: bin count, bandwidth, normalization floor."""

    bins: int = 256
    sigma: float | None = None  # None -> one bin width
    epsilon: float = 1e-12
    interpretation: str = "bin_wise"

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(
                f"interpretation must be one of {INTERPRETATIONS}, got {self.interpretation!r}"
            )

    @property
    def bandwidth(self) -> float:
        return self.sigma if self.sigma is not None else 1.0 / self.bins

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "sigma": self.bandwidth,
            "epsilon": self.epsilon,
            "interpretation": self.interpretation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyConfig":
        return cls(
            bins=int(d["bins"]),
            sigma=float(d["sigma"]),
            epsilon=float(d["epsilon"]),
            interpretation=str(d["interpretation"]),
        )


def _kernel_matrix(patch: np.ndarray, cfg: EntropyConfig) -> np.ndarray:
    """Pixel-by-bin Gaussian kernel masses, pixels in canonical sorted order.

    Sorting makes downstream sums exactly invariant under pixel permutation.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 4:
        patch = to_luma(patch)
    x = np.sort(patch.ravel())
    if x.size == 0:
        raise ValueError("cannot compute entropy of an empty patch")
    centers = (np.arange(cfg.bins, dtype=np.float64) + 0.5) / cfg.bins
    sigma = cfg.bandwidth
    return np.exp(-((x[:, None] - centers[None, :]) ** 2) / (2.0 * sigma * sigma))


def bin_masses(patch: np.ndarray, cfg: EntropyConfig = EntropyConfig()) -> np.ndarray:
    """Normalized per-bin kernel mass of a patch (sums to <= 1)."""
    kernel = _kernel_matrix(patch, cfg)
    return kernel.sum(axis=0) / (kernel.sum() + cfg.epsilon)


def patch_entropy(patch: np.ndarray, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Kernel-density entropy (nats) of one patch's pixel distribution.

    RGB patches are collapsed to BT.601 luma first. The result is exactly
    invariant under pixel permutation.
    """
    kernel = _kernel_matrix(patch, cfg)
    total = kernel.sum() + cfg.epsilon
    axis = 0 if cfg.interpretation == "bin_wise" else 1
    density = kernel.sum(axis=axis) / total
    positive = density[density > 0.0]
    return float(-np.sum(positive * np.log(positive)))


@dataclass(frozen=True)
class EntropyStats:
    """Ascending-sorted per-patch entropies over a corpus."""

    values: tuple[float, ...]
    config: EntropyConfig = field(default_factory=EntropyConfig)

    def __post_init__(self):
        if len(self.values) < 2:
            raise ValueError(f"entropy statistics need >= 2 patches, got {len(self.values)}")
        if any(self.values[i] > self.values[i + 1] for i in range(len(self.values) - 1)):
            raise ValueError("entropy statistics must be sorted ascending")

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def h_min(self) -> float:
        return self.values[0]

    @property
    def h_max(self) -> float:
        return self.values[-1]

    @classmethod
    def from_entropies(cls, entropies, cfg: EntropyConfig = EntropyConfig()) -> "EntropyStats":
        return cls(values=tuple(sorted(float(e) for e in entropies)), config=cfg)

    def to_dict(self) -> dict:
        return {"M": self.count, "values": list(self.values), "config": self.config.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyStats":
        stats = cls(
            values=tuple(float(v) for v in d["values"]),
            config=EntropyConfig.from_dict(d["config"]),
        )
        if d.get("M") is not None and int(d["M"]) != stats.count:
            raise ValueError(f"stats file M={d['M']} disagrees with {stats.count} stored values")
        return stats


def build_entropy_stats(corpus, cfg: EntropyConfig = EntropyConfig()) -> EntropyStats:
    """Compute and sort the per-patch entropies of an iterable of patches."""
    entropies = [patch_entropy(p, cfg) for p in corpus]
    if len(entropies) < 2:
        raise ValueError(f"entropy statistics need >= 2 patches, got {len(entropies)}")
    return EntropyStats.from_entropies(entropies, cfg)


def quantile_index(stats: EntropyStats, t: float) -> tuple[int, float]:
    """1-based index ceil(M * t), clamped to [1, M], and the entropy there."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"quantile fraction must be in (0, 1), got {t}")
    index = min(max(ceil(stats.count * t), 1), stats.count)
    return index, stats.values[index - 1]


def entropy_histogram(stats: EntropyStats, nbins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Bin counts of the corpus entropy distribution (for re-plotting its shape)."""
    counts, edges = np.histogram(np.asarray(stats.values), bins=nbins)
    return edges, counts


def save_stats(path, stats: EntropyStats) -> None:
    Path(path).write_text(json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n")


def load_stats(path) -> EntropyStats:
    return EntropyStats.from_dict(json.loads(Path(path).read_text()))
