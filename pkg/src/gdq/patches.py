"""Deterministic patch extraction and stitching for tiled SR inference.

Patches near the right/bottom borders are shifted so they stay inside the
image (never zero-padded): padding would contaminate the patch statistics
that drive bit allocation. Overlapping contributions are averaged at stitch
time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchGrid:
    """Geometry of a patch tiling: per-patch (row, col) origins over a source image."""

    patch_size: int
    overlap: int
    origins: tuple[tuple[int, int], ...]
    source_hw: tuple[int, int]
    degenerate: bool = False

    @property
    def patch_hw(self) -> tuple[int, int]:
        """Spatial dims of every patch (the whole image for degenerate grids)."""
        if self.degenerate:
            return self.source_hw
        return (self.patch_size, self.patch_size)

    def __len__(self) -> int:
        return len(self.origins)


def _axis_origins(length: int, patch: int, step: int) -> list[int]:
    starts = list(range(0, length - patch + 1, step))
    if starts[-1] != length - patch:
        starts.append(length - patch)  # shift-to-fit at the border
    return starts


def extract_patches(
    img: np.ndarray, patch_size: int, overlap: int = 0
) -> tuple[PatchGrid, list[np.ndarray]]:
    """Split a (1, C, H, W) image into patch_size x patch_size tiles.

    Returns the grid geometry and the patch tensors in row-major origin order.
    An image smaller than patch_size in either dimension yields a single
    whole-image patch with the grid flagged degenerate.
    """
    img = np.asarray(img)
    if img.ndim != 4 or img.shape[0] != 1:
        raise ValueError(f"expected a (1, C, H, W) image, got shape {img.shape}")
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if not 0 <= overlap < patch_size:
        raise ValueError(f"overlap must be in [0, patch_size), got {overlap}")
    h, w = img.shape[2], img.shape[3]
    if h < patch_size or w < patch_size:
        grid = PatchGrid(patch_size, overlap, ((0, 0),), (h, w), degenerate=True)
        return grid, [img]
    step = patch_size - overlap
    origins = tuple(
        (r, c) for r in _axis_origins(h, patch_size, step)
        for c in _axis_origins(w, patch_size, step)
    )
    patches = [img[:, :, r:r + patch_size, c:c + patch_size] for r, c in origins]
    grid = PatchGrid(patch_size, overlap, origins, (h, w))
    return grid, patches


def stitch_patches(grid: PatchGrid, patches: list[np.ndarray], scale: int) -> np.ndarray:
    """Reassemble patches (each upscaled by ``scale``) into the full image.

    Overlapping pixels are averaged. Every output pixel must be covered by at
    least one patch; the counter plane asserts this.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if len(patches) != len(grid.origins):
        raise ValueError(
            f"patch count {len(patches)} does not match grid origin count {len(grid.origins)}"
        )
    ph, pw = grid.patch_hw
    want = (ph * scale, pw * scale)
    channels = np.asarray(patches[0]).shape[1]
    h, w = grid.source_hw
    acc = np.zeros((1, channels, h * scale, w * scale), dtype=np.float64)
    count = np.zeros((h * scale, w * scale), dtype=np.float64)
    for (r, c), patch in zip(grid.origins, patches):
        patch = np.asarray(patch)
        if patch.shape != (1, channels, want[0], want[1]):
            raise ValueError(
                f"patch at origin ({r}, {c}) has shape {patch.shape}, "
                f"expected (1, {channels}, {want[0]}, {want[1]})"
            )
        rs, cs = r * scale, c * scale
        acc[:, :, rs:rs + want[0], cs:cs + want[1]] += patch.astype(np.float64)
        count[rs:rs + want[0], cs:cs + want[1]] += 1.0
    if np.any(count == 0):
        raise AssertionError("stitch coverage hole: some output pixels got no contribution")
    out = acc / count
    return out.astype(np.result_type(patches[0], np.float32))
