"""Marginal resampling and the dependency-diffusion path over column blocks.

The path starts at the data set X and cumulatively replaces column blocks
with columns from the marginal sample Z, ending at Z itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ImageSet, TAG_MARGINAL, intermediate_tag
from .errors import ArgumentError


@dataclass
class DiffusionSchedule:
    """Ordered disjoint column blocks whose union covers every column."""

    blocks: list[list[int]]

    def __post_init__(self):
        self.blocks = [sorted(int(c) for c in block) for block in self.blocks]
        flat = [c for block in self.blocks for c in block]
        if len(flat) != len(set(flat)):
            raise ArgumentError("schedule blocks must be disjoint")
        if not self.blocks or any(len(b) == 0 for b in self.blocks):
            raise ArgumentError("schedule blocks must be non-empty")

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def cols(self) -> int:
        return sum(len(b) for b in self.blocks)

    def validate_for(self, cols: int) -> None:
        covered = sorted(c for block in self.blocks for c in block)
        if covered != list(range(cols)):
            raise ArgumentError(f"schedule does not cover columns [0, {cols}) exactly")


def default_schedule(cols: int, k: int) -> DiffusionSchedule:
    """Contiguous blocks of width ceil(cols/k), left to right."""
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if k > cols:
        raise ArgumentError(f"k={k} exceeds cols={cols}")
    width = -(-cols // k)
    blocks = [list(range(start, min(start + width, cols))) for start in range(0, cols, width)]
    return DiffusionSchedule(blocks)


def sample_marginals(X: ImageSet, seed: int) -> ImageSet:
    """Resample every pixel position independently from X's empirical marginal.

    Each position (r, c) of each output image is a uniform draw with
    replacement from the n values X holds at that position.
    """
    if X.count < 2:
        raise ArgumentError("marginal resampling needs at least 2 samples")
    rng = np.random.default_rng(seed)
    n = X.count
    idx = rng.integers(0, n, size=(n, X.rows, X.cols))
    pixels = np.take_along_axis(X.pixels, idx, axis=0)
    return ImageSet(pixels, tag=TAG_MARGINAL)


def build_path(X: ImageSet, Z: ImageSet, schedule: DiffusionSchedule) -> list[ImageSet]:
    """[Z^0=X, Z^1, ..., Z^k=Z]: Z^j replaces blocks 0..j-1 of X with Z's columns."""
    if (X.count, X.rows, X.cols) != (Z.count, Z.rows, Z.cols):
        raise ArgumentError(f"shape mismatch: X {X.pixels.shape} vs Z {Z.pixels.shape}")
    schedule.validate_for(X.cols)
    path = [X]
    current = X.pixels
    for j, block in enumerate(schedule.blocks):
        current = current.copy()
        current[:, :, block] = Z.pixels[:, :, block]
        tag = Z.tag if j == schedule.k - 1 else intermediate_tag(j + 1)
        path.append(ImageSet(current, tag=tag))
    return path
