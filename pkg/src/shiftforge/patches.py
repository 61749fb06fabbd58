"""Fixed-size patch extraction from source images."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FocusRegion:
    """Axis-aligned rectangle (pixel units) inside a source image."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 0 or self.height < 0:
            raise ValueError("focus region must have non-negative extent")
        if self.x < 0 or self.y < 0:
            raise ValueError("focus region must start inside the image")


def extract_patches(
    image: np.ndarray,
    patch_size: int,
    focus_region: FocusRegion | None = None,
) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Tile the focus region with non-overlapping square patches.

    The grid is anchored at the region's top-left corner; partial cells at
    the right and bottom border are dropped. Returns (patch, origin) pairs
    where origin is the (x, y) pixel coordinate of the patch's top-left
    corner in the source image. A region smaller than ``patch_size`` yields
    zero patches and a warning, not an error.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    if patch_size < 1:
        raise ValueError("patch_size must be a positive integer")
    height, width = image.shape[:2]
    if focus_region is None:
        focus_region = FocusRegion(0, 0, width, height)
    if focus_region.x + focus_region.width > width or focus_region.y + focus_region.height > height:
        raise ValueError(
            f"focus region {focus_region} extends beyond the {height}x{width} image"
        )

    rows = focus_region.height // patch_size
    cols = focus_region.width // patch_size
    if rows == 0 or cols == 0:
        warnings.warn(
            f"focus region {focus_region.width}x{focus_region.height} is smaller than "
            f"patch size {patch_size}; no patches extracted",
            stacklevel=2,
        )
        return []

    patches: list[tuple[np.ndarray, tuple[int, int]]] = []
    for row in range(rows):
        for col in range(cols):
            x = focus_region.x + col * patch_size
            y = focus_region.y + row * patch_size
            patch = image[y : y + patch_size, x : x + patch_size, :]
            patches.append((patch, (x, y)))
    return patches
