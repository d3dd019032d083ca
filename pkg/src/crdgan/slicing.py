"""Splitting a generated image into column strips, row strips and patches.

Each granularity covers every pixel exactly once, so summing all items and
differentiating gives an all-ones gradient on the source image.  Item order
is deterministic: columns left-to-right, rows top-to-bottom, patches in
raster order.  Vectors are flattened channel-major, then spatial raster.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .autodiff import Tensor, permute, reshape

COLUMN = "column"
ROW = "row"
PATCH = "patch"
GRANULARITIES = (COLUMN, ROW, PATCH)


@dataclass
class ContentSet:
    """An ordered stack of flattened content vectors from one image.

    ``items`` is a rank-2 tensor, one row per content vector; gradients flow
    through it back to the source image.
    """

    granularity: str
    items: Tensor
    source_shape: Tuple[int, int, int]
    patch_dims: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return self.items.shape[0]

    @property
    def item_length(self) -> int:
        return self.items.shape[1]

    def item(self, i: int) -> np.ndarray:
        return self.items.data[i]


def _check_rank3(img: Tensor) -> Tuple[int, int, int]:
    if img.ndim != 3:
        raise ValueError(f"expected a [c,h,w] image, got shape {img.shape}")
    return img.shape


def split_columns(img: Tensor) -> ContentSet:
    """w items, each the flattened [c,h] column slab."""
    c, h, w = _check_rank3(img)
    if w < 2:
        raise ValueError(f"split_columns needs width >= 2, got {w} (no pairs possible)")
    items = reshape(permute(img, (2, 0, 1)), (w, c * h))
    return ContentSet(COLUMN, items, (c, h, w))


def split_rows(img: Tensor) -> ContentSet:
    """h items, each the flattened [c,w] row slab."""
    c, h, w = _check_rank3(img)
    if h < 2:
        raise ValueError(f"split_rows needs height >= 2, got {h} (no pairs possible)")
    items = reshape(permute(img, (1, 0, 2)), (h, c * w))
    return ContentSet(ROW, items, (c, h, w))


def split_patches(img: Tensor, n: int, m: int) -> ContentSet:
    """(h*w)/(n*m) non-overlapping [c,n,m] patches in raster order."""
    c, h, w = _check_rank3(img)
    if n <= 0 or m <= 0:
        raise ValueError(f"patch dims must be positive, got {n}x{m}")
    if h % n != 0:
        raise ValueError(f"split_patches: height {h} not divisible by patch height {n}")
    if w % m != 0:
        raise ValueError(f"split_patches: width {w} not divisible by patch width {m}")
    count = (h * w) // (n * m)
    if count < 2:
        raise ValueError(f"split_patches needs >= 2 patches, got {count}")
    grid = reshape(img, (c, h // n, n, w // m, m))
    items = reshape(permute(grid, (1, 3, 0, 2, 4)), (count, c * n * m))
    return ContentSet(PATCH, items, (c, h, w), (n, m))


def split(img: Tensor, granularity: str, patch_dims: Optional[Tuple[int, int]] = None) -> ContentSet:
    if granularity == COLUMN:
        return split_columns(img)
    if granularity == ROW:
        return split_rows(img)
    if granularity == PATCH:
        if patch_dims is None:
            raise ValueError("patch granularity needs patch dims (n, m)")
        return split_patches(img, *patch_dims)
    raise ValueError(f"unknown granularity {granularity!r}")


def reassemble(cset: ContentSet) -> np.ndarray:
    """Exact inverse of the corresponding split (values only, no gradient)."""
    c, h, w = cset.source_shape
    items = cset.items.data
    if items.ndim != 2:
        raise ValueError("inconsistent item lengths: items must form a rank-2 stack")
    if cset.granularity == COLUMN:
        if items.shape != (w, c * h):
            raise ValueError(f"column items of shape {items.shape} do not match source {cset.source_shape}")
        return np.ascontiguousarray(items.reshape(w, c, h).transpose(1, 2, 0))
    if cset.granularity == ROW:
        if items.shape != (h, c * w):
            raise ValueError(f"row items of shape {items.shape} do not match source {cset.source_shape}")
        return np.ascontiguousarray(items.reshape(h, c, w).transpose(1, 0, 2))
    if cset.granularity == PATCH:
        n, m = cset.patch_dims
        count = (h * w) // (n * m)
        if items.shape != (count, c * n * m):
            raise ValueError(f"patch items of shape {items.shape} do not match source {cset.source_shape}")
        grid = items.reshape(h // n, w // m, c, n, m)
        return np.ascontiguousarray(grid.transpose(2, 0, 3, 1, 4).reshape(c, h, w))
    raise ValueError(f"unknown granularity {cset.granularity!r}")
