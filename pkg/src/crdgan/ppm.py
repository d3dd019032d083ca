"""Binary PPM (P6) output for sample grids; dependency-free and bit-exact."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Map a [3,h,w] image from [-1, 1] to uint8 [h, w, 3]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a [3,h,w] image, got shape {arr.shape}")
    scaled = np.clip((arr + 1.0) * 0.5, 0.0, 1.0) * 255.0
    return np.rint(scaled).astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path, rgb: np.ndarray) -> None:
    """rgb: uint8 array [h, w, 3]."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected [h,w,3] uint8 data, got shape {rgb.shape}")
    h, w = rgb.shape[:2]
    with open(Path(path), "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes(order="C"))


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM file")
    parts = raw.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return data.reshape(h, w, 3)


def image_grid(rows) -> np.ndarray:
    """Tile rows of [3,h,w] images into one [H,W,3] uint8 grid."""
    tiles = [np.concatenate([to_uint8(img) for img in row], axis=1) for row in rows]
    return np.concatenate(tiles, axis=0)
