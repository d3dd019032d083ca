"""Portable tensor files and checkpoint manifests.

File layout: magic ``CRDT``, one version byte, u32 rank, then ``rank`` u32
dims (little-endian), then float32 payload, little-endian, row-major.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CRDT"
VERSION = 1

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ("name", "file", "shape", "role")


def save_tensor(path, array) -> None:
    """Write a tensor file; data is stored as float32 regardless of input dtype."""
    arr = np.ascontiguousarray(np.asarray(array), dtype="<f4")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("B", VERSION))
        fh.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<I", d))
        fh.write(arr.tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version = raw[4]
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    (rank,) = struct.unpack_from("<I", raw, 5)
    dims = struct.unpack_from(f"<{rank}I", raw, 9)
    offset = 9 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    if data.size != count:
        raise ValueError(f"{path}: truncated payload, expected {count} floats")
    return np.ascontiguousarray(data.reshape(dims))


def write_manifest(dirpath, entries) -> None:
    """entries: iterable of (name, file, shape tuple, role)."""
    dirpath = Path(dirpath)
    with open(dirpath / MANIFEST_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for name, fname, shape, role in entries:
            writer.writerow([name, fname, "x".join(str(d) for d in shape), role])


def read_manifest(dirpath):
    """Returns a list of dicts with keys name/file/shape/role."""
    dirpath = Path(dirpath)
    out = []
    with open(dirpath / MANIFEST_NAME, newline="") as fh:
        for row in csv.DictReader(fh):
            row = dict(row)
            row["shape"] = tuple(int(d) for d in row["shape"].split("x")) if row["shape"] else ()
            out.append(row)
    return out


def save_named_tensors(dirpath, named_arrays, role: str, manifest_entries=None):
    """Dump (name, array) pairs as tensor files; returns manifest entries."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = list(manifest_entries) if manifest_entries else []
    for name, arr in named_arrays:
        fname = f"{role}__{name}.crdt"
        save_tensor(dirpath / fname, arr)
        entries.append((name, fname, np.asarray(arr).shape, role))
    return entries


def load_named_tensors(dirpath, role: str):
    """Load all manifest entries of one role, in manifest order."""
    dirpath = Path(dirpath)
    out = []
    for row in read_manifest(dirpath):
        if row["role"] == role:
            out.append((row["name"], load_tensor(dirpath / row["file"])))
    return out
