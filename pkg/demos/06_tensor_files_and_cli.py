"""Portable tensor files and the command-line surface, driven from Python.

Run: python3 demos/06_tensor_files_and_cli.py
"""

import tempfile
from pathlib import Path

import numpy as np

from crdgan.cli import main
from crdgan.tensor_io import load_tensor, save_tensor

work = Path(tempfile.mkdtemp(prefix="crdgan_files_"))

# Tensor files: magic CRDT, version byte, u32 rank + dims, f32 row-major.
img = np.random.default_rng(0).uniform(-1, 1, (3, 16, 16)).astype(np.float32)
save_tensor(work / "img.crdt", img)
back = load_tensor(work / "img.crdt")
print("tensor file round trip exact:", bool(np.array_equal(back, img)))
print("header bytes:", (work / "img.crdt").read_bytes()[:9].hex(" "))

# The slice subcommand dumps one tensor file per content item plus a manifest.
main(["slice", "--input", str(work / "img.crdt"),
      "--out", str(work / "slices"), "--patch", "4,4"])
manifest = (work / "slices" / "manifest.txt").read_text().splitlines()
print(f"slice manifest: {len(manifest)} items; first:", manifest[0])

# gradcheck exits 0 when every loss gradient matches finite differences.
print("\ngradcheck:")
code = main(["gradcheck", "--size", "8", "--patch", "4", "--seed", "1"])
print("exit code:", code)

# bench reports tuple counts and loss-evaluation throughput for a budget.
print("\nbench (budget 256):")
main(["bench", "--size", "16", "--patch", "4", "--budget", "256", "--iters", "2"])
