"""Distance and angle structures, and what they are invariant to.

The distance structure is normalized by its own mean, so uniform scaling is
invisible; the angle structure is a cosine of residues, so whole-set
rotation, translation and positive scaling are invisible.  The losses
penalize teacher/student structure mismatch with a Huber penalty.

Run: python3 demos/03_relation_losses.py
"""

import numpy as np

from crdgan.autodiff import Tensor
from crdgan.relations import (
    RelationConfig, crd_angle_loss, crd_distance_loss, crd_loss,
    pairwise_distances, phi_d, rkd_angle_loss, rkd_distance_loss,
    sample_tuples,
)

cfg = RelationConfig(seed=0)
rng = np.random.default_rng(2)

items = rng.normal(size=(6, 8))
structure = pairwise_distances(items)
print(f"mean pairwise distance mu = {structure.mu.item():.4f}")
print(f"phi_d(0,1) = {phi_d(structure, 0, 1):.4f} (distance over mu)")

print("\ninvariances:")
print(f"  distance loss vs 10x scaled copy: {rkd_distance_loss(items, 10 * items, cfg).item():.2e}")
q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
moved = 2.5 * (items @ q.T) + rng.normal(size=(1, 8))
print(f"  angle loss vs rotated+shifted+scaled copy: {rkd_angle_loss(items, moved, cfg).item():.2e}")

# Content-level: slice two images and compare structures per granularity.
teacher = Tensor(rng.uniform(-1, 1, (3, 32, 32)))
student = Tensor(rng.uniform(-1, 1, (3, 32, 32)))
d = crd_distance_loss(teacher, student, 8, 8, cfg).item()
a = crd_angle_loss(teacher, student, 8, 8, cfg).item()
total = crd_loss(teacher, student, 8, 8, cfg).item()
print(f"\ncontent losses on random 3x32x32 pair:")
print(f"  distance {d:.3f} + lambda_a * angle {a:.3f} = {total:.3f}")
print(f"  (check: {d + cfg.lambda_a * a:.3f})")

# Tuple sampling: full enumeration when the budget allows, else a seeded
# uniform draw without replacement.
full = sample_tuples(32, 3, None, seed=0)
budgeted = sample_tuples(32, 3, 512, seed=0)
print(f"\ntriples at 32 items: {len(full)} total, {len(budgeted)} under budget 512")
print("budgeted draw is reproducible:",
      bool(np.array_equal(budgeted, sample_tuples(32, 3, 512, seed=0))))
