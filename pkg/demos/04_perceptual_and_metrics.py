"""The fixed-extractor perceptual loss and the desk Frechet metric.

Run: python3 demos/04_perceptual_and_metrics.py
"""

import numpy as np

from crdgan.autodiff import Tensor
from crdgan.metrics import fit_gaussian, frechet_distance, pooled_features
from crdgan.perceptual import FeatureExtractor, extract, gram, perceptual_loss

extractor = FeatureExtractor.fixed_random(seed=7)
rng = np.random.default_rng(3)

x = Tensor(rng.uniform(-1, 1, (3, 32, 32)))
acts = extract(x, extractor)
print("tap shapes:", [a.shape for a in acts])
print("gram of final tap:", gram(acts[-1]).shape)

y = Tensor(np.clip(x.data + 0.1 * rng.normal(size=x.shape), -1, 1))
print(f"perceptual_loss(x, x)        = {perceptual_loss(x, x, extractor).item():.3f}")
print(f"perceptual_loss(x, x+noise)  = {perceptual_loss(x, y, extractor).item():.3f}")

# Frechet distance between two pools of images, through pooled features.
pool_a = [rng.uniform(-1, 1, (3, 32, 32)).astype(np.float32) for _ in range(24)]
pool_b = [np.clip(img + 0.3, -1, 1) for img in pool_a]
stats_a = fit_gaussian(pooled_features(pool_a, extractor))
stats_b = fit_gaussian(pooled_features(pool_b, extractor))
print(f"\nfeature dim = {stats_a.dim}")
print(f"frechet(pool, itself)        = {frechet_distance(stats_a, stats_a):.2e}")
print(f"frechet(pool, shifted pool)  = {frechet_distance(stats_a, stats_b):.4f}")
