"""Relational distillation losses over content sets.

Two structure functions drive everything here:

  * pairwise distance, normalized by the mean pairwise distance of its own
    set, which makes the structure scale-invariant;
  * triplet angle, the cosine between the two residue vectors meeting at the
    middle element, which is invariant to rotation, translation and positive
    scaling.

Teacher and student structures are compared tuple-by-tuple with a Huber
penalty, averaged over the selected tuples.  Content-level losses slice
both images into columns, rows and patches and sum the per-granularity
relational losses; tuples never cross granularities and relations never
cross image boundaries.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, replace
from math import comb
from typing import Optional, Union

import numpy as np

from .autodiff import (
    Tensor, clamp_min, huber, index_select, l2_norm, matmul, mul_rows,
    permute, reciprocal, sqrt_guarded, tmean, tsum,
)
from . import slicing
from .slicing import COLUMN, PATCH, ROW, ContentSet

ItemsLike = Union[ContentSet, Tensor, np.ndarray]


@dataclass(frozen=True)
class RelationConfig:
    """Weights, sampling budgets and toggles for the relational losses.

    A budget of None means full enumeration.  ``seed`` drives tuple sampling
    only; pass a different seed per training step for fresh tuples.
    """

    lambda_a: float = 2.0
    pair_budget: Optional[int] = None
    triplet_budget: Optional[int] = 4096
    epsilon: float = 1e-12
    use_columns: bool = True
    use_rows: bool = True
    use_patches: bool = True
    angle_patches_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lambda_a < 0:
            raise ValueError(f"lambda_a must be >= 0, got {self.lambda_a}")
        for name in ("pair_budget", "triplet_budget"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1 when set, got {v}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def enabled_granularities(self, angle: bool = False) -> tuple:
        if angle and self.angle_patches_only:
            return (PATCH,) if self.use_patches else ()
        out = []
        if self.use_columns:
            out.append(COLUMN)
        if self.use_rows:
            out.append(ROW)
        if self.use_patches:
            out.append(PATCH)
        return tuple(out)


@dataclass
class DistanceStructure:
    """All pairwise Euclidean distances of one item set plus their mean.

    ``distances`` is the materialized symmetric matrix (zero diagonal);
    ``mu`` is the differentiable mean over unordered pairs and
    ``pair_values`` holds the distance of each i<j pair in lexicographic
    order, also differentiable.
    """

    distances: np.ndarray
    mu: Tensor
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_values: Tensor
    epsilon: float = 1e-12

    @property
    def count(self) -> int:
        return self.distances.shape[0]


@functools.lru_cache(maxsize=64)
def _triu_pairs(n: int):
    pi, pj = np.triu_indices(n, k=1)
    pi.setflags(write=False)
    pj.setflags(write=False)
    return pi, pj


def _as_items(x: ItemsLike) -> Tensor:
    if isinstance(x, ContentSet):
        return x.items
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(np.asarray(x, dtype=np.float64))
    if t.ndim != 2:
        raise ValueError(f"expected a rank-2 item stack, got shape {t.shape}")
    return t


def _pair_distances(items: Tensor, pair_i: np.ndarray, pair_j: np.ndarray,
                    eps: float) -> Tensor:
    """Distances for the given pairs via the Gram expansion.

    ||x_i - x_j||^2 = |x_i|^2 + |x_j|^2 - 2 <x_i, x_j>, clamped at zero
    before the guarded square root so identical items contribute exact
    zeros with zero gradient.
    """
    n = items.shape[0]
    sq = tsum(items * items, axes=1)                      # [n]
    gram = matmul(items, permute(items, (1, 0)))          # [n, n]
    gram_flat = gram.reshape(n * n)
    cross = index_select(gram_flat, pair_i * n + pair_j)
    d2 = index_select(sq, pair_i) + index_select(sq, pair_j) - 2.0 * cross
    return sqrt_guarded(clamp_min(d2, 0.0), eps)


def pairwise_distances(item_set: ItemsLike, epsilon: float = 1e-12) -> DistanceStructure:
    """Euclidean distance for every unordered pair plus their mean."""
    items = _as_items(item_set)
    n = items.shape[0]
    if n < 2:
        raise ValueError(f"pairwise_distances needs >= 2 items, got {n}")
    pi, pj = _triu_pairs(n)
    dvec = _pair_distances(items, pi, pj, epsilon)
    mu = tmean(dvec)
    mat = np.zeros((n, n), dtype=dvec.data.dtype)
    mat[pi, pj] = dvec.data
    mat[pj, pi] = dvec.data
    return DistanceStructure(mat, mu, pi, pj, dvec, epsilon)


def phi_d(structure: DistanceStructure, i: int, j: int) -> float:
    """Mean-normalized distance of pair (i, j); zero when the set is flat."""
    if i == j:
        raise ValueError(f"phi_d is undefined for i == j (got {i})")
    denom = max(structure.mu.item(), structure.epsilon)
    return float(structure.distances[i, j]) / denom


def phi_a(vi, vj, vk, epsilon: float = 1e-12) -> Tensor:
    """Cosine of the angle at vj between residues vi-vj and vj-vk."""
    vi, vj, vk = (t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=np.float64))
                  for t in (vi, vj, vk))
    if not (vi.shape == vj.shape == vk.shape) or vi.ndim != 1:
        raise ValueError(f"phi_a needs three equal-length vectors, got "
                         f"{vi.shape}, {vj.shape}, {vk.shape}")
    e1 = vi - vj
    e2 = vj - vk
    e1 = e1 * reciprocal(clamp_min(l2_norm(e1, eps=epsilon), epsilon))
    e2 = e2 * reciprocal(clamp_min(l2_norm(e2, eps=epsilon), epsilon))
    return tsum(e1 * e2)


# -- tuple sampling -----------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _tuple_pool(count: int, arity: int) -> np.ndarray:
    pool = np.array(list(itertools.combinations(range(count), arity)), dtype=np.intp)
    pool.setflags(write=False)
    return pool


def sample_tuples(count: int, arity: int, budget: Optional[int], seed: int) -> np.ndarray:
    """Index tuples i<j(<k) as an [T, arity] int array.

    Full lexicographic enumeration when the budget covers every tuple,
    otherwise ``budget`` distinct tuples drawn uniformly without replacement,
    reproducible from the seed and returned in sorted order.
    """
    if arity not in (2, 3):
        raise ValueError(f"arity must be 2 or 3, got {arity}")
    if count < arity:
        raise ValueError(f"need at least {arity} items, got {count}")
    total = comb(count, arity)
    if budget is None or budget >= total:
        return _tuple_pool(count, arity)
    rng = np.random.default_rng(seed)
    if total <= 1 << 16 or 2 * budget >= total:
        picks = rng.permutation(total)[:budget]
        picks.sort()
        return _tuple_pool(count, arity)[picks]
    # rejection sampling: draw sorted-distinct rows, dedupe, top up
    chosen = np.empty((0, arity), dtype=np.intp)
    while chosen.shape[0] < budget:
        need = budget - chosen.shape[0]
        draw = rng.integers(0, count, size=(2 * need + 16, arity))
        draw.sort(axis=1)
        ok = np.all(draw[:, 1:] > draw[:, :-1], axis=1)
        chosen = np.unique(np.concatenate([chosen, draw[ok]], axis=0), axis=0)
    # unique() sorts rows lexicographically; trim deterministically
    return np.ascontiguousarray(chosen[:budget], dtype=np.intp)


# -- instance-level relational losses -----------------------------------------

def _check_sides(t: Tensor, s: Tensor, minimum: int) -> int:
    if t.shape[0] != s.shape[0]:
        raise ValueError(f"teacher has {t.shape[0]} items but student has {s.shape[0]}")
    n = t.shape[0]
    if n < minimum:
        raise ValueError(f"need >= {minimum} items, got {n}")
    return n


def _normalized_pair_values(items: Tensor, pairs: np.ndarray, eps: float) -> Tensor:
    """phi_d over the selected pairs: distances over the set-wide mean."""
    n = items.shape[0]
    all_i, all_j = _triu_pairs(n)
    d_all = _pair_distances(items, all_i, all_j, eps)
    mu = clamp_min(tmean(d_all), eps)
    # selected pairs index into the lexicographic pair vector
    i, j = pairs[:, 0], pairs[:, 1]
    ranks = i * n - (i * (i + 1)) // 2 + (j - i - 1)
    return index_select(d_all, ranks) * reciprocal(mu)


def rkd_distance_loss(teacher_items: ItemsLike, student_items: ItemsLike,
                      cfg: RelationConfig) -> Tensor:
    """Huber-penalized mismatch of mean-normalized pairwise distances.

    Each side is normalized by its own mean, so a uniformly scaled student
    matches its teacher exactly.  The penalty is averaged over the selected
    pairs, keeping the loss scale independent of the tuple count (and hence
    of image size and sampling budget).
    """
    t = _as_items(teacher_items)
    s = _as_items(student_items)
    n = _check_sides(t, s, 2)
    pairs = sample_tuples(n, 2, cfg.pair_budget, cfg.seed)
    phi_t = _normalized_pair_values(t, pairs, cfg.epsilon)
    phi_s = _normalized_pair_values(s, pairs, cfg.epsilon)
    return tmean(huber(phi_t, phi_s))


def _angle_values(items: Tensor, triples: np.ndarray, eps: float) -> Tensor:
    vi = index_select(items, triples[:, 0])
    vj = index_select(items, triples[:, 1])
    vk = index_select(items, triples[:, 2])
    e1 = vi - vj
    e2 = vj - vk
    inv1 = reciprocal(clamp_min(l2_norm(e1, axis=1, eps=eps), eps))
    inv2 = reciprocal(clamp_min(l2_norm(e2, axis=1, eps=eps), eps))
    return tsum(mul_rows(e1, inv1) * mul_rows(e2, inv2), axes=1)


def rkd_angle_loss(teacher_items: ItemsLike, student_items: ItemsLike,
                   cfg: RelationConfig) -> Tensor:
    """Huber-penalized mismatch of triplet-angle cosines, averaged over the
    selected triples.

    Unordered index sets {i,j,k} are enumerated once as i<j<k with j as the
    vertex, keeping teacher and student orientations aligned.
    """
    t = _as_items(teacher_items)
    s = _as_items(student_items)
    n = _check_sides(t, s, 3)
    triples = sample_tuples(n, 3, cfg.triplet_budget, cfg.seed)
    phi_t = _angle_values(t, triples, cfg.epsilon)
    phi_s = _angle_values(s, triples, cfg.epsilon)
    return tmean(huber(phi_t, phi_s))


# -- content-level losses -------------------------------------------------------

GRANULARITY_IDS = {COLUMN: 0, ROW: 1, PATCH: 2}


def _granularity_seed(base: int, granularity: str, arity: int) -> int:
    gid = GRANULARITY_IDS[granularity]
    return int(np.random.SeedSequence([base & 0xFFFFFFFFFFFFFFFF, gid, arity]).generate_state(1)[0])


def _per_image(img: Tensor):
    if img.ndim == 3:
        return [img]
    if img.ndim == 4:
        return [index_select(img.reshape((img.shape[0], -1)), np.array([b])).reshape(img.shape[1:])
                for b in range(img.shape[0])]
    raise ValueError(f"expected [c,h,w] or [b,c,h,w], got shape {img.shape}")


def _check_images(teacher_img: Tensor, student_img: Tensor, n: int, m: int,
                  cfg: RelationConfig, angle: bool) -> tuple:
    if teacher_img.shape != student_img.shape:
        raise ValueError(f"teacher/student shapes differ: {teacher_img.shape} vs {student_img.shape}")
    grans = cfg.enabled_granularities(angle)
    if not grans:
        raise ValueError("no content granularity enabled: nothing to relate")
    return grans


def _content_relation_loss(teacher_img: Tensor, student_img: Tensor, n: int, m: int,
                           cfg: RelationConfig, angle: bool) -> Tensor:
    grans = _check_images(teacher_img, student_img, n, m, cfg, angle)
    t_images = _per_image(teacher_img)
    s_images = _per_image(student_img)
    arity = 3 if angle else 2
    loss_fn = rkd_angle_loss if angle else rkd_distance_loss
    total = None
    for t_img, s_img in zip(t_images, s_images):
        for g in grans:
            pd = (n, m) if g == PATCH else None
            t_set = slicing.split(t_img, g, pd)
            s_set = slicing.split(s_img, g, pd)
            g_cfg = replace(cfg, seed=_granularity_seed(cfg.seed, g, arity))
            term = loss_fn(t_set, s_set, g_cfg)
            total = term if total is None else total + term
    if len(t_images) > 1:
        total = total * (1.0 / len(t_images))
    return total


def crd_distance_loss(teacher_img: Tensor, student_img: Tensor, n: int, m: int,
                      cfg: RelationConfig) -> Tensor:
    """Distance-structure loss summed over the enabled granularities.

    Pairs stay within one granularity; batched inputs are sliced per image
    and averaged.
    """
    return _content_relation_loss(teacher_img, student_img, n, m, cfg, angle=False)


def crd_angle_loss(teacher_img: Tensor, student_img: Tensor, n: int, m: int,
                   cfg: RelationConfig) -> Tensor:
    """Angle-structure loss summed over the enabled granularities.

    With ``angle_patches_only`` both sides restrict to the patch granularity.
    """
    return _content_relation_loss(teacher_img, student_img, n, m, cfg, angle=True)


def crd_loss(teacher_img: Tensor, student_img: Tensor, n: int, m: int,
             cfg: RelationConfig) -> Tensor:
    """Distance loss plus lambda_a times the angle loss."""
    total = crd_distance_loss(teacher_img, student_img, n, m, cfg)
    if cfg.lambda_a != 0.0:
        total = total + cfg.lambda_a * crd_angle_loss(teacher_img, student_img, n, m, cfg)
    return total
