"""Training configuration and its flat ``key = value`` file format.

Every key matches a TrainConfig field (relation sub-fields are exposed
flat, e.g. ``lambda_a`` or ``use_rows``).  Unknown keys and malformed
values are errors that name the offending line.  Budgets accept 0 as
"no budget" (full enumeration).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

from .relations import RelationConfig

DISCRIMINATOR_MODES = (
    "online_updating_freezing",
    "online_always_updating",
    "online_no_discriminator",
    "pretrained_frozen",
    "pretrained_updating",
)
LR_SCHEDULES = ("half_constant", "linear")
GAN_MODES = ("vanilla", "least_squares")


@dataclass
class TrainConfig:
    epochs: int = 100
    lr0: float = 2e-4
    batch_size: int = 1
    lambda_crd: float = 25.0          # 25 unpaired preset; 2.5 for paired tasks
    lambda_per: float = 1.0
    relation: RelationConfig = field(default_factory=RelationConfig)
    patch: Tuple[int, int] = (8, 8)
    teacher_eval_interval: int = 10
    gan_mode: str = "least_squares"
    seed: int = 0
    discriminator_mode: str = "online_updating_freezing"

    # desk-scale model and data knobs
    image_size: int = 32
    base_width: int = 32
    width_factor: float = 0.25
    num_res_blocks: int = 3
    disc_layers: int = 3
    disc_base_width: int = 32
    train_count: int = 100
    val_count: int = 8
    recon_weight: float = 10.0        # paired teacher L1 term
    lr_schedule: str = "half_constant"
    distill_from_live: bool = False
    extractor_seed: int = 1234
    sample_every: int = 0             # epochs between sample grids; 0 = last only

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.teacher_eval_interval < 1:
            raise ValueError(f"teacher_eval_interval must be >= 1, got {self.teacher_eval_interval}")
        for name in ("lr0", "lambda_crd", "lambda_per", "recon_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.gan_mode not in GAN_MODES:
            raise ValueError(f"gan_mode must be one of {GAN_MODES}, got {self.gan_mode!r}")
        if self.discriminator_mode not in DISCRIMINATOR_MODES:
            raise ValueError(
                f"discriminator_mode must be one of {DISCRIMINATOR_MODES}, got {self.discriminator_mode!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if len(self.patch) != 2 or any(p < 1 for p in self.patch):
            raise ValueError(f"patch must be two positive ints, got {self.patch}")
        for name in ("image_size", "base_width", "num_res_blocks", "disc_layers",
                     "disc_base_width", "train_count", "val_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        return self


_RELATION_KEYS = {
    "lambda_a": float,
    "pair_budget": "budget",
    "triplet_budget": "budget",
    "epsilon": float,
    "use_columns": bool,
    "use_rows": bool,
    "use_patches": bool,
    "angle_patches_only": bool,
    "relation_seed": int,
}

_CONFIG_KEYS = {
    "epochs": int,
    "lr0": float,
    "batch_size": int,
    "lambda_crd": float,
    "lambda_per": float,
    "patch": "patch",
    "teacher_eval_interval": int,
    "gan_mode": str,
    "seed": int,
    "discriminator_mode": str,
    "image_size": int,
    "base_width": int,
    "width_factor": float,
    "num_res_blocks": int,
    "disc_layers": int,
    "disc_base_width": int,
    "train_count": int,
    "val_count": int,
    "recon_weight": float,
    "lr_schedule": str,
    "distill_from_live": bool,
    "extractor_seed": int,
    "sample_every": int,
}


class ConfigError(ValueError):
    pass


def _parse_value(key: str, kind, raw: str, lineno: int):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "budget":
            v = int(raw)
            return None if v == 0 else v
        if kind == "patch":
            parts = raw.replace("x", ",").split(",")
            if len(parts) == 1:
                return (int(parts[0]), int(parts[0]))
            if len(parts) == 2:
                return (int(parts[0]), int(parts[1]))
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for key {key!r}") from None
    raise AssertionError(f"unhandled kind {kind}")


def parse_config(path) -> TrainConfig:
    """Read a flat config file; missing keys keep their documented defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    relation_values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if key in _CONFIG_KEYS:
            values[key] = _parse_value(key, _CONFIG_KEYS[key], raw, lineno)
        elif key in _RELATION_KEYS:
            dest = "seed" if key == "relation_seed" else key
            relation_values[dest] = _parse_value(key, _RELATION_KEYS[key], raw, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        relation = RelationConfig(**relation_values)
        cfg = TrainConfig(relation=relation, **values)
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_config(cfg: TrainConfig, path) -> None:
    """Round-trippable dump of a TrainConfig in the flat file format."""
    lines = []
    for key in _CONFIG_KEYS:
        v = getattr(cfg, key)
        if key == "patch":
            v = f"{v[0]},{v[1]}"
        lines.append(f"{key} = {v}")
    rel = cfg.relation
    for key in _RELATION_KEYS:
        attr = "seed" if key == "relation_seed" else key
        v = getattr(rel, attr)
        if key in ("pair_budget", "triplet_budget"):
            v = 0 if v is None else v
        lines.append(f"{key} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def relation_for_step(cfg: TrainConfig, step: int) -> RelationConfig:
    """Per-step relation config: fresh tuple samples, same everything else."""
    import numpy as np

    seed = int(np.random.SeedSequence(
        [cfg.relation.seed & 0xFFFFFFFFFFFFFFFF, cfg.seed & 0xFFFFFFFFFFFFFFFF, step]
    ).generate_state(1)[0])
    return dataclasses.replace(cfg.relation, seed=seed)
