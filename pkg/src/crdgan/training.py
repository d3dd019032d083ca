"""Simultaneous teacher/student training with an updating-freezing teacher
discriminator.

Per step: one teacher phase (discriminator update, then teacher-generator
update), one student phase (student-generator update against the frozen
discriminator plus content-relationship and perceptual terms), then a
snapshot check.  Distillation targets come from the best teacher snapshot
seen so far; the live teacher is only the thing being snapshotted.

Discriminator modes:
  online_updating_freezing  D updates with the teacher, frozen for the student
  online_always_updating    D also updates during the student phase
  online_no_discriminator   student loss has no adversarial term
  pretrained_frozen         D from a pretraining run, never updated again
  pretrained_updating       D from a pretraining run, updates with the teacher
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tensor, absolute, backward, index_select, tmean
from .config import TrainConfig, relation_for_step, write_config
from .metrics import frechet_between, pixel_error
from .models import (
    Adam, DiscriminatorSpec, GeneratorSpec, PatchDiscriminator,
    ResnetGenerator, build_discriminator, build_generator,
    discriminator_loss, generator_adv_loss, save_checkpoint,
)
from .perceptual import FeatureExtractor, perceptual_loss
from .relations import crd_angle_loss, crd_distance_loss
from . import ppm

CSV_HEADER = ("epoch,step,lr,d_loss_T,g_loss_T,adv_loss_S,crd_d,crd_a,"
              "per_loss,total_S,val_metric,snapshot_replaced")


def lr_at(epoch, cfg: TrainConfig) -> float:
    """Learning rate at a (possibly fractional) epoch in [0, epochs].

    half_constant: flat at lr0 for the first half, then linear to exactly 0
    at the final epoch boundary.  linear: straight line from lr0 to 0.
    """
    e = float(epoch)
    if e < 0 or e > cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    total = float(cfg.epochs)
    if cfg.lr_schedule == "linear":
        return cfg.lr0 * (total - e) / total
    half = total / 2.0
    if e < half:
        return cfg.lr0
    return cfg.lr0 * (total - e) / (total - half)


@dataclass
class TeacherState:
    generator: ResnetGenerator
    discriminator: PatchDiscriminator
    best_generator: ResnetGenerator
    best_score: float = math.inf


def _check_finite(step: int, **losses) -> None:
    for name, v in losses.items():
        if not np.isfinite(v):
            raise FloatingPointError(f"non-finite {name}={v} at step {step}; aborting")


def paired_l2_metric(generate_fn: Callable, val_set) -> float:
    """Mean squared pixel error of generated outputs against targets."""
    inputs, targets = val_set
    total = 0.0
    for x, y in zip(inputs, targets):
        total += pixel_error(generate_fn(x), y, "L2")
    return total / len(inputs)


def make_frechet_metric(extractor: FeatureExtractor) -> Callable:
    """Desk Frechet distance between generated outputs and the target pool."""

    def metric(generate_fn: Callable, val_set) -> float:
        inputs, target_pool = val_set
        generated = [generate_fn(x) for x in inputs]
        return frechet_between(generated, list(target_pool), extractor)

    return metric


class Trainer:
    """Owns the models, optimizers and the step logic for one run."""

    def __init__(self, cfg: TrainConfig, dataset, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dataset = dataset
        self.dtype = dtype
        ss = np.random.SeedSequence(cfg.seed)
        t_seed, s_seed, d_seed, self._order_seed = (int(c.generate_state(1)[0])
                                                    for c in ss.spawn(4))
        gen_spec = GeneratorSpec(base_width=cfg.base_width, width_factor=1.0,
                                 num_res_blocks=cfg.num_res_blocks)
        stu_spec = replace(gen_spec, width_factor=cfg.width_factor)
        disc_spec = DiscriminatorSpec(num_layers=cfg.disc_layers,
                                      base_width=cfg.disc_base_width)
        teacher = build_generator(gen_spec, t_seed, dtype)
        best = build_generator(gen_spec, t_seed, dtype)
        for p in best.parameters():
            p.requires_grad = False
        self.state = TeacherState(teacher, build_discriminator(disc_spec, d_seed, dtype), best)
        self.student = build_generator(stu_spec, s_seed, dtype)
        self.extractor = FeatureExtractor.fixed_random(cfg.extractor_seed, dtype=dtype)
        self.opt_teacher = Adam(teacher.parameters(), cfg.lr0)
        self.opt_disc = Adam(self.state.discriminator.parameters(), cfg.lr0)
        self.opt_student = Adam(self.student.parameters(), cfg.lr0)
        self._pretraining = False

    # -- phases -----------------------------------------------------------

    def set_lr(self, lr: float) -> None:
        self.opt_teacher.lr = lr
        self.opt_disc.lr = lr
        self.opt_student.lr = lr

    def _disc_updates_with_teacher(self) -> bool:
        if self._pretraining:
            return True
        return self.cfg.discriminator_mode != "pretrained_frozen"

    def train_step_teacher(self, batch, step: int = 0) -> dict:
        """Alternating update: discriminator step, then teacher-generator step."""
        cfg = self.cfg
        x_np, y_np = batch
        x = Tensor(x_np)
        y = Tensor(y_np)
        teacher, disc = self.state.generator, self.state.discriminator

        fake = teacher(x)
        if self._disc_updates_with_teacher():
            d_loss = discriminator_loss(disc(y), disc(fake.detach()), cfg.gan_mode)
            self.opt_disc.zero_grad()
            backward(d_loss)
            self.opt_disc.step()
        else:
            d_loss = discriminator_loss(disc(y, frozen=True),
                                        disc(Tensor(fake.data), frozen=True), cfg.gan_mode)

        g_loss = generator_adv_loss(disc(fake, frozen=True), cfg.gan_mode)
        if self.dataset.paired and cfg.recon_weight > 0:
            g_loss = g_loss + cfg.recon_weight * tmean(absolute(fake - y))
        self.opt_teacher.zero_grad()
        backward(g_loss)
        self.opt_teacher.step()

        out = {"d_loss_T": d_loss.item(), "g_loss_T": g_loss.item()}
        _check_finite(step, **out)
        return out

    def _distill_target(self, x: Tensor) -> Tensor:
        if self.cfg.distill_from_live:
            return Tensor(self.state.generator(x, frozen=True).data)
        return Tensor(self.state.best_generator(x, frozen=True).data)

    def student_losses(self, batch, step: int = 0):
        """Student total loss tensor and its reported components (no update)."""
        cfg = self.cfg
        x = Tensor(batch[0])
        disc = self.state.discriminator

        t_out = self._distill_target(x)
        fake = self.student(x)

        if cfg.discriminator_mode == "online_no_discriminator":
            adv = None
        else:
            adv = generator_adv_loss(disc(fake, frozen=True), cfg.gan_mode)

        rel = relation_for_step(cfg, step)
        n, m = cfg.patch
        crd_d = crd_a = per = None
        if cfg.lambda_crd > 0:
            crd_d = crd_distance_loss(t_out, fake, n, m, rel)
            if rel.lambda_a > 0:
                crd_a = crd_angle_loss(t_out, fake, n, m, rel)
        if cfg.lambda_per > 0:
            per = self._batch_perceptual(t_out, fake)

        total = adv
        if crd_d is not None:
            crd_term = crd_d if crd_a is None else crd_d + rel.lambda_a * crd_a
            weighted = cfg.lambda_crd * crd_term
            total = weighted if total is None else total + weighted
        if per is not None:
            weighted = cfg.lambda_per * per
            total = weighted if total is None else total + weighted

        parts = {
            "adv_loss_S": adv.item() if adv is not None else 0.0,
            "crd_d": crd_d.item() if crd_d is not None else 0.0,
            "crd_a": crd_a.item() if crd_a is not None else 0.0,
            "per_loss": per.item() if per is not None else 0.0,
            "total_S": total.item() if total is not None else 0.0,
        }
        return total, parts

    def train_step_student(self, batch, step: int = 0) -> dict:
        """One student update; teacher parameters stay byte-identical except
        in online_always_updating mode, where the discriminator trains here too."""
        cfg = self.cfg
        disc = self.state.discriminator

        if cfg.discriminator_mode == "online_always_updating":
            x = Tensor(batch[0])
            fake = self.student(x)
            d_loss = discriminator_loss(disc(Tensor(batch[1])), disc(fake.detach()),
                                        cfg.gan_mode)
            self.opt_disc.zero_grad()
            backward(d_loss)
            self.opt_disc.step()

        total, parts = self.student_losses(batch, step)
        if total is not None:
            self.opt_student.zero_grad()
            backward(total)
            self.opt_student.step()
        _check_finite(step, **parts)
        return parts

    def _batch_perceptual(self, t_out: Tensor, fake: Tensor) -> Tensor:
        bsz = fake.shape[0]
        flat = fake.reshape((bsz, -1))
        total = None
        for b in range(bsz):
            t_img = Tensor(t_out.data[b])
            s_img = index_select(flat, np.array([b])).reshape(fake.shape[1:])
            term = perceptual_loss(t_img, s_img, self.extractor)
            total = term if total is None else total + term
        return total * (1.0 / bsz) if bsz > 1 else total

    def teacher_generate(self, x_np: np.ndarray) -> np.ndarray:
        """Live teacher output for one [c,h,w] image (evaluation only)."""
        return self.state.generator(Tensor(np.asarray(x_np, dtype=self.dtype)),
                                    frozen=True).data

    def best_generate(self, x_np: np.ndarray) -> np.ndarray:
        return self.state.best_generator(Tensor(np.asarray(x_np, dtype=self.dtype)),
                                         frozen=True).data

    def student_generate(self, x_np: np.ndarray) -> np.ndarray:
        return self.student(Tensor(np.asarray(x_np, dtype=self.dtype)),
                            frozen=True).data

    def maybe_update_snapshot(self, val_set, metric: Callable, step: int) -> bool:
        """Evaluate the live teacher every interval steps; keep it if better.

        Returns True when the snapshot was replaced.  best_score starts at
        +inf, so the first evaluation always replaces.
        """
        if step % self.cfg.teacher_eval_interval != 0:
            return False
        inputs = val_set[0]
        if len(inputs) == 0:
            raise ValueError("empty validation set")
        score = float(metric(self.teacher_generate, val_set))
        if score < self.state.best_score:
            self.state.best_score = score
            self.state.best_generator.load_param_arrays(
                self.state.generator.param_arrays(copy=True))
            return True
        return False


def _val_sets(dataset):
    if dataset.paired:
        return (dataset.val_inputs, dataset.val_targets)
    return (dataset.val_a, dataset.val_b)


def _batches(dataset, cfg: TrainConfig, order_seed: int):
    count = len(dataset)
    bs = cfg.batch_size
    rng_a = np.random.default_rng(np.random.SeedSequence([order_seed, 0]))
    rng_b = np.random.default_rng(np.random.SeedSequence([order_seed, 1]))
    for _ in range(cfg.epochs):
        order_a = rng_a.permutation(count)
        order_b = rng_b.permutation(count) if not dataset.paired else order_a
        for start in range(0, count - bs + 1, bs):
            ia = order_a[start:start + bs]
            ib = order_b[start:start + bs]
            if dataset.paired:
                yield dataset.train_inputs[ia], dataset.train_targets[ia]
            else:
                yield dataset.train_a[ia], dataset.train_b[ib]


def _write_samples(trainer: Trainer, dataset, path) -> None:
    val = _val_sets(dataset)
    take = min(4, len(val[0]))
    inputs = val[0][:take]
    rows = [list(inputs),
            [trainer.best_generate(x) for x in inputs],
            [trainer.student_generate(x) for x in inputs]]
    if dataset.paired:
        rows.append(list(val[1][:take]))
    ppm.write_ppm(path, ppm.image_grid(rows))


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def train(cfg: TrainConfig, dataset, out_dir) -> dict:
    """Full training loop; writes config copy, metrics CSV, checkpoints and
    sample grids into out_dir.  Deterministic given cfg.seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out_dir / "config.cfg")

    trainer = Trainer(cfg, dataset)
    if cfg.discriminator_mode.startswith("pretrained"):
        _pretrain_discriminator(trainer, dataset)

    metric = paired_l2_metric if dataset.paired else make_frechet_metric(trainer.extractor)
    val_set = _val_sets(dataset)
    steps_per_epoch = max(1, len(dataset) // cfg.batch_size)
    samples_dir = out_dir / "samples"
    samples_dir.mkdir(exist_ok=True)

    csv_path = out_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        step = 0
        for batch in _batches(dataset, cfg, trainer._order_seed):
            epoch = step // steps_per_epoch
            lr = lr_at(step / steps_per_epoch, cfg)
            trainer.set_lr(lr)
            t_losses = trainer.train_step_teacher(batch, step)
            s_losses = trainer.train_step_student(batch, step)
            evaluated = step % cfg.teacher_eval_interval == 0
            replaced = trainer.maybe_update_snapshot(val_set, metric, step)
            row = [str(epoch), str(step), _fmt(lr),
                   _fmt(t_losses["d_loss_T"]), _fmt(t_losses["g_loss_T"]),
                   _fmt(s_losses["adv_loss_S"]), _fmt(s_losses["crd_d"]),
                   _fmt(s_losses["crd_a"]), _fmt(s_losses["per_loss"]),
                   _fmt(s_losses["total_S"]),
                   _fmt(trainer.state.best_score) if evaluated else "",
                   ("1" if replaced else "0") if evaluated else ""]
            fh.write(",".join(row) + "\n")
            if cfg.sample_every and step % (cfg.sample_every * steps_per_epoch) == 0:
                _write_samples(trainer, dataset, samples_dir / f"step_{step:06d}.ppm")
            step += 1

    _write_samples(trainer, dataset, samples_dir / "final.ppm")
    ckpt_dir = out_dir / "checkpoints"
    save_checkpoint(ckpt_dir, {
        "teacher_generator": trainer.state.generator,
        "teacher_discriminator": trainer.state.discriminator,
        "student_generator": trainer.student,
        "best_snapshot": trainer.state.best_generator,
    })

    student_score = float(metric(trainer.student_generate, val_set))
    report = {
        "steps": step,
        "teacher_best_score": trainer.state.best_score,
        "student_val_metric": student_score,
        "out_dir": str(out_dir),
        "metrics_csv": str(csv_path),
    }
    return report


def _pretrain_discriminator(trainer: Trainer, dataset) -> None:
    """Train a throwaway (teacher, D) pair over the full schedule, keep D,
    then reset both generators and all optimizer state for the real run."""
    cfg = trainer.cfg
    steps_per_epoch = max(1, len(dataset) // cfg.batch_size)
    step = 0
    trainer._pretraining = True
    for batch in _batches(dataset, cfg, trainer._order_seed ^ 0x5EED):
        trainer.set_lr(lr_at(step / steps_per_epoch, cfg))
        trainer.train_step_teacher(batch, step)
        step += 1
    trainer._pretraining = False
    # restart: same initial generator weights as a fresh Trainer would use
    ss = np.random.SeedSequence(cfg.seed)
    t_seed, s_seed, _, _ = (int(c.generate_state(1)[0]) for c in ss.spawn(4))
    fresh_teacher = build_generator(trainer.state.generator.spec, t_seed, trainer.dtype)
    trainer.state.generator.load_param_arrays(fresh_teacher.param_arrays())
    trainer.state.best_generator.load_param_arrays(fresh_teacher.param_arrays())
    trainer.state.best_score = math.inf
    fresh_student = build_generator(trainer.student.spec, s_seed, trainer.dtype)
    trainer.student.load_param_arrays(fresh_student.param_arrays())
    trainer.opt_teacher = Adam(trainer.state.generator.parameters(), cfg.lr0)
    trainer.opt_disc = Adam(trainer.state.discriminator.parameters(), cfg.lr0)
    trainer.opt_student = Adam(trainer.student.parameters(), cfg.lr0)
