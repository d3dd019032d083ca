"""Command-line entry point: train, eval, slice, gradcheck, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from math import comb
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward, finite_diff_grad, max_rel_error
from .config import ConfigError, parse_config
from .datasets import TASK_KINDS, SyntheticTask, generate_dataset
from .metrics import frechet_between, pixel_error
from .models import DiscriminatorSpec, GeneratorSpec, build_discriminator, \
    build_generator, load_checkpoint
from .perceptual import FeatureExtractor
from .relations import RelationConfig, crd_loss, sample_tuples
from . import slicing, tensor_io, training


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crdgan",
                                     description="content-relationship GAN distillation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run teacher/student distillation")
    p_train.add_argument("--config", required=True, help="flat key=value config file")
    p_train.add_argument("--task", required=True, choices=TASK_KINDS)
    p_train.add_argument("--out", required=True, help="fresh run directory")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")

    p_eval = sub.add_parser("eval", help="evaluate a finished run's checkpoints")
    p_eval.add_argument("--run", required=True, help="run directory from train")
    p_eval.add_argument("--task", required=True, choices=TASK_KINDS)

    p_slice = sub.add_parser("slice", help="dump content sets of a tensor-file image")
    p_slice.add_argument("--input", required=True, help="image as a .crdt tensor file")
    p_slice.add_argument("--out", required=True)
    p_slice.add_argument("--granularity", default="all",
                         choices=("all",) + slicing.GRANULARITIES)
    p_slice.add_argument("--patch", default="8,8", help="patch dims n,m")

    p_grad = sub.add_parser("gradcheck", help="check loss gradients against finite differences")
    p_grad.add_argument("--size", type=int, default=8)
    p_grad.add_argument("--patch", type=int, default=4)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--budget", type=int, default=0, help="triplet budget, 0 = full")
    p_grad.add_argument("--tol", type=float, default=1e-4)

    p_bench = sub.add_parser("bench", help="tuple sampling and loss evaluation throughput")
    p_bench.add_argument("--size", type=int, default=32)
    p_bench.add_argument("--budget", type=int, default=0, help="triplet budget, 0 = full")
    p_bench.add_argument("--patch", type=int, default=8)
    p_bench.add_argument("--iters", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=0)
    return parser


def _parse_patch(text: str):
    parts = text.replace("x", ",").split(",")
    vals = [int(p) for p in parts if p]
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) == 2:
        return vals[0], vals[1]
    raise ValueError(f"bad patch spec {text!r}")


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    task = SyntheticTask(args.task, cfg.image_size, cfg.train_count, cfg.val_count, cfg.seed)
    dataset = generate_dataset(task)
    report = training.train(cfg, dataset, args.out)
    for key in ("steps", "teacher_best_score", "student_val_metric", "out_dir"):
        print(f"{key},{report[key]}")
    return 0


def _cmd_eval(args) -> int:
    run_dir = Path(args.run)
    cfg = parse_config(run_dir / "config.cfg")
    task = SyntheticTask(args.task, cfg.image_size, cfg.train_count, cfg.val_count, cfg.seed)
    dataset = generate_dataset(task)

    gen_spec = GeneratorSpec(base_width=cfg.base_width, width_factor=1.0,
                             num_res_blocks=cfg.num_res_blocks)
    teacher = build_generator(gen_spec, 0)
    student = build_generator(replace(gen_spec, width_factor=cfg.width_factor), 0)
    best = build_generator(gen_spec, 0)
    disc = build_discriminator(DiscriminatorSpec(cfg.disc_layers, cfg.disc_base_width), 0)
    load_checkpoint(run_dir / "checkpoints", {
        "teacher_generator": teacher,
        "teacher_discriminator": disc,
        "student_generator": student,
        "best_snapshot": best,
    })
    extractor = FeatureExtractor.fixed_random(cfg.extractor_seed, dtype=np.float32)

    if dataset.paired:
        inputs, targets = dataset.val_inputs, dataset.val_targets
    else:
        inputs, targets = dataset.val_a, dataset.val_b

    lines = []
    for name, model in (("teacher", best), ("student", student)):
        outs = [model(Tensor(x), frozen=True).data for x in inputs]
        if dataset.paired:
            l2 = float(np.mean([pixel_error(o, t, "L2") for o, t in zip(outs, targets)]))
            lines.append((f"{name}_val_l2", l2))
        fd = frechet_between(outs, list(targets), extractor)
        lines.append((f"{name}_frechet", fd))

    eval_csv = run_dir / "eval.csv"
    with open(eval_csv, "a") as fh:
        for key, value in lines:
            print(f"{key},{value:.9g}")
            fh.write(f"{key},{value:.9g}\n")
    return 0


def _cmd_slice(args) -> int:
    img = tensor_io.load_tensor(args.input)
    if img.ndim != 3:
        raise ValueError(f"slice needs a [c,h,w] tensor file, got shape {img.shape}")
    n, m = _parse_patch(args.patch)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grans = slicing.GRANULARITIES if args.granularity == "all" else (args.granularity,)
    manifest_lines = []
    t = Tensor(img)
    for g in grans:
        cset = slicing.split(t, g, (n, m) if g == slicing.PATCH else None)
        for i in range(len(cset)):
            item = cset.item(i)
            tensor_io.save_tensor(out_dir / f"{g}_{i:04d}.crdt", item)
            manifest_lines.append(f"{g},{i},{item.size}")
    (out_dir / "manifest.txt").write_text("\n".join(manifest_lines) + "\n")
    print(f"wrote {len(manifest_lines)} items to {out_dir}")
    return 0


def _cmd_gradcheck(args) -> int:
    s = args.size
    if s % args.patch:
        raise ValueError(f"--size {s} must be divisible by --patch {args.patch}")
    rng = np.random.default_rng(args.seed)
    cfg = RelationConfig(triplet_budget=None if args.budget == 0 else args.budget,
                         seed=args.seed)
    teacher = Tensor(rng.uniform(-1, 1, (1, s, s)))

    def loss_fn(x: Tensor) -> Tensor:
        return crd_loss(teacher, x, args.patch, args.patch, cfg)

    student = Tensor(rng.uniform(-1, 1, (1, s, s)), requires_grad=True)
    value = loss_fn(student)
    backward(value)
    numeric = finite_diff_grad(loss_fn, student, 1e-6).data
    err = max_rel_error(student.grad, numeric)
    flat_a = student.grad.reshape(-1)
    flat_n = numeric.reshape(-1)
    worst = int(np.abs(flat_a - flat_n).argmax())
    print(f"loss,{value.item():.9g}")
    print(f"max_rel_error,{err:.3e}")
    print(f"worst_coordinate,{worst}")
    print(f"worst_analytic,{flat_a[worst]:.9e}")
    print(f"worst_numeric,{flat_n[worst]:.9e}")
    if err > args.tol:
        print(f"FAIL: relative error {err:.3e} exceeds tolerance {args.tol:.1e}")
        return 1
    print("PASS")
    return 0


def _cmd_bench(args) -> int:
    s = args.size
    n, m = args.patch, args.patch
    budget = None if args.budget == 0 else args.budget
    cfg = RelationConfig(triplet_budget=budget, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    teacher = Tensor(rng.uniform(-1, 1, (3, s, s)).astype(np.float32))
    student = Tensor(rng.uniform(-1, 1, (3, s, s)).astype(np.float32))

    pair_counts = {"column": comb(s, 2), "row": comb(s, 2),
                   "patch": comb(s * s // (n * m), 2)}
    triple_totals = {"column": comb(s, 3), "row": comb(s, 3),
                     "patch": comb(s * s // (n * m), 3)}
    triples_evaluated = sum(min(budget, t) if budget else t for t in triple_totals.values())
    pairs_evaluated = sum(pair_counts.values())

    t0 = time.perf_counter()
    for _ in range(args.iters):
        for count in (s, s * s // (n * m)):
            sample_tuples(count, 3, budget, args.seed)
    sample_ms = (time.perf_counter() - t0) * 1000 / args.iters

    t0 = time.perf_counter()
    for _ in range(args.iters):
        crd_loss(teacher, student, n, m, cfg)
    loss_ms = (time.perf_counter() - t0) * 1000 / args.iters

    print(f"image_size,{s}")
    print(f"triplet_budget,{args.budget}")
    print(f"pairs_evaluated,{pairs_evaluated}")
    print(f"triples_evaluated,{triples_evaluated}")
    print(f"tuple_sampling_ms,{sample_ms:.3f}")
    print(f"crd_loss_ms,{loss_ms:.3f}")
    print(f"tuples_per_second,{(pairs_evaluated + triples_evaluated) / (loss_ms / 1000):.0f}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "slice": _cmd_slice,
    "gradcheck": _cmd_gradcheck,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main(sys.argv[1:]))


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
