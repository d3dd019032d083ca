"""Training protocol: schedule, freezing contract, snapshots, determinism."""

import math

import numpy as np
import pytest

from crdgan.autodiff import backward
from crdgan.config import TrainConfig
from crdgan.datasets import SyntheticTask, generate_dataset
from crdgan.metrics import pixel_error
from crdgan.relations import RelationConfig
from crdgan.training import Trainer, lr_at, paired_l2_metric, train


def tiny_config(**overrides) -> TrainConfig:
    base = dict(epochs=1, lr0=2e-4, batch_size=1, lambda_crd=2.5, lambda_per=1.0,
                relation=RelationConfig(triplet_budget=64),
                patch=(4, 4), teacher_eval_interval=2, seed=3,
                image_size=16, base_width=8, num_res_blocks=1,
                disc_layers=2, disc_base_width=8, train_count=4, val_count=2)
    base.update(overrides)
    return TrainConfig(**base)


def tiny_dataset(cfg, kind="invert"):
    return generate_dataset(SyntheticTask(kind, cfg.image_size, cfg.train_count,
                                          cfg.val_count, cfg.seed))


def first_batch(ds):
    if ds.paired:
        return ds.train_inputs[:1], ds.train_targets[:1]
    return ds.train_a[:1], ds.train_b[:1]


class TestLrSchedule:
    def test_initial_value(self):
        cfg = tiny_config(epochs=100, lr0=2e-4)
        assert lr_at(0, cfg) == 2e-4

    def test_constant_through_first_half(self):
        cfg = tiny_config(epochs=100)
        assert lr_at(49, cfg) == cfg.lr0

    def test_linear_interpolation_at_three_quarters(self):
        cfg = tiny_config(epochs=100, lr0=2e-4)
        assert lr_at(75, cfg) == pytest.approx(1e-4)

    def test_reaches_zero_at_the_end(self):
        cfg = tiny_config(epochs=100, lr0=2e-4)
        assert lr_at(cfg.epochs, cfg) <= 1e-8 * cfg.lr0
        assert lr_at(cfg.epochs - 1, cfg) <= cfg.lr0 / (cfg.epochs / 2)

    def test_non_increasing(self):
        cfg = tiny_config(epochs=20)
        values = [lr_at(e / 2.0, cfg) for e in range(41)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_pure_linear_option(self):
        cfg = tiny_config(epochs=10, lr_schedule="linear")
        assert lr_at(5, cfg) == pytest.approx(cfg.lr0 / 2)

    def test_out_of_range_rejected(self):
        cfg = tiny_config(epochs=10)
        with pytest.raises(ValueError, match="outside"):
            lr_at(-1, cfg)
        with pytest.raises(ValueError, match="outside"):
            lr_at(11, cfg)


class TestTeacherStep:
    def test_parameters_change(self):
        cfg = tiny_config()
        tr = Trainer(cfg, tiny_dataset(cfg))
        before = tr.state.generator.param_arrays()
        d_before = tr.state.discriminator.param_arrays()
        tr.train_step_teacher(first_batch(tr.dataset))
        assert any(not np.array_equal(a, p.data) for a, p in
                   zip(before, tr.state.generator.parameters()))
        assert any(not np.array_equal(a, p.data) for a, p in
                   zip(d_before, tr.state.discriminator.parameters()))

    def test_zero_lr_is_a_null_update(self):
        cfg = tiny_config()
        tr = Trainer(cfg, tiny_dataset(cfg))
        tr.set_lr(0.0)
        before = tr.state.generator.param_arrays() + tr.state.discriminator.param_arrays()
        tr.train_step_teacher(first_batch(tr.dataset))
        after = [p.data for p in tr.state.generator.parameters()] \
            + [p.data for p in tr.state.discriminator.parameters()]
        for a, b in zip(before, after):
            assert np.array_equal(a, b)

    def test_reconstruction_improves_over_200_steps(self):
        cfg = tiny_config(epochs=50, train_count=4)
        ds = tiny_dataset(cfg)
        tr = Trainer(cfg, ds)
        batch = first_batch(ds)
        x, y = batch
        start = pixel_error(tr.teacher_generate(x[0]), y[0], "L2")
        for step in range(200):
            tr.train_step_teacher(batch, step)
        end = pixel_error(tr.teacher_generate(x[0]), y[0], "L2")
        assert end < start


class TestStudentStep:
    def test_freezing_contract_byte_identical(self):
        cfg = tiny_config()
        tr = Trainer(cfg, tiny_dataset(cfg))
        batch = first_batch(tr.dataset)
        tr.train_step_teacher(batch, 0)
        t_bytes = [p.data.tobytes() for p in tr.state.generator.parameters()]
        d_bytes = [p.data.tobytes() for p in tr.state.discriminator.parameters()]
        s_before = tr.student.param_arrays()
        tr.train_step_student(batch, 0)
        for b, p in zip(t_bytes, tr.state.generator.parameters()):
            assert p.data.tobytes() == b
            assert p.grad is None or not p.grad.any()
        for b, p in zip(d_bytes, tr.state.discriminator.parameters()):
            assert p.data.tobytes() == b
            assert p.grad is None or not p.grad.any()
        assert any(not np.array_equal(a, p.data) for a, p in
                   zip(s_before, tr.student.parameters()))

    def test_always_updating_changes_discriminator(self):
        cfg = tiny_config(discriminator_mode="online_always_updating")
        tr = Trainer(cfg, tiny_dataset(cfg))
        batch = first_batch(tr.dataset)
        d_before = tr.state.discriminator.param_arrays()
        tr.train_step_student(batch, 0)
        assert any(not np.array_equal(a, p.data) for a, p in
                   zip(d_before, tr.state.discriminator.parameters()))

    def test_no_discriminator_mode_has_no_adv_term(self):
        cfg = tiny_config(discriminator_mode="online_no_discriminator")
        tr = Trainer(cfg, tiny_dataset(cfg))
        parts = tr.train_step_student(first_batch(tr.dataset), 0)
        assert parts["adv_loss_S"] == 0.0
        combined = cfg.lambda_crd * (parts["crd_d"]
                                     + cfg.relation.lambda_a * parts["crd_a"]) \
            + cfg.lambda_per * parts["per_loss"]
        assert parts["total_S"] == pytest.approx(combined, rel=1e-5)

    def test_degenerate_weights_without_discriminator_is_a_noop(self):
        cfg = tiny_config(lambda_crd=0.0, lambda_per=0.0,
                          discriminator_mode="online_no_discriminator")
        tr = Trainer(cfg, tiny_dataset(cfg))
        before = tr.student.param_arrays()
        parts = tr.train_step_student(first_batch(tr.dataset), 0)
        assert parts["total_S"] == 0.0
        for a, p in zip(before, tr.student.parameters()):
            assert np.array_equal(a, p.data)

    def test_loss_composition(self):
        # float64 so the composition identity holds to tight absolute tolerance
        cfg = tiny_config()
        tr = Trainer(cfg, tiny_dataset(cfg), dtype=np.float64)
        total, parts = tr.student_losses(first_batch(tr.dataset), 0)
        combined = parts["adv_loss_S"] \
            + cfg.lambda_crd * (parts["crd_d"] + cfg.relation.lambda_a * parts["crd_a"]) \
            + cfg.lambda_per * parts["per_loss"]
        assert abs(total.item() - combined) <= 1e-6

    def test_student_param_gradients_match_finite_differences(self):
        cfg = tiny_config(image_size=8, patch=(4, 4), val_count=2,
                          relation=RelationConfig(triplet_budget=16))
        tr = Trainer(cfg, tiny_dataset(cfg), dtype=np.float64)
        batch = first_batch(tr.dataset)

        total, _ = tr.student_losses(batch, 0)
        backward(total)
        params = tr.student.parameters()
        rng = np.random.default_rng(0)
        eps = 1e-6
        checked = 0
        for p in (params[0], params[3], params[-1]):
            grad = p.grad.reshape(-1)
            flat = p.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(5, flat.size), replace=False):
                old = flat[idx]
                flat[idx] = old + eps
                up, _ = tr.student_losses(batch, 0)
                flat[idx] = old - eps
                down, _ = tr.student_losses(batch, 0)
                flat[idx] = old
                numeric = (up.item() - down.item()) / (2 * eps)
                denom = max(abs(grad[idx]), abs(numeric), 1e-3)
                assert abs(grad[idx] - numeric) / denom <= 1e-4
                checked += 1
        assert checked >= 10


class TestSnapshot:
    def test_first_evaluation_always_replaces(self):
        cfg = tiny_config(teacher_eval_interval=1)
        tr = Trainer(cfg, tiny_dataset(cfg))
        assert tr.state.best_score == math.inf
        val = (tr.dataset.val_inputs, tr.dataset.val_targets)
        assert tr.maybe_update_snapshot(val, paired_l2_metric, step=0) is True
        assert tr.state.best_score < math.inf

    def test_worse_evaluation_keeps_snapshot(self):
        cfg = tiny_config(teacher_eval_interval=1)
        tr = Trainer(cfg, tiny_dataset(cfg))
        val = (tr.dataset.val_inputs, tr.dataset.val_targets)
        scores = iter([5.0, 7.0])
        metric = lambda gen, vs: next(scores)
        assert tr.maybe_update_snapshot(val, metric, 0) is True
        snap = tr.state.best_generator.param_arrays()
        tr.train_step_teacher(first_batch(tr.dataset), 0)
        assert tr.maybe_update_snapshot(val, metric, 1) is False
        assert tr.state.best_score == 5.0
        for a, p in zip(snap, tr.state.best_generator.parameters()):
            assert np.array_equal(a, p.data)

    def test_scripted_sequence_replaces_at_steps_0_and_2(self):
        cfg = tiny_config(teacher_eval_interval=1)
        tr = Trainer(cfg, tiny_dataset(cfg))
        val = (tr.dataset.val_inputs, tr.dataset.val_targets)
        scores = iter([5.0, 7.0, 3.0])
        metric = lambda gen, vs: next(scores)
        replaced = [tr.maybe_update_snapshot(val, metric, step) for step in range(3)]
        assert replaced == [True, False, True]
        assert tr.state.best_score == 3.0

    def test_interval_gates_evaluation(self):
        cfg = tiny_config(teacher_eval_interval=5)
        tr = Trainer(cfg, tiny_dataset(cfg))
        val = (tr.dataset.val_inputs, tr.dataset.val_targets)
        calls = []
        metric = lambda gen, vs: calls.append(1) or 1.0
        for step in range(10):
            tr.maybe_update_snapshot(val, metric, step)
        assert len(calls) == 2     # steps 0 and 5

    def test_empty_val_set_rejected(self):
        cfg = tiny_config(teacher_eval_interval=1)
        tr = Trainer(cfg, tiny_dataset(cfg))
        with pytest.raises(ValueError, match="empty"):
            tr.maybe_update_snapshot((np.zeros((0, 3, 16, 16)), None),
                                     paired_l2_metric, 0)


class TestTrainLoop:
    def test_smoke_run_emits_all_artifacts(self, tmp_path):
        cfg = tiny_config()
        report = train(cfg, tiny_dataset(cfg), tmp_path / "run")
        run = tmp_path / "run"
        assert (run / "config.cfg").is_file()
        assert (run / "metrics.csv").is_file()
        assert (run / "checkpoints" / "manifest.csv").is_file()
        assert (run / "samples" / "final.ppm").is_file()
        assert report["steps"] == cfg.epochs * cfg.train_count
        header = (run / "metrics.csv").read_text().splitlines()[0]
        assert header == ("epoch,step,lr,d_loss_T,g_loss_T,adv_loss_S,crd_d,"
                          "crd_a,per_loss,total_S,val_metric,snapshot_replaced")

    def test_same_seed_runs_are_byte_identical(self, tmp_path):
        cfg = tiny_config(epochs=2)
        train(cfg, tiny_dataset(cfg), tmp_path / "a")
        train(cfg, tiny_dataset(cfg), tmp_path / "b")
        a = (tmp_path / "a" / "metrics.csv").read_bytes()
        b = (tmp_path / "b" / "metrics.csv").read_bytes()
        assert a == b

    def test_best_score_non_increasing_over_training(self, tmp_path):
        cfg = tiny_config(epochs=3, teacher_eval_interval=2)
        ds = tiny_dataset(cfg)
        tr = Trainer(cfg, ds)
        val = (ds.val_inputs, ds.val_targets)
        bests = []
        for step in range(12):
            tr.train_step_teacher(first_batch(ds), step)
            tr.maybe_update_snapshot(val, paired_l2_metric, step)
            bests.append(tr.state.best_score)
        assert all(a >= b for a, b in zip(bests, bests[1:]))

    def test_batched_steps(self):
        cfg = tiny_config(batch_size=2)
        ds = tiny_dataset(cfg)
        tr = Trainer(cfg, ds)
        batch = (ds.train_inputs[:2], ds.train_targets[:2])
        tr.train_step_teacher(batch, 0)
        parts = tr.train_step_student(batch, 0)
        assert np.isfinite(parts["total_S"])
        # batched crd equals the mean of the per-image values
        total, batch_parts = tr.student_losses(batch, 0)
        singles = [tr.student_losses((ds.train_inputs[i:i + 1],
                                      ds.train_targets[i:i + 1]), 0)[1]["crd_d"]
                   for i in range(2)]
        assert batch_parts["crd_d"] == pytest.approx(np.mean(singles), rel=1e-4)

    def test_sample_grid_is_valid_ppm(self, tmp_path):
        from crdgan.ppm import read_ppm
        cfg = tiny_config()
        train(cfg, tiny_dataset(cfg), tmp_path / "run")
        grid = read_ppm(tmp_path / "run" / "samples" / "final.ppm")
        # rows: input / teacher / student / target; columns: min(4, val_count)
        assert grid.shape == (4 * cfg.image_size, 2 * cfg.image_size, 3)
        assert grid.dtype == np.uint8

    def test_unpaired_task_trains_with_frechet_metric(self, tmp_path):
        cfg = tiny_config(lambda_crd=25.0)
        ds = tiny_dataset(cfg, kind="shapes")
        report = train(cfg, ds, tmp_path / "run")
        assert np.isfinite(report["teacher_best_score"])
        assert np.isfinite(report["student_val_metric"])

    def test_pretrained_modes_round_trip(self, tmp_path):
        for mode in ("pretrained_frozen", "pretrained_updating"):
            cfg = tiny_config(discriminator_mode=mode)
            ds = tiny_dataset(cfg)
            tr = Trainer(cfg, ds)
            from crdgan.training import _pretrain_discriminator
            d_init = tr.state.discriminator.param_arrays()
            _pretrain_discriminator(tr, ds)
            # pretraining moved the discriminator, generators were reset
            assert any(not np.array_equal(a, p.data) for a, p in
                       zip(d_init, tr.state.discriminator.parameters()))
            d_after = [p.data.tobytes() for p in tr.state.discriminator.parameters()]
            tr.train_step_teacher(first_batch(ds), 0)
            changed = [p.data.tobytes() != b for p, b in
                       zip(tr.state.discriminator.parameters(), d_after)]
            if mode == "pretrained_frozen":
                assert not any(changed)
            else:
                assert any(changed)
