"""Fixed-extractor perceptual loss: determinism, Gram oracle, gradients."""

import numpy as np
import pytest

from crdgan.autodiff import Tensor, backward, finite_diff_grad, max_rel_error
from crdgan.perceptual import FeatureExtractor, extract, gram, perceptual_loss


@pytest.fixture(scope="module")
def extractor():
    return FeatureExtractor.fixed_random(seed=7)


class TestExtract:
    def test_deterministic(self, extractor):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, (3, 16, 16))
        a = extract(Tensor(x), extractor)
        b = extract(Tensor(x), extractor)
        for ta, tb in zip(a, b):
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_zero_input_zero_first_tap(self, extractor):
        acts = extract(Tensor(np.zeros((3, 16, 16))), extractor)
        np.testing.assert_array_equal(acts[0].data, np.zeros_like(acts[0].data))

    def test_shapes_match_declared(self, extractor):
        rng = np.random.default_rng(1)
        x = Tensor(rng.uniform(-1, 1, (3, 32, 32)))
        acts = extract(x, extractor)
        declared = extractor.tap_shapes((3, 32, 32))
        assert [a.shape for a in acts] == declared
        assert declared == [(16, 16, 16), (32, 8, 8), (64, 4, 4), (64, 2, 2)]

    def test_no_grad_into_extractor(self, extractor):
        rng = np.random.default_rng(2)
        x = Tensor(rng.uniform(-1, 1, (3, 8, 8)), requires_grad=True)
        acts = extract(x, extractor)
        backward(acts[-1].sum())
        assert x.grad is not None
        for w, _ in extractor.layers:
            assert w.grad is None and not w.requires_grad

    def test_incompatible_channels_rejected(self, extractor):
        with pytest.raises(ValueError, match="channels"):
            extract(Tensor(np.zeros((2, 16, 16))), extractor)


class TestGram:
    def test_identical_channels_rank_one(self):
        ch = np.arange(4.0).reshape(2, 2)
        act = Tensor(np.stack([ch, ch]))
        g = gram(act).data
        assert g.shape == (2, 2)
        assert np.all(g == g[0, 0])

    def test_single_ones_channel(self):
        g = gram(Tensor(np.ones((1, 2, 2)))).data
        np.testing.assert_allclose(g, [[1.0]])

    def test_against_double_loop_oracle(self):
        rng = np.random.default_rng(3)
        act = rng.normal(size=(3, 2, 2))
        got = gram(Tensor(act)).data
        c, h, w = act.shape
        want = np.zeros((c, c))
        for i in range(c):
            for j in range(c):
                acc = 0.0
                for y in range(h):
                    for x in range(w):
                        acc += act[i, y, x] * act[j, y, x]
                want[i, j] = acc / (c * h * w)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_symmetric_psd_diagonal(self):
        rng = np.random.default_rng(4)
        g = gram(Tensor(rng.normal(size=(5, 3, 3)))).data
        np.testing.assert_allclose(g, g.T, atol=1e-12)
        assert np.all(np.diag(g) >= -1e-12)


class TestPerceptualLoss:
    def test_zero_at_self(self, extractor):
        rng = np.random.default_rng(5)
        x = Tensor(rng.uniform(-1, 1, (3, 16, 16)))
        assert perceptual_loss(x, x, extractor).item() == 0.0

    def test_single_pixel_delta_monotone(self, extractor):
        rng = np.random.default_rng(6)
        base = rng.uniform(-0.5, 0.5, (3, 16, 16))
        losses = []
        for delta in (0.05, 0.1, 0.2, 0.4):
            bumped = base.copy()
            bumped[0, 3, 3] += delta
            losses.append(perceptual_loss(Tensor(base), Tensor(bumped), extractor).item())
        assert losses[0] > 0.0
        assert all(a < b for a, b in zip(losses, losses[1:]))

    def test_against_term_by_term_oracle(self, extractor):
        rng = np.random.default_rng(7)
        t = Tensor(rng.uniform(-1, 1, (3, 8, 8)))
        s = Tensor(rng.uniform(-1, 1, (3, 8, 8)))
        got = perceptual_loss(t, s, extractor).item()
        want = 0.0
        for ta, sa in zip(extract(t, extractor), extract(s, extractor)):
            c, h, w = ta.shape
            want += np.abs(ta.data - sa.data).sum() / (c * h * w)
            want += np.abs(gram(ta).data - gram(sa).data).sum()
        assert got == pytest.approx(want, rel=1e-8)

    def test_shape_mismatch_rejected(self, extractor):
        with pytest.raises(ValueError, match="mismatch"):
            perceptual_loss(Tensor(np.zeros((3, 8, 8))), Tensor(np.zeros((3, 8, 4))), extractor)

    def test_teacher_path_detached(self, extractor):
        rng = np.random.default_rng(8)
        t = Tensor(rng.uniform(-1, 1, (3, 8, 8)), requires_grad=True)
        s = Tensor(rng.uniform(-1, 1, (3, 8, 8)), requires_grad=True)
        backward(perceptual_loss(t, s, extractor))
        assert t.grad is None and s.grad is not None

    def test_gradient_matches_finite_differences(self, extractor):
        rng = np.random.default_rng(9)
        t = Tensor(rng.uniform(-1, 1, (3, 8, 8)))
        s0 = rng.uniform(-1, 1, (3, 8, 8))

        def f(x):
            return perceptual_loss(t, x, extractor)

        s = Tensor(s0, requires_grad=True)
        backward(f(s))
        numeric = finite_diff_grad(f, s, 1e-6).data
        assert max_rel_error(s.grad, numeric) <= 1e-4


class TestWeightIO:
    def test_save_load_round_trip(self, extractor, tmp_path):
        extractor.save(tmp_path)
        loaded = FeatureExtractor.load(tmp_path)
        rng = np.random.default_rng(10)
        x = rng.uniform(-1, 1, (3, 16, 16)).astype(np.float32)
        a = extract(Tensor(x), extractor)[-1].data
        b = extract(Tensor(x), loaded)[-1].data
        np.testing.assert_allclose(a, b, atol=1e-6)   # stored weights are float32

    def test_missing_weights_rejected(self, tmp_path):
        from crdgan import tensor_io
        tensor_io.write_manifest(tmp_path, [])
        with pytest.raises(ValueError, match="no extractor weights"):
            FeatureExtractor.load(tmp_path)
