import numpy as np
import pytest

from bmd.numerics import make_rng, softmax_rows
from bmd.objectives import (
    LOG_CLAMP,
    LossWeights,
    SoftmaxLinearModel,
    ce_loss,
    combined_loss,
    forward,
    gradients,
    label_smoothing_ce,
    sce_loss,
    source_gradients,
)


def random_instance(seed, D=6, d=4, K=3, B=5, activation="tanh"):
    rng = make_rng(seed)
    model = SoftmaxLinearModel(
        rng.normal(size=(d, D)), rng.normal(size=d),
        rng.normal(size=(K, d)), rng.normal(size=K), activation,
    )
    x = rng.normal(size=(B, D))
    hard = rng.integers(0, K, size=B)
    soft = softmax_rows(rng.normal(size=(B, K)) * 2)
    return model, x, hard, soft


def finite_difference(model, x, hard, soft, w, step=1e-5):
    dW = np.zeros_like(model.extractor_weights)
    db = np.zeros_like(model.extractor_bias)
    for arr, out in ((model.extractor_weights, dW), (model.extractor_bias, db)):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = combined_loss(model, x, hard, soft, w)
            arr[idx] = orig - step
            down = combined_loss(model, x, hard, soft, w)
            arr[idx] = orig
            out[idx] = (up - down) / (2 * step)
    return dW, db


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


class TestForward:
    def test_zero_model_uniform(self):
        m = SoftmaxLinearModel(np.zeros((3, 5)), np.zeros(3), np.zeros((4, 3)), np.zeros(4), "identity")
        _, p = forward(m, make_rng(0).normal(size=(2, 5)))
        np.testing.assert_allclose(p, 0.25, atol=1e-15)

    def test_identity_model(self):
        m = SoftmaxLinearModel(np.eye(3), np.zeros(3), np.eye(3), np.zeros(3), "identity")
        x = make_rng(1).normal(size=(4, 3))
        feats, p = forward(m, x)
        np.testing.assert_array_equal(feats, x)
        np.testing.assert_allclose(p, softmax_rows(x), atol=1e-15)

    def test_independent_evaluation(self):
        model, x, _, _ = random_instance(2)
        feats, p = forward(model, x)
        for i in range(x.shape[0]):
            h = np.tanh([sum(model.extractor_weights[j, k] * x[i, k] for k in range(6))
                         + model.extractor_bias[j] for j in range(4)])
            logits = [sum(model.classifier_weights[c, j] * h[j] for j in range(4))
                      + model.classifier_bias[c] for c in range(3)]
            e = np.exp(np.array(logits) - max(logits))
            np.testing.assert_allclose(feats[i], h, atol=1e-10)
            np.testing.assert_allclose(p[i], e / e.sum(), atol=1e-10)

    def test_dimension_mismatch(self):
        model, _, _, _ = random_instance(3)
        with pytest.raises(ValueError):
            forward(model, np.ones((2, 5)))


class TestLosses:
    def test_ce_one_hot_zero(self):
        assert ce_loss(np.eye(3), [0, 1, 2]) <= 1e-7

    def test_ce_uniform(self):
        assert ce_loss(np.full((5, 4), 0.25), [0, 1, 2, 3, 0]) == pytest.approx(np.log(4), abs=1e-12)

    def test_ce_scalar_oracle(self):
        _, _, hard, soft = random_instance(4, B=8)
        oracle = -sum(np.log(max(soft[i, hard[i]], LOG_CLAMP)) for i in range(8)) / 8
        assert ce_loss(soft, hard) == pytest.approx(oracle, abs=1e-12)

    def test_sce_identical_one_hot(self):
        eye = np.eye(3)
        assert sce_loss(eye, eye) <= 1e-5

    def test_sce_uniform(self):
        assert sce_loss(np.full((3, 2), 0.5), np.full((3, 2), 0.5)) == pytest.approx(2 * np.log(2), abs=1e-12)

    def test_sce_scalar_oracle(self):
        rng = make_rng(5)
        p = softmax_rows(rng.normal(size=(6, 4)))
        q = softmax_rows(rng.normal(size=(6, 4)))
        total = 0.0
        for i in range(6):
            for k in range(4):
                total -= q[i, k] * np.log(max(p[i, k], LOG_CLAMP))
                total -= p[i, k] * np.log(max(q[i, k], LOG_CLAMP))
        assert sce_loss(p, q) == pytest.approx(total / 6, abs=1e-12)

    def test_losses_non_negative(self):
        for seed in range(20):
            _, _, hard, soft = random_instance(seed)
            assert ce_loss(soft, hard) >= 0
            assert sce_loss(soft, softmax_rows(make_rng(seed).normal(size=soft.shape))) >= 0

    def test_label_smoothing_zero_is_ce(self):
        _, _, hard, soft = random_instance(6)
        assert label_smoothing_ce(soft, hard, 0.0) == pytest.approx(ce_loss(soft, hard), abs=1e-15)

    def test_label_smoothing_full_is_uniform_target(self):
        _, _, hard, soft = random_instance(7)
        expected = -np.log(soft).mean(axis=1).mean()
        assert label_smoothing_ce(soft, hard, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_label_smoothing_scalar_oracle(self):
        _, _, hard, soft = random_instance(8, K=3, B=5)
        eps = 0.1
        total = 0.0
        for i in range(5):
            for k in range(3):
                t = (1 - eps) * (k == hard[i]) + eps / 3
                total -= t * np.log(max(soft[i, k], LOG_CLAMP))
        assert label_smoothing_ce(soft, hard, eps) == pytest.approx(total / 5, abs=1e-12)


class TestCombined:
    def test_alpha_zero(self):
        model, x, hard, soft = random_instance(9)
        _, p = forward(model, x)
        assert combined_loss(model, x, hard, soft, LossWeights(0.0, 0.7)) == pytest.approx(0.7 * sce_loss(p, soft))

    def test_beta_zero(self):
        model, x, hard, soft = random_instance(10)
        _, p = forward(model, x)
        assert combined_loss(model, x, hard, soft, LossWeights(1.3, 0.0)) == pytest.approx(1.3 * ce_loss(p, hard))

    def test_paper_weights(self):
        model, x, hard, soft = random_instance(11)
        _, p = forward(model, x)
        expected = 2 * ce_loss(p, hard) + 0.5 * sce_loss(p, soft)
        assert combined_loss(model, x, hard, soft, LossWeights(2.0, 0.5)) == pytest.approx(expected, abs=1e-12)

    def test_linear_in_weights(self):
        model, x, hard, soft = random_instance(12)
        a = combined_loss(model, x, hard, soft, LossWeights(1.0, 0.0))
        b = combined_loss(model, x, hard, soft, LossWeights(0.0, 1.0))
        assert combined_loss(model, x, hard, soft, LossWeights(0.4, 3.0)) == pytest.approx(0.4 * a + 3.0 * b)


class TestGradients:
    def test_zero_weights(self):
        model, x, hard, soft = random_instance(13)
        dW, db = gradients(model, x, hard, soft, LossWeights(0.0, 0.0))
        assert not dW.any() and not db.any()

    @pytest.mark.parametrize("activation", ["tanh", "identity"])
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed, activation):
        model, x, hard, soft = random_instance(seed, activation=activation)
        w = LossWeights(2.0, 0.5)
        dW, db = gradients(model, x, hard, soft, w)
        fW, fb = finite_difference(model, x, hard, soft, w)
        assert rel_err(dW, fW).max() < 1e-4
        assert rel_err(db, fb).max() < 1e-4

    def test_duplicated_batch(self):
        model, x, hard, soft = random_instance(14)
        w = LossWeights(1.0, 1.0)
        a = gradients(model, x, hard, soft, w)
        b = gradients(model, np.vstack([x, x]), np.concatenate([hard, hard]), np.vstack([soft, soft]), w)
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, atol=1e-12)

    def test_source_gradients_finite_difference(self):
        model, x, hard, _ = random_instance(15)
        eps = 0.1
        grads = source_gradients(model, x, hard, eps)
        arrays = (model.extractor_weights, model.extractor_bias, model.classifier_weights, model.classifier_bias)

        def loss():
            return label_smoothing_ce(forward(model, x)[1], hard, eps)

        for arr, g in zip(arrays, grads):
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + 1e-5
                up = loss()
                arr[idx] = orig - 1e-5
                down = loss()
                arr[idx] = orig
                fd[idx] = (up - down) / 2e-5
            assert rel_err(g, fd).max() < 1e-4
