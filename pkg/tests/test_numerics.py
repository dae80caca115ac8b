import numpy as np
import pytest

from snnadv import numerics
from snnadv.errors import DimensionError, EvaluationError, IndexRangeError


class TestMatmul:
    def test_identity_both_sides(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 3))
        eye = np.eye(3)
        assert np.array_equal(numerics.matmul(eye, a), a)
        assert np.array_equal(numerics.matmul(a, eye), a)

    def test_selector_row(self):
        out = numerics.matmul(np.array([[1.0, 0.0]]), np.array([[2.0], [5.0]]))
        assert out.shape == (1, 1) and out[0, 0] == 2.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        want = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    want[i, j] += a[i, k] * b[k, j]
        assert np.allclose(numerics.matmul(a, b), want, rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            numerics.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_non_finite_surfaced(self):
        a = np.array([[1.0, np.inf]])
        with pytest.raises(EvaluationError):
            numerics.matmul(a, np.ones((2, 1)))


class TestElementwise:
    def test_sign_convention(self):
        assert np.array_equal(numerics.sign(np.array([-3.0, 0.0, 7.0])),
                              np.array([-1.0, 0.0, 1.0]))

    def test_clamp_pixel_range(self):
        out = numerics.clamp(np.array([-0.2, 0.5, 1.3]), 0.0, 1.0)
        assert np.array_equal(out, np.array([0.0, 0.5, 1.0]))

    def test_clamp_idempotent(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.uniform(-3, 3, size=(4, 5))
            once = numerics.clamp(x, 0.0, 1.0)
            assert np.array_equal(numerics.clamp(once, 0.0, 1.0), once)

    def test_mul_matches_scalar_loop(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((2, 2))
        b = rng.standard_normal((2, 2))
        want = np.array([[a[i, j] * b[i, j] for j in range(2)] for i in range(2)])
        assert np.array_equal(numerics.mul(a, b), want)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            numerics.add(np.zeros(3), np.zeros(4))

    def test_scalar_broadcast(self):
        assert np.array_equal(numerics.sub(np.array([1.0, 2.0]), 1.0),
                              np.array([0.0, 1.0]))


class TestSoftmaxCrossEntropy:
    def test_uniform_softmax(self):
        loss, _ = numerics.softmax_cross_entropy(np.array([[0.0, 0.0]]), np.array([0]))
        assert abs(loss - np.log(2.0)) < 1e-7

    def test_stability_no_overflow(self):
        loss, dlogits = numerics.softmax_cross_entropy(np.array([[1000.0, 0.0]]),
                                                       np.array([0]))
        assert loss < 1e-6
        assert np.all(np.isfinite(dlogits))

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((3, 5))
        labels = np.array([0, 3, 2])
        _, dlogits = numerics.softmax_cross_entropy(logits, labels)
        fd = numerics.finite_difference_grad(
            lambda z: numerics.softmax_cross_entropy(z, labels)[0], logits, h=1e-6)
        assert numerics.max_rel_err(dlogits, fd) <= 1e-4

    def test_label_out_of_range(self):
        with pytest.raises(IndexRangeError):
            numerics.softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


class TestFiniteDifference:
    def test_linear_function(self):
        g = numerics.finite_difference_grad(lambda x: float(x.sum()), np.zeros((2, 3)))
        assert np.allclose(g, 1.0, atol=1e-9)

    def test_quadratic(self):
        g = numerics.finite_difference_grad(lambda x: 0.5 * float((x * x).sum()),
                                            np.array([1.0, 2.0]))
        assert np.allclose(g, [1.0, 2.0], atol=1e-8)

    def test_bad_step_rejected(self):
        with pytest.raises(EvaluationError):
            numerics.finite_difference_grad(lambda x: 0.0, np.zeros(2), h=0.0)

    def test_non_finite_objective_rejected(self):
        with pytest.raises(EvaluationError):
            numerics.finite_difference_grad(lambda x: float("nan"), np.zeros(2))
