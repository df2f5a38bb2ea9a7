"""Activation/similarity primitives, tape ops, and the gradient checker."""

import numpy as np
import pytest

from scenematch.numcore import (
    Tensor,
    as_tensor,
    concat,
    cosine_sim,
    gather_rows,
    grad_check,
    l2_normalize_rows,
    leaky_relu,
    parameter,
    segment_sum,
    softmax,
    softmax_t,
    stack,
    take_along_axis,
)
from scenematch.numcore import autograd as ag


# ---------------------------------------------------------------- functions


class TestLeakyRelu:
    def test_positive_passthrough(self):
        np.testing.assert_allclose(leaky_relu(np.array([2.0]), 0.2), [2.0])

    def test_negative_scaled(self):
        np.testing.assert_allclose(leaky_relu(np.array([-1.0]), 0.2), [-0.2])

    def test_mixed(self):
        np.testing.assert_allclose(
            leaky_relu(np.array([0.0, -5.0, 3.0]), 0.01), [0.0, -0.05, 3.0]
        )

    def test_slope_out_of_range(self):
        with pytest.raises(ValueError):
            leaky_relu(np.array([1.0]), 1.5)

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            leaky_relu(np.array([np.nan]), 0.2)

    def test_monotone(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=20)
            y = x + np.abs(rng.normal(size=20))
            assert np.all(leaky_relu(y, 0.2) >= leaky_relu(x, 0.2))


class TestSoftmax:
    def test_single_element(self):
        np.testing.assert_allclose(softmax(np.array([7.3])), [1.0])

    def test_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_analytic(self):
        np.testing.assert_allclose(
            softmax(np.array([np.log(2.0), 0.0])), [2 / 3, 1 / 3], atol=1e-15
        )

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    def test_probability_vector(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.normal(scale=10.0, size=rng.integers(1, 30))
            p = softmax(x)
            assert np.all(p >= 0.0)
            assert abs(p.sum() - 1.0) <= 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.normal(size=10)
            c = rng.normal() * 50
            np.testing.assert_allclose(softmax(x), softmax(x + c), atol=1e-12)


class TestCosineSim:
    def test_identical_direction(self):
        assert cosine_sim(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_analytic_inv_sqrt2(self):
        got = cosine_sim(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert got == pytest.approx(1.0 / np.sqrt(2.0))

    def test_zero_norm_errors(self):
        with pytest.raises(ValueError):
            cosine_sim(np.zeros(3), np.ones(3))

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            cosine_sim(np.ones(3), np.ones(4))

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            a, b = rng.uniform(0.1, 10.0, size=2)
            assert cosine_sim(u, v) == pytest.approx(cosine_sim(a * u, b * v), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            assert -1.0 - 1e-12 <= cosine_sim(u, v) <= 1.0 + 1e-12


# ---------------------------------------------------------------- tape ops


def numeric_grad(f, x, eps=1e-6):
    """Central differences of a scalar function of an ndarray."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, x0, atol=1e-7):
    """Tape gradient of scalar build(Tensor) vs central differences."""
    t = parameter(x0.copy())
    out = build(t)
    out.backward()
    got = t.grad

    def f(x):
        with ag.no_grad():
            return float(build(Tensor(x)).data)

    want = numeric_grad(f, x0.copy())
    np.testing.assert_allclose(got, want, atol=atol)


class TestTapeGradients:
    def test_add_mul_broadcast(self):
        rng = np.random.default_rng(10)
        x0 = rng.normal(size=(3, 4))
        b = Tensor(rng.normal(size=(4,)))
        check_op(lambda t: ((t + b) * (t * 2.0 - 1.0)).sum(), x0)

    def test_div(self):
        rng = np.random.default_rng(11)
        x0 = rng.normal(size=(3, 3)) + 3.0
        c = Tensor(rng.normal(size=(3, 3)) + 2.0)
        check_op(lambda t: (c / t).sum(), x0)

    def test_matmul_2d(self):
        rng = np.random.default_rng(12)
        x0 = rng.normal(size=(3, 4))
        w = Tensor(rng.normal(size=(4, 2)))
        check_op(lambda t: ((t @ w) * (t @ w)).sum(), x0)

    def test_matmul_vec(self):
        rng = np.random.default_rng(13)
        x0 = rng.normal(size=(5,))
        w = Tensor(rng.normal(size=(5, 3)))
        check_op(lambda t: (t @ w).sum(), x0)
        m = Tensor(rng.normal(size=(4, 5)))
        check_op(lambda t: (m @ t).sum(), x0)
        v = Tensor(rng.normal(size=(5,)))
        check_op(lambda t: t @ v, x0)

    def test_matmul_batched(self):
        rng = np.random.default_rng(14)
        x0 = rng.normal(size=(2, 3, 4))
        w = Tensor(rng.normal(size=(4, 4)))
        check_op(lambda t: (t @ w).sum(), x0)
        # batched @ batched with weight grad
        a = rng.normal(size=(2, 3, 4))

        def build(t):
            return (as_tensor(a) @ ag.transpose(t, (0, 2, 1))).sum()

        check_op(build, x0)

    def test_weight_grad_in_batched_matmul(self):
        rng = np.random.default_rng(15)
        w0 = rng.normal(size=(4, 3))
        a = Tensor(rng.normal(size=(2, 5, 4)))
        check_op(lambda t: ((a @ t) * (a @ t)).sum(), w0)

    def test_index_slice(self):
        rng = np.random.default_rng(16)
        x0 = rng.normal(size=(4, 6))
        check_op(lambda t: (t[1:3, 2:] * 3.0).sum() + t[0, 0], x0)

    def test_reductions(self):
        rng = np.random.default_rng(17)
        x0 = rng.normal(size=(3, 5))
        check_op(lambda t: t.sum(axis=0).sum(), x0)
        check_op(lambda t: t.mean(axis=1).sum(), x0)
        check_op(lambda t: t.max(axis=1).sum(), x0)
        check_op(lambda t: t.max(), x0)

    def test_nonlinearities(self):
        rng = np.random.default_rng(18)
        x0 = rng.normal(size=(4, 4)) + 0.05  # keep away from relu kink
        check_op(lambda t: ag.relu(t).sum(), x0)
        check_op(lambda t: ag.leaky_relu(t, 0.2).sum(), x0)
        check_op(lambda t: ag.exp(t).sum(), x0)
        check_op(lambda t: ag.log(t * t + 1.0).sum(), x0)
        check_op(lambda t: ag.sqrt(t * t + 0.5).sum(), x0)

    def test_softmax_grad(self):
        rng = np.random.default_rng(19)
        x0 = rng.normal(size=(3, 6))
        w = Tensor(rng.normal(size=(6,)))
        check_op(lambda t: (softmax_t(t, axis=1) @ w).sum(), x0)

    def test_concat_stack(self):
        rng = np.random.default_rng(20)
        x0 = rng.normal(size=(3, 4))
        other = Tensor(rng.normal(size=(2, 4)))
        check_op(lambda t: (concat([t, other], axis=0) ** 1 if False else concat([t, other], axis=0)).sum(), x0)
        check_op(lambda t: stack([t[0], t[1], t[2]], axis=0).sum() * 2.0, x0)

    def test_gather_rows_duplicates(self):
        rng = np.random.default_rng(21)
        x0 = rng.normal(size=(4, 3))
        idx = np.array([0, 2, 2, 3, 0])
        w = Tensor(rng.normal(size=(3,)))
        check_op(lambda t: (gather_rows(t, idx) @ w).sum(), x0)

    def test_take_along_axis_sort(self):
        rng = np.random.default_rng(22)
        x0 = rng.normal(size=(5, 3))
        order = np.argsort(-x0, axis=0, kind="stable")
        w = Tensor(rng.normal(size=(5,)))
        check_op(lambda t: (w @ take_along_axis(t, order, axis=0)).sum(), x0)

    def test_segment_sum(self):
        rng = np.random.default_rng(23)
        x0 = rng.normal(size=(6, 3))
        seg = np.array([0, 0, 1, 2, 2, 2])
        check_op(lambda t: (segment_sum(t, seg, 3) * segment_sum(t, seg, 3)).sum(), x0)

    def test_l2_normalize_rows(self):
        rng = np.random.default_rng(24)
        x0 = rng.normal(size=(3, 4)) + 2.0
        v = Tensor(rng.normal(size=(4,)))
        check_op(lambda t: (l2_normalize_rows(t) @ v).sum(), x0)

    def test_grad_accumulates_through_reuse(self):
        x = parameter(np.array([2.0, 3.0]))
        y = (x * x).sum() + x.sum()
        y.backward()
        np.testing.assert_allclose(x.grad, [5.0, 7.0])

    def test_no_grad_blocks_recording(self):
        x = parameter(np.ones(3))
        with ag.no_grad():
            y = (x * 2.0).sum()
        assert y._backward is None and not y.requires_grad


# ---------------------------------------------------------------- grad_check


class _QuadParams:
    """Loss |W x|^2 over a single named weight."""

    def __init__(self, w):
        self.w = parameter(w)

    def named_parameters(self):
        return [("w", self.w)]


class TestGradCheck:
    def test_quadratic_under_1e7(self):
        rng = np.random.default_rng(30)
        x = rng.normal(size=2)
        params = _QuadParams(rng.normal(size=(2, 2)))

        def loss(p):
            y = as_tensor(x) @ p.w
            return (y * y).sum()

        assert grad_check(loss, params, eps=1e-5) < 1e-7

    def test_quadratic_forms_many_seeds(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=4)
            params = _QuadParams(rng.normal(size=(4, 4)))

            def loss(p):
                y = as_tensor(x) @ p.w
                return (y * y).sum()

            assert grad_check(loss, params, eps=1e-5) < 1e-7

    def test_constant_loss(self):
        params = _QuadParams(np.ones((2, 2)))

        def loss(p):
            return (p.w * 0.0).sum() + 1.0

        assert grad_check(loss, params, eps=1e-5) <= 1e-8

    def test_non_finite_loss_errors(self):
        params = _QuadParams(np.ones((2, 2)))

        def loss(p):
            return ag.log(p.w.sum() - 4.0)  # log(0) = -inf

        with np.errstate(divide="ignore"), pytest.raises(ValueError):
            grad_check(loss, params, eps=1e-5)

    def test_eps_validation(self):
        params = _QuadParams(np.ones((2, 2)))
        with pytest.raises(ValueError):
            grad_check(lambda p: p.w.sum(), params, eps=0.0)
