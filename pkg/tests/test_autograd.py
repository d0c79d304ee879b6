"""Tensor core: op semantics, gradient rules, and the checker itself."""

import math

import numpy as np
import pytest

from hdrr import ops
from hdrr.autograd import GradTape, Tensor, backward
from hdrr.errors import ConfigError, DimensionError, UsageError
from hdrr.gradcheck import finite_diff_check


class TestMatmul:
    def test_identity(self):
        out = ops.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_hand_product(self):
        out = ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        # 1*3 + 2*4
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_zero_case(self):
        out = ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 5))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 5)))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 5\)"):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 5))))


class TestElementwise:
    def test_relu_negative_clamp(self):
        assert ops.relu(Tensor([-1.5])).data[0] == 0.0

    def test_sigmoid_symmetry_point(self):
        assert ops.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_softmax_uniform(self):
        out = ops.softmax_last_dim(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=0, atol=1e-15)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.normal(0, 5, (4, 7))
            rows = ops.softmax_last_dim(Tensor(x)).data.sum(axis=-1)
            np.testing.assert_allclose(rows, 1.0, rtol=0, atol=1e-12)

    def test_sigmoid_open_interval(self):
        rng = np.random.default_rng(4)
        y = ops.sigmoid(Tensor(rng.uniform(-30, 30, 1000))).data
        assert np.all((y > 0) & (y < 1))

    def test_relu_nonnegative(self):
        rng = np.random.default_rng(5)
        assert np.all(ops.relu(Tensor(rng.normal(size=500))).data >= 0)

    def test_softmax_empty_dim_rejected(self):
        with pytest.raises(DimensionError):
            ops.softmax_last_dim(Tensor(np.zeros((2, 0))))


class TestConv1d:
    def test_sum_filter_oracle(self):
        # window covers the whole input: the output is its plain sum
        out = ops.conv1d(
            Tensor(np.arange(1.0, 6.0)[:, None]),
            Tensor(np.ones((5, 1, 1))),
            Tensor(np.zeros(1)),
        )
        np.testing.assert_array_equal(out.data, [[15.0]])

    def test_zero_kernel_gives_bias(self):
        out = ops.conv1d(
            Tensor(np.random.default_rng(0).normal(size=(6, 3))),
            Tensor(np.zeros((2, 3, 4))),
            Tensor([1.0, -2.0, 0.5, 3.0]),
        )
        np.testing.assert_array_equal(out.data, np.tile([1.0, -2.0, 0.5, 3.0], (5, 1)))

    def test_output_length(self):
        out = ops.conv1d(
            Tensor(np.zeros((10, 2))), Tensor(np.zeros((4, 2, 1))), Tensor(np.zeros(1))
        )
        assert out.shape == (7, 1)

    def test_oversized_filter_error_says_drop(self):
        with pytest.raises(ConfigError, match="drop this filter size"):
            ops.conv1d(
                Tensor(np.zeros((3, 2))), Tensor(np.zeros((4, 2, 1))), Tensor(np.zeros(1))
            )

    def test_windowed_dot_product_oracle(self):
        rng = np.random.default_rng(12)
        inp = rng.normal(size=(9, 3))
        kern = rng.normal(size=(4, 3, 2))
        bias = rng.normal(size=2)
        out = ops.conv1d(Tensor(inp), Tensor(kern), Tensor(bias)).data
        for p in range(6):
            for o in range(2):
                expected = bias[o] + float((inp[p : p + 4] * kern[:, :, o]).sum())
                assert out[p, o] == pytest.approx(expected, rel=1e-12)


class TestGruCell:
    def _zero_params(self, d_in, d_h):
        return (
            Tensor(np.zeros((d_in, 3 * d_h))),
            Tensor(np.zeros((d_h, 3 * d_h))),
            Tensor(np.zeros(3 * d_h)),
        )

    def test_zero_everything(self):
        w, u, b = self._zero_params(3, 4)
        out = ops.gru_cell(Tensor(np.zeros(3)), Tensor(np.zeros(4)), w, u, b)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_zero_weights_halve_state(self):
        # z = sigmoid(0) = 0.5 and the candidate is tanh(0) = 0
        w, u, b = self._zero_params(3, 4)
        h0 = np.array([1.0, -2.0, 0.5, 4.0])
        out = ops.gru_cell(Tensor(np.zeros(3)), Tensor(h0), w, u, b)
        np.testing.assert_allclose(out.data, 0.5 * h0, rtol=0, atol=0)

    def test_convex_blend_bound(self):
        # |h'| <= max(|h_prev|, 1) since h' blends h_prev with a tanh value
        rng = np.random.default_rng(21)
        for _ in range(100):
            d_in, d_h = rng.integers(1, 5), rng.integers(1, 5)
            out = ops.gru_cell(
                Tensor(rng.normal(0, 3, d_in)),
                (h_prev := Tensor(rng.normal(0, 3, d_h))),
                Tensor(rng.normal(0, 3, (d_in, 3 * d_h))),
                Tensor(rng.normal(0, 3, (d_h, 3 * d_h))),
                Tensor(rng.normal(0, 3, 3 * d_h)),
            )
            bound = np.maximum(np.abs(h_prev.data), 1.0)
            assert np.all(np.abs(out.data) <= bound)


class TestSmoothL1:
    @pytest.mark.parametrize(
        "x,expected", [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5), (-0.5, 0.125)]
    )
    def test_values(self, x, expected):
        assert ops.smooth_l1(Tensor([x])).data[0] == pytest.approx(expected, abs=0)


class TestBackward:
    def test_quadratic_gradient(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with GradTape():
            backward(ops.tsum(ops.mul(w, w)))
        np.testing.assert_allclose(w.grad, [2.0, 4.0], rtol=0, atol=0)

    def test_unreachable_leaf_has_zero_gradient(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        v = Tensor([3.0], requires_grad=True)
        with GradTape():
            backward(ops.tsum(ops.mul(v, v)))
        assert w.grad is None or not w.grad.any()

    def test_composite_graph_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        c = Tensor(rng.normal(size=2), requires_grad=True)

        def f():
            h = ops.tanh(ops.matmul(a, b))
            return ops.tmean(ops.mul(ops.sigmoid(ops.add(h, c)), h))

        report = finite_diff_check(f, {"a": a, "b": b, "c": c}, step=1e-5, tol=1e-4)
        assert report.ok, [c.name for c in report.checks if not c.ok]

    def test_non_scalar_loss_rejected(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with GradTape():
            out = ops.mul(w, w)
            with pytest.raises(UsageError, match="scalar"):
                backward(out)

    def test_backward_without_tape_rejected(self):
        with pytest.raises(UsageError, match="GradTape"):
            backward(Tensor([1.0]))

    def test_tape_cleared_after_backward(self):
        w = Tensor([1.0], requires_grad=True)
        with GradTape() as tape:
            backward(ops.tsum(ops.mul(w, w)))
            assert len(tape) == 0

    def test_gradients_accumulate_across_passes(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        for _ in range(2):
            with GradTape():
                backward(ops.tsum(ops.mul(w, w)))
        np.testing.assert_allclose(w.grad, [4.0, 8.0], rtol=0, atol=0)


class TestFiniteDiffCheck:
    def test_square_at_three(self):
        w = Tensor([3.0], requires_grad=True)
        report = finite_diff_check(lambda: ops.tsum(ops.mul(w, w)), {"w": w}, step=1e-5)
        assert report.ok
        assert report.checks[0].max_rel_err < 1e-6
        assert w.grad[0] == pytest.approx(6.0)

    def test_constant_function_passes(self):
        w = Tensor([1.0], requires_grad=True)
        report = finite_diff_check(lambda: Tensor(np.asarray(2.0)), {"w": w}, step=1e-5)
        assert report.ok

    def test_zero_gradient_uses_absolute_fallback(self):
        # relu kills the branch entirely; both gradients sit below 1e-12
        w = Tensor([-5.0], requires_grad=True)
        report = finite_diff_check(lambda: ops.tsum(ops.relu(w)), {"w": w}, step=1e-5)
        assert report.ok
        assert report.checks[0].max_abs_diff <= 1e-7

    def test_nonfinite_function_reported(self):
        w = Tensor([0.5], requires_grad=True)
        report = finite_diff_check(
            lambda: ops.tsum(ops.mul(w, Tensor([math.inf]))), {"w": w}, step=1e-5
        )
        assert not report.ok
        assert "non-finite" in report.failure

    def test_bad_step_rejected(self):
        with pytest.raises(UsageError):
            finite_diff_check(lambda: Tensor(1.0), {}, step=0.0)


class TestDeterminism:
    def test_same_inputs_give_identical_outputs_and_grads(self):
        def run():
            rng = np.random.default_rng(77)
            x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
            w = Tensor(rng.normal(size=(3, 9)), requires_grad=True)
            u = Tensor(rng.normal(size=(3, 9)), requires_grad=True)
            b = Tensor(rng.normal(size=9), requires_grad=True)
            with GradTape():
                out = ops.gru_sequence(x, w, u, b)
                backward(ops.tsum(ops.mul(out, out)))
            return out.data.copy(), x.grad.copy(), w.grad.copy()

        first, second = run(), run()
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
