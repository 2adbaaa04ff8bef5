import numpy as np
import pytest

from hetero_sdm import autodiff_nn as ad
from hetero_sdm.errors import (
    EmptyInputError,
    IndexOutOfBoundsError,
    NonFiniteLossError,
    ShapeMismatchError,
)


class TestMlpInit:
    def test_deterministic_given_seed(self):
        spec = ad.MlpSpec(4, 16, 2, 3, "relu")
        a = ad.mlp_init(spec, seed=5)
        b = ad.mlp_init(spec, seed=5)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_shapes_and_zero_biases(self):
        spec = ad.MlpSpec(4, 16, 2, 3, "relu")
        params = ad.mlp_init(spec, seed=0)
        shapes = [w.shape for w in params.weights]
        assert shapes == [(4, 16), (16, 16), (16, 3)]
        for b in params.biases:
            assert np.all(b == 0.0)

    def test_two_seeds_differ(self):
        spec = ad.MlpSpec(4, 16, 1, 3, "relu")
        a = ad.mlp_init(spec, seed=0)
        b = ad.mlp_init(spec, seed=1)
        assert any(
            not np.array_equal(wa, wb) for wa, wb in zip(a.weights, b.weights)
        )

    def test_variance_scaling_limit(self):
        spec = ad.MlpSpec(10, 30, 1, 30, "relu")
        params = ad.mlp_init(spec, seed=2)
        limit = np.sqrt(6.0 / (10 + 30))
        assert np.abs(params.weights[0]).max() <= limit

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ad.MlpSpec(0, 4, 1, 2, "relu")
        with pytest.raises(ValueError):
            ad.MlpSpec(3, 4, 1, 2, "tanh")


class TestMlpForward:
    def test_zero_params_give_zero_output(self):
        params = ad.MlpParams(
            weights=(np.zeros((3, 4)), np.zeros((4, 2))),
            biases=(np.zeros(4), np.zeros(2)),
            activation="relu",
        )
        out = ad.mlp_forward(params, np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_array_equal(out, np.zeros((5, 2)))

    def test_identity_single_layer_relu(self):
        # One hidden layer with identity weights, then identity output layer:
        # the hidden relu clips negatives.
        params = ad.MlpParams(
            weights=(np.eye(2), np.eye(2)),
            biases=(np.zeros(2), np.zeros(2)),
            activation="relu",
        )
        out = ad.mlp_forward(params, np.array([[-1.0, 2.0]]))
        np.testing.assert_array_equal(out, np.array([[0.0, 2.0]]))

    def test_rows_are_independent(self):
        spec = ad.MlpSpec(3, 8, 2, 4, "silu")
        params = ad.mlp_init(spec, seed=3)
        row = np.random.default_rng(1).normal(size=(1, 3))
        out = ad.mlp_forward(params, np.vstack([row, row]))
        np.testing.assert_array_equal(out[0], out[1])

    def test_width_mismatch(self):
        params = ad.mlp_init(ad.MlpSpec(3, 4, 1, 2, "relu"), seed=0)
        with pytest.raises(ShapeMismatchError):
            ad.mlp_forward(params, np.zeros((2, 5)))


class TestActivations:
    def test_monotone_on_nonnegative_axis(self):
        x = np.linspace(0.0, 50.0, 2001)
        for name, (fn, _) in ad.ACTIVATIONS.items():
            y = fn(x)
            assert np.all(np.diff(y) >= 0), name

    def test_finite_on_wide_range(self):
        x = np.linspace(-100.0, 100.0, 4001)
        for name, (fn, dfn) in ad.ACTIVATIONS.items():
            assert np.all(np.isfinite(fn(x))), name
            assert np.all(np.isfinite(dfn(x))), name

    def test_derivatives_match_finite_differences(self):
        # Sample away from the piecewise joints so the central difference
        # does not straddle a kink.
        rng = np.random.default_rng(4)
        x = rng.uniform(-8.0, 8.0, size=500)
        joints = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
        x = x[np.min(np.abs(x[:, None] - joints[None, :]), axis=1) > 1e-3]
        h = 1e-6
        for name, (fn, dfn) in ad.ACTIVATIONS.items():
            numeric = (fn(x + h) - fn(x - h)) / (2 * h)
            np.testing.assert_allclose(dfn(x), numeric, atol=1e-7, err_msg=name)


class TestSegmentReduce:
    def test_sum_definition(self):
        out = ad.segment_reduce([[1.0], [2.0], [3.0]], [0, 0, 1], 2, "sum")
        np.testing.assert_array_equal(out, [[3.0], [3.0]])

    def test_mean_definition(self):
        out = ad.segment_reduce([[1.0], [2.0], [3.0]], [0, 0, 1], 2, "mean")
        np.testing.assert_array_equal(out, [[1.5], [3.0]])

    def test_empty_segments_are_zero_in_both_modes(self):
        for mode in ("sum", "mean"):
            out = ad.segment_reduce([[5.0]], [1], 3, mode)
            np.testing.assert_array_equal(out[[0, 2]], np.zeros((2, 1)))

    def test_out_of_bounds_segment_id(self):
        with pytest.raises(IndexOutOfBoundsError):
            ad.segment_reduce([[1.0]], [3], 2, "sum")

    def test_sum_is_linear(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(10, 3))
        b = rng.normal(size=(10, 3))
        ids = rng.integers(0, 4, size=10)
        lhs = ad.segment_reduce(2.0 * a + b, ids, 4, "sum")
        rhs = 2.0 * ad.segment_reduce(a, ids, 4, "sum") + ad.segment_reduce(b, ids, 4, "sum")
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_mean_of_constant_rows(self):
        values = np.tile([[2.5, -1.0]], (6, 1))
        out = ad.segment_reduce(values, [0, 0, 0, 1, 1, 2], 3, "mean")
        np.testing.assert_allclose(out, np.tile([[2.5, -1.0]], (3, 1)))


class TestGrad:
    def test_linear_loss_gradient(self):
        # loss = sum(x @ W): dW = x^T @ ones
        x = np.array([[1.0, 2.0], [3.0, 4.0]])

        def loss_fn(p):
            return ad.t_sum(ad.t_matmul(ad.t_const(x), p["w"]))

        grads = ad.grad(loss_fn, {"w": np.zeros((2, 3))})
        np.testing.assert_allclose(grads["w"], x.T @ np.ones((2, 3)))

    def test_constant_closure_gives_zero_gradients(self):
        def loss_fn(p):
            return ad.t_sum(ad.t_const(np.ones((2, 2))))

        grads = ad.grad(loss_fn, {"w": np.ones((3, 3))})
        np.testing.assert_array_equal(grads["w"], np.zeros((3, 3)))

    def test_non_finite_loss_raises(self):
        def loss_fn(p):
            return ad.t_sum(ad.t_matmul(p["w"], p["w"]))

        with np.errstate(over="ignore"), pytest.raises(NonFiniteLossError):
            ad.loss_and_grad(loss_fn, {"w": np.full((2, 2), 1e200)})

    def test_composed_ops_match_finite_differences(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(7, 3))
        ids = np.array([0, 1, 1, 2, 0, 3, 2])
        take = np.array([0, 2, 3, 1])
        labels = np.array([1.0, 0.0, 0.0, 1.0])
        mix = np.random.default_rng(9).normal(size=(8, 4))
        spec = ad.MlpSpec(3, 5, 2, 4, "softplus")
        params = {"mlp": ad.mlp_init(spec, seed=8), "extra": rng.normal(size=(4, 4))}

        def loss_fn(p):
            h = ad.mlp_apply(p["mlp"], ad.Tensor(x))
            agg = ad.t_segment_reduce(h, ids, 4, "mean")
            rows = ad.t_take_rows(agg, take)
            wide = ad.t_concat([rows, p["extra"]], axis=1)
            both = ad.t_matmul(wide, ad.t_const(mix))
            scores = ad.t_rowwise_dot(both, ad.t_add(both, ad.t_const(np.ones((4, 4)))))
            return ad.t_bce_mean(scores, labels)

        analytic = ad.grad(loss_fn, params)
        numeric = ad.finite_difference_grads(loss_fn, params)
        result = ad.compare_gradients(analytic, numeric)
        assert result.ok, (result.max_rel_error, result.max_abs_error_near_zero)


class TestOptimizer:
    def test_zero_gradient_fixed_point(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.zeros(2)}
        state = ad.OptimizerState.init(params)
        new_params, new_state = ad.optimizer_step(params, grads, state, lr=0.1)
        np.testing.assert_array_equal(new_params["w"], params["w"])
        assert new_state.step == 1

    def test_first_step_moves_by_learning_rate(self):
        # m_hat = g, v_hat = g^2 after bias correction, so the first step
        # is lr * g / (|g| + eps) ~= lr * sign(g).
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        state = ad.OptimizerState.init(params)
        new_params, _ = ad.optimizer_step(params, grads, state, lr=0.001)
        np.testing.assert_allclose(new_params["w"], [-0.001], rtol=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        params = {"w": rng.normal(size=(3, 3))}
        grads = {"w": rng.normal(size=(3, 3))}
        state = ad.OptimizerState.init(params)
        a, sa = ad.optimizer_step(params, grads, state, lr=0.01)
        b, sb = ad.optimizer_step(params, grads, state, lr=0.01)
        np.testing.assert_array_equal(a["w"], b["w"])
        np.testing.assert_array_equal(sa.first_moment["w"], sb.first_moment["w"])

    def test_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        grads = {"w": np.zeros(3)}
        state = ad.OptimizerState.init(params)
        with pytest.raises(ShapeMismatchError):
            ad.optimizer_step(params, grads, state, lr=0.1)

    def test_hand_computed_second_step(self):
        params = {"w": np.array([0.0])}
        state = ad.OptimizerState.init(params)
        g1, g2 = np.array([1.0]), np.array([0.5])
        p1, state = ad.optimizer_step(params, {"w": g1}, state, lr=0.001)
        p2, state = ad.optimizer_step(p1, {"w": g2}, state, lr=0.001)
        m = 0.9 * (0.1 * 1.0) + 0.1 * 0.5
        v = 0.999 * (0.001 * 1.0**2) + 0.001 * 0.5**2
        m_hat = m / (1 - 0.9**2)
        v_hat = v / (1 - 0.999**2)
        expected = p1["w"] - 0.001 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(p2["w"], expected, rtol=1e-12)


class TestBce:
    def test_elements_match_naive_formula(self):
        # Moderate scores only: the naive form itself loses precision in
        # log(1-p) once p saturates.
        rng = np.random.default_rng(11)
        s = rng.uniform(-10, 10, size=50)
        y = rng.integers(0, 2, size=50).astype(float)
        p = 1.0 / (1.0 + np.exp(-s))
        naive = -(y * np.log(p) + (1 - y) * np.log(1 - p))
        np.testing.assert_allclose(ad.bce_logits_elements(s, y), naive, rtol=1e-9)

    def test_empty_error(self):
        with pytest.raises(EmptyInputError):
            ad.t_bce_mean(ad.t_const(np.zeros(0)), np.zeros(0))
