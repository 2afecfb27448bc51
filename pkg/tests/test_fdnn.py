"""Tests for the functional network: forward, gradients, training, serialization."""

import numpy as np
import pytest

from sfdnn.errors import (
    DimensionError,
    InvalidArchitectureError,
    NumericOverflowError,
    TrainingDivergedError,
)
from sfdnn.fdnn import (
    NetworkArchitecture,
    SpatialContext,
    TrainConfig,
    forward,
    gradients,
    init_parameters,
    load_parameters,
    loss,
    predict,
    save_parameters,
    train,
)
from sfdnn.spatial import SpatialWeightMatrix, build_inverse_distance_weights


def finite_difference_gradients(params, features, scalars, y, ctx=None, step=1e-5):
    """Central finite differences of the mean-squared loss, tensor by tensor."""
    out = []
    for name, tensor, _ in params.tensors():
        g = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            lp = loss(predict(params, features, scalars, ctx), y)
            tensor[idx] = orig - step
            lm = loss(predict(params, features, scalars, ctx), y)
            tensor[idx] = orig
            g[idx] = (lp - lm) / (2.0 * step)
        out.append((name, g))
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for (_, a), (_, f) in zip(analytic, numeric):
        denom = np.maximum(1e-6, np.maximum(np.abs(a), np.abs(f)))
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def toy_arch(activation="tanh"):
    return NetworkArchitecture(
        num_functional=2,
        basis_sizes=(4, 4),
        num_scalar=2,
        hidden_sizes=(5, 3),
        activations=(activation, activation),
    )


def toy_inputs(n, arch, seed):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, arch.feature_width))
    scalars = rng.normal(size=(n, arch.num_scalar))
    y = rng.normal(size=n)
    return features, scalars, y


class TestInit:
    def test_deterministic_per_seed(self):
        arch = toy_arch()
        a = init_parameters(arch, 123)
        b = init_parameters(arch, 123)
        for (_, ta, _), (_, tb, _) in zip(a.tensors(), b.tensors()):
            np.testing.assert_array_equal(ta, tb)

    def test_different_seeds_differ(self):
        arch = toy_arch()
        a = init_parameters(arch, 1)
        b = init_parameters(arch, 2)
        assert any(
            not np.array_equal(ta, tb) for (_, ta, _), (_, tb, _) in zip(a.tensors(), b.tensors())
        )

    def test_shape_contract(self):
        arch = NetworkArchitecture(1, (5,), 2, (4,), ("relu",))
        params = init_parameters(arch, 0)
        blocks = params.functional_coeff_blocks()
        assert np.array(blocks).shape == (1, 4, 5)
        assert params.scalar_weights.shape == (4, 2)
        assert params.hidden_weights[-1].shape == (1, 4)
        assert all(np.all(b == 0.0) for b in params.biases)

    def test_bounds_follow_fan_in_out(self):
        arch = NetworkArchitecture(1, (6,), 2, (4,), ("relu",))
        params = init_parameters(arch, 7)
        bound = np.sqrt(6.0 / (8 + 4))
        assert np.max(np.abs(params.func_weights)) <= bound
        assert np.max(np.abs(params.scalar_weights)) <= bound

    def test_invalid_architectures(self):
        with pytest.raises(InvalidArchitectureError):
            NetworkArchitecture(1, (4, 4), 0, (3,), ("relu",))
        with pytest.raises(InvalidArchitectureError):
            NetworkArchitecture(1, (4,), 0, (), ())
        with pytest.raises(InvalidArchitectureError):
            NetworkArchitecture(1, (4,), 0, (3,), ("softplus",))


class TestForward:
    def test_hand_computed_toy_network(self):
        arch = NetworkArchitecture(1, (2,), 1, (2,), ("relu",))
        params = init_parameters(arch, 0)
        params.func_weights[...] = [[1.0, -1.0], [0.5, 0.5]]
        params.scalar_weights[...] = [[2.0], [-1.0]]
        params.biases[0][...] = [0.1, -0.2]
        params.hidden_weights[0][...] = [[1.0, 3.0]]
        params.biases[1][...] = [0.25]

        features = np.array([[0.2, 0.4], [-0.3, 0.1], [0.0, 0.0], [1.0, -1.0]])
        scalars = np.array([[0.5], [-1.0], [2.0], [0.0]])
        # row by row:  a1 = f1 - f2 + 2 z + 0.1,  a2 = 0.5 f1 + 0.5 f2 - z - 0.2
        # out = relu(a1) + 3 relu(a2) + 0.25
        expected = np.array([1.15, 2.35, 4.35, 2.35])
        preds, _ = forward(params, features, scalars)
        np.testing.assert_allclose(preds, expected, atol=1e-12)

    def test_all_zero_parameters_predict_zero(self):
        arch = NetworkArchitecture(1, (3,), 1, (4,), ("identity",))
        params = init_parameters(arch, 0)
        for _, tensor, _ in params.tensors():
            tensor[...] = 0.0
        preds = predict(params, np.ones((5, 3)), np.ones((5, 1)))
        np.testing.assert_array_equal(preds, np.zeros(5))

    def test_zero_rho_context_matches_plain(self):
        arch = toy_arch()
        params = init_parameters(arch, 3)
        features, scalars, _ = toy_inputs(12, arch, 5)
        W = build_inverse_distance_weights(12)
        plain = predict(params, features, scalars)
        filtered = predict(params, features, scalars, SpatialContext(W, 0.0))
        np.testing.assert_array_equal(plain, filtered)

    def test_batch_invariance_without_context(self):
        arch = toy_arch("relu")
        params = init_parameters(arch, 9)
        features, scalars, _ = toy_inputs(8, arch, 11)
        full = predict(params, features, scalars)
        rowwise = np.array([
            predict(params, features[i : i + 1], scalars[i : i + 1])[0] for i in range(8)
        ])
        np.testing.assert_allclose(rowwise, full, atol=1e-12)

    def test_context_couples_rows(self):
        arch = toy_arch("tanh")
        params = init_parameters(arch, 13)
        features, scalars, _ = toy_inputs(10, arch, 17)
        W = build_inverse_distance_weights(10)
        ctx = SpatialContext(W, 0.6)
        base = predict(params, features, scalars, ctx)
        bumped = features.copy()
        bumped[0] += 1.0
        moved = predict(params, bumped, scalars, ctx)
        assert np.max(np.abs(moved[1:] - base[1:])) > 1e-8

    def test_shape_mismatch(self):
        arch = toy_arch()
        params = init_parameters(arch, 1)
        with pytest.raises(DimensionError):
            predict(params, np.ones((4, 3)), np.ones((4, 2)))

    def test_overflow_detected(self):
        arch = NetworkArchitecture(1, (2,), 0, (2,), ("identity",))
        params = init_parameters(arch, 0)
        params.func_weights[...] = 1e308
        params.hidden_weights[0][...] = 1e308
        with pytest.raises(NumericOverflowError):
            predict(params, np.full((3, 2), 10.0), np.zeros((3, 0)))


class TestLoss:
    def test_perfect_predictions(self):
        y = np.array([1.0, -2.0, 3.0])
        assert loss(y, y) == 0.0

    def test_unit_residuals(self):
        assert loss(np.array([1.0, 1.0]), np.array([0.0, 0.0])) == 1.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(23)
        yhat, y = rng.normal(size=7), rng.normal(size=7)
        direct = float(np.sum((y - yhat) ** 2) / 7)
        assert abs(loss(yhat, y) - direct) < 1e-14

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            loss(np.ones(3), np.ones(4))


class TestGradients:
    def test_matches_finite_differences_smooth(self):
        arch = toy_arch("tanh")
        params = init_parameters(arch, 29)
        features, scalars, y = toy_inputs(9, arch, 31)
        analytic = [(n, g) for n, g, _ in gradients(params, features, scalars, y).tensors()]
        numeric = finite_difference_gradients(params, features, scalars, y)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_matches_finite_differences_with_context(self):
        arch = toy_arch("sigmoid")
        params = init_parameters(arch, 37)
        features, scalars, y = toy_inputs(10, arch, 41)
        W = build_inverse_distance_weights(10)
        ctx = SpatialContext(W, 0.45)
        analytic = [(n, g) for n, g, _ in gradients(params, features, scalars, y, ctx).tensors()]
        numeric = finite_difference_gradients(params, features, scalars, y, ctx)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_matches_finite_differences_relu(self):
        arch = toy_arch("relu")
        params = init_parameters(arch, 43)
        features, scalars, y = toy_inputs(9, arch, 47)
        analytic = [(n, g) for n, g, _ in gradients(params, features, scalars, y).tensors()]
        numeric = finite_difference_gradients(params, features, scalars, y)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_zero_residual_zero_gradient(self):
        arch = toy_arch("tanh")
        params = init_parameters(arch, 53)
        features, scalars, _ = toy_inputs(6, arch, 59)
        y = predict(params, features, scalars)
        grads = gradients(params, features, scalars, y)
        for _, g, _ in grads.tensors():
            assert np.max(np.abs(g)) < 1e-12

    def test_zero_rho_context_gradients_match_plain(self):
        arch = toy_arch("relu")
        params = init_parameters(arch, 61)
        features, scalars, y = toy_inputs(8, arch, 67)
        W = build_inverse_distance_weights(8)
        plain = gradients(params, features, scalars, y)
        filtered = gradients(params, features, scalars, y, SpatialContext(W, 0.0))
        for (_, a, _), (_, b, _) in zip(plain.tensors(), filtered.tensors()):
            np.testing.assert_array_equal(a, b)


class TestTrain:
    def test_linear_target_reaches_ols_loss(self):
        rng = np.random.default_rng(71)
        arch = NetworkArchitecture(1, (4,), 2, (6,), ("identity",))
        features = rng.normal(size=(80, 4))
        scalars = rng.normal(size=(80, 2))
        coef = rng.normal(size=6)
        y = np.column_stack([features, scalars]) @ coef + 0.3 * rng.normal(size=80) + 0.7

        design = np.column_stack([features, scalars, np.ones(80)])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        ols_loss = float(np.mean((y - design @ beta) ** 2))

        config = TrainConfig(learning_rate=0.02, batch_size=16, max_epochs=500, seed=5)
        params, trace = train(arch, config, features, scalars, y)
        final = loss(predict(params, features, scalars), y)
        assert final <= ols_loss * 1.05

    def test_huge_threshold_stops_after_one_epoch(self):
        arch = toy_arch()
        features, scalars, y = toy_inputs(20, arch, 73)
        config = TrainConfig(max_epochs=50, early_stop_threshold=1e12, seed=0)
        _, trace = train(arch, config, features, scalars, y)
        assert len(trace.epoch_losses) == 1
        assert trace.stopped_early

    def test_deterministic_traces(self):
        arch = toy_arch()
        features, scalars, y = toy_inputs(24, arch, 79)
        config = TrainConfig(max_epochs=12, batch_size=8, seed=21)
        p1, t1 = train(arch, config, features, scalars, y)
        p2, t2 = train(arch, config, features, scalars, y)
        assert t1.epoch_losses == t2.epoch_losses
        for (_, a, _), (_, b, _) in zip(p1.tensors(), p2.tensors()):
            np.testing.assert_array_equal(a, b)

    def test_zero_rho_training_bit_identical_to_plain(self):
        arch = toy_arch("relu")
        features, scalars, y = toy_inputs(16, arch, 83)
        W = build_inverse_distance_weights(16)
        config = TrainConfig(max_epochs=8, batch_size=4, seed=3)
        p_plain, t_plain = train(arch, config, features, scalars, y)
        p_ctx, t_ctx = train(arch, config, features, scalars, y, SpatialContext(W, 0.0))
        assert t_plain.epoch_losses == t_ctx.epoch_losses
        for (_, a, _), (_, b, _) in zip(p_plain.tensors(), p_ctx.tensors()):
            np.testing.assert_array_equal(a, b)

    def test_small_learning_rate_near_monotone_loss(self):
        arch = toy_arch("tanh")
        features, scalars, y = toy_inputs(30, arch, 89)
        config = TrainConfig(learning_rate=1e-3, batch_size=30, max_epochs=60, seed=11)
        _, trace = train(arch, config, features, scalars, y)
        losses = trace.epoch_losses
        assert all(losses[i + 1] <= losses[i] * 1.01 for i in range(len(losses) - 1))

    def test_validation_restores_best_epoch(self):
        arch = toy_arch("tanh")
        features, scalars, y = toy_inputs(40, arch, 97)
        config = TrainConfig(max_epochs=25, batch_size=8, validation_fraction=0.25, seed=13)
        params, trace = train(arch, config, features, scalars, y)
        assert trace.best_epoch is not None
        assert len(trace.validation_losses) == len(trace.epoch_losses)
        assert min(trace.validation_losses) == trace.validation_losses[trace.best_epoch]

    def test_divergence_raises_with_trace(self):
        arch = NetworkArchitecture(1, (3,), 1, (4,), ("identity",))
        features, scalars, y = toy_inputs(12, NetworkArchitecture(1, (3,), 1, (4,), ("identity",)), 101)
        config = TrainConfig(learning_rate=1e150, max_epochs=20, batch_size=4, seed=1)
        with pytest.raises(TrainingDivergedError):
            train(arch, config, features, scalars, y)

    def test_training_with_spatial_context_improves_loss(self):
        rng = np.random.default_rng(103)
        arch = NetworkArchitecture(1, (4,), 1, (6,), ("tanh",))
        n = 40
        W = build_inverse_distance_weights(n)
        features = rng.normal(size=(n, 4))
        scalars = rng.normal(size=(n, 1))
        y = rng.normal(size=n)
        ctx = SpatialContext(W, 0.5)
        config = TrainConfig(learning_rate=0.01, batch_size=10, max_epochs=40, seed=7)
        _, trace = train(arch, config, features, scalars, y, ctx)
        assert trace.epoch_losses[-1] < trace.epoch_losses[0]


class TestPermutationEquivariance:
    def test_predictions_permute_with_rows_and_weights(self):
        arch = toy_arch("tanh")
        params = init_parameters(arch, 107)
        features, scalars, _ = toy_inputs(15, arch, 109)
        W = build_inverse_distance_weights(15)
        ctx = SpatialContext(W, 0.55)
        base = predict(params, features, scalars, ctx)

        rng = np.random.default_rng(113)
        perm = rng.permutation(15)
        w_perm = W.toarray()[np.ix_(perm, perm)]
        ctx_perm = SpatialContext(SpatialWeightMatrix(w_perm, row_normalized=True), 0.55)
        permuted = predict(params, features[perm], scalars[perm], ctx_perm)
        np.testing.assert_allclose(permuted, base[perm], atol=1e-10)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        arch = toy_arch("sigmoid")
        params = init_parameters(arch, 127)
        path = tmp_path / "net.txt"
        save_parameters(params, path)
        back = load_parameters(path)
        assert back.arch == arch
        for (_, a, _), (_, b, _) in zip(params.tensors(), back.tensors()):
            np.testing.assert_array_equal(a, b)

    def test_round_trip_preserves_predictions(self, tmp_path):
        arch = NetworkArchitecture(2, (3, 5), 1, (4, 2), ("relu", "tanh"))
        params = init_parameters(arch, 131)
        features = np.random.default_rng(137).normal(size=(6, 8))
        scalars = np.random.default_rng(139).normal(size=(6, 1))
        path = tmp_path / "net.txt"
        save_parameters(params, path)
        back = load_parameters(path)
        np.testing.assert_array_equal(
            predict(params, features, scalars), predict(back, features, scalars)
        )
