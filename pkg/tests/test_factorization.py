import math

import numpy as np
import pytest

from mixspec.dataset import MixedDataMatrix
from mixspec.errors import ConstantColumn, DimensionMismatch, InvalidLatentDim, NonFiniteLoss
from mixspec.factorization import (FactorizeConfig, FactorModel, dense_maps, factorize,
                                   factorize_arrays, initial_factors, load_factor_model,
                                   objective, objective_arrays, save_factor_model,
                                   surrogate_gradient, surrogate_loss)

from conftest import random_mixed


def _frob_loop(a):
    total = 0.0
    for row in a:
        for v in row:
            total += v * v
    return math.sqrt(total)


def _rank_k(n, p1, p2, k, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 1, (n, k))
    H1 = rng.uniform(0, 1, (k, p1))
    H2 = rng.uniform(0, 1, (k, p2))
    return W @ H1, W @ H2


class TestObjective:
    def test_zero_case(self):
        z = np.zeros
        assert objective_arrays(z((3, 1)), z((1, 2)), z((1, 2)), z((3, 2)), z((3, 2))) == 0.0

    def test_exact_factors(self):
        rng = np.random.default_rng(0)
        W, H1, H2 = rng.random((6, 2)), rng.random((2, 3)), rng.random((2, 2))
        assert objective_arrays(W, H1, H2, W @ H1, W @ H2) == pytest.approx(0.0, abs=1e-14)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(1)
        num, cat = rng.normal(size=(5, 2)), rng.integers(0, 2, (5, 1)).astype(float)
        W, H1, H2 = rng.random((5, 2)), rng.random((2, 2)), rng.random((2, 1))
        expected = _frob_loop(num - W @ H1) + _frob_loop(cat - W @ H2)
        assert objective_arrays(W, H1, H2, num, cat) == pytest.approx(expected, rel=1e-13)

    def test_data_objective_uses_01_block(self, mixed):
        rng = np.random.default_rng(2)
        model = FactorModel(rng.random((mixed.n, 2)), rng.random((2, mixed.p1)), rng.random((2, mixed.p2)))
        expected = _frob_loop(mixed.num_block - model.W @ model.H1) + \
            _frob_loop((mixed.cat_block + 1) / 2 - model.W @ model.H2)
        assert objective(model, mixed, shift_numerical=False) == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            objective_arrays(np.ones((3, 1)), np.ones((1, 2)), np.ones((1, 2)), np.ones((4, 2)), np.ones((3, 2)))


class TestSurrogate:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        num, cat = rng.normal(size=(6, 3)), rng.random((6, 2))
        W, H1, H2 = rng.uniform(0.2, 1, (6, 2)), rng.uniform(0.2, 1, (2, 3)), rng.uniform(0.2, 1, (2, 2))
        grads = surrogate_gradient(W, H1, H2, num, cat)
        h = 1e-6
        for which, g in enumerate(grads):
            mats = [W, H1, H2]
            fd = np.zeros_like(g)
            for idx in np.ndindex(g.shape):
                plus = [m.copy() for m in mats]
                minus = [m.copy() for m in mats]
                plus[which][idx] += h
                minus[which][idx] -= h
                fd[idx] = (surrogate_loss(*plus, num, cat) - surrogate_loss(*minus, num, cat)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


class TestFactorize:
    def test_rank_one_recovery(self):
        num, cat = _rank_k(10, 2, 2, 1, seed=0)
        model, trace = factorize_arrays(num, cat, FactorizeConfig(k=1, epochs=500), return_trace=True)
        assert objective_arrays(model.W, model.H1, model.H2, num, cat) < 1e-2
        assert trace.objective[-1] <= trace.objective[0]

    def test_zero_data(self):
        # the all-zero model is feasible and optimal; SGD shrinks toward it
        z = np.zeros((8, 2))
        assert objective_arrays(np.zeros((8, 1)), np.zeros((1, 2)), np.zeros((1, 2)), z, z) == 0.0
        model, trace = factorize_arrays(z, z, FactorizeConfig(k=1, epochs=3000), return_trace=True)
        assert trace.objective[-1] < 0.1 * trace.objective[0]
        assert np.all(np.diff(trace.objective) <= 1e-15)

    def test_nonnegative_after_every_step(self):
        num, cat = _rank_k(12, 3, 2, 2, seed=1)
        seen = []

        def check(W, H1, H2):
            seen.append(min(W.min(), H1.min(), H2.min()))

        factorize_arrays(num - 0.5, cat, FactorizeConfig(k=2, epochs=5), step_callback=check)
        assert len(seen) == 12 * 5
        assert min(seen) >= 0.0

    def test_never_worse_than_start(self):
        for seed in range(5):
            data = random_mixed(seed=seed)
            model, trace = factorize(data, FactorizeConfig(seed=seed, epochs=20), return_trace=True)
            assert objective(model, data) <= trace.objective[0] + 1e-12

    def test_deterministic(self, mixed):
        a = factorize(mixed, FactorizeConfig(seed=7, epochs=10))
        b = factorize(mixed, FactorizeConfig(seed=7, epochs=10))
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.H2, b.H2)

    def test_invalid_latent_dim(self, mixed):
        with pytest.raises(InvalidLatentDim):
            factorize(mixed, FactorizeConfig(k=mixed.p))
        with pytest.raises(InvalidLatentDim):
            factorize(mixed, FactorizeConfig(k=0))

    def test_default_k(self, mixed):
        W, _, _ = initial_factors(mixed.n, mixed.p1, mixed.p2, FactorizeConfig())
        assert W.shape[1] == math.ceil(mixed.p / 2)

    def test_init_strictly_positive(self):
        W, H1, H2 = initial_factors(50, 3, 4, FactorizeConfig(k=3, init_scale=0.1))
        for m in (W, H1, H2):
            assert m.min() > 0 and m.max() <= 0.1

    def test_divergence_reported(self, mixed):
        with pytest.raises(NonFiniteLoss):
            factorize(mixed, FactorizeConfig(learning_rate=50.0, epochs=50, init_scale=5.0))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            FactorizeConfig(learning_rate=0)
        with pytest.raises(ValueError):
            FactorizeConfig(epochs=0)


class TestDenseMaps:
    def test_two_point_map(self):
        model = FactorModel(np.array([[1.0], [2.0]]), np.array([[1.0]]), np.array([[3.0]]))
        maps = dense_maps(model, beta=0.5)
        np.testing.assert_allclose(maps.xhat_num.ravel(), [-0.5, 0.5])
        np.testing.assert_allclose(maps.xhat_cat.ravel(), [-0.5, 0.5])

    def test_zero_row_maps_to_minimum(self):
        W = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]])
        H1, H2 = np.array([[1.0], [1.0]]), np.array([[2.0, 1.0], [0.5, 1.0]])
        maps = dense_maps(FactorModel(W, H1, H2), beta=1.0)
        np.testing.assert_allclose(maps.values[0], -1.0)
        recon = W @ np.hstack([H1, H2])
        expected = 2 * (recon - recon.min(0)) / (recon.max(0) - recon.min(0)) - 1
        np.testing.assert_allclose(maps.values, expected, atol=1e-15)

    def test_range(self, mixed):
        maps = dense_maps(factorize(mixed, FactorizeConfig(epochs=5)), beta=1.0)
        assert np.abs(maps.values).max() <= 1.0

    def test_constant_reconstruction(self):
        model = FactorModel(np.ones((3, 1)), np.ones((1, 1)), np.ones((1, 1)))
        with pytest.raises(ConstantColumn):
            dense_maps(model)


class TestPersistence:
    def test_roundtrip(self, tmp_path, mixed):
        model = factorize(mixed, FactorizeConfig(epochs=3))
        save_factor_model(tmp_path / "f.txt", model)
        back = load_factor_model(tmp_path / "f.txt")
        np.testing.assert_array_equal(back.W, model.W)
        np.testing.assert_array_equal(back.H1, model.H1)
        np.testing.assert_array_equal(back.H2, model.H2)

    def test_model_rejects_negative(self):
        with pytest.raises(ValueError):
            FactorModel(-np.ones((2, 1)), np.ones((1, 1)), np.ones((1, 1)))
