import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from danet.errors import EncodingError, ShapeError
from danet.ridge import (RidgeModel, classify, encode_one_hot, krr_fit,
                         krr_predict, ridge_fit, ridge_predict)


class TestOneHot:
    def test_definition(self):
        Y = encode_one_hot([0, 2, 1], 3)
        assert np.array_equal(Y.matrix, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])

    def test_single_class(self):
        assert np.array_equal(encode_one_hot([0], 1).matrix, [[1.0]])

    def test_column_sums_count_labels(self):
        Y = encode_one_hot([1, 1, 1, 0], 2)
        # direct tally oracle
        assert np.array_equal(Y.matrix.sum(axis=0), [1.0, 3.0])

    def test_out_of_range_label_names_row(self):
        with pytest.raises(EncodingError, match="row 2"):
            encode_one_hot([0, 1, 5], 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
    def test_invariants(self, labels):
        Y = encode_one_hot(labels, 7)
        assert ((Y.matrix == 0) | (Y.matrix == 1)).all()
        assert (Y.matrix.sum(axis=1) == 1).all()
        assert np.array_equal(np.argmax(Y.matrix, axis=1), labels)


def primal_oracle(X, Y, lam):
    d = X.shape[1]
    return np.linalg.inv(X.T @ X + lam * np.eye(d)) @ X.T @ Y


def dual_oracle(X, Y, lam):
    n = X.shape[0]
    return X.T @ np.linalg.inv(X @ X.T + lam * np.eye(n)) @ Y


class TestRidge:
    def test_identity_design(self):
        Y = encode_one_hot([0, 1, 2], 3)
        model = ridge_fit(np.eye(3), Y, 1.0)
        assert model.mode == "primal"
        assert np.allclose(model.weights, 0.5 * np.eye(3), atol=1e-12)

    def test_huge_lambda_shrinks_to_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 4))
        Y = encode_one_hot(rng.integers(0, 3, 20), 3)
        W = ridge_fit(X, Y, 1e12).weights
        assert np.linalg.norm(W) <= 1e-9 * np.linalg.norm(X.T @ Y.matrix)

    def test_dual_matches_primal_oracle(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(3, 5))
        Y = encode_one_hot(rng.integers(0, 2, 3), 2)
        model = ridge_fit(X, Y, 0.1)
        assert model.mode == "dual"
        ref = primal_oracle(X, Y.matrix, 0.1)
        assert np.abs(model.weights - ref).max() < 1e-8

    def test_mode_switch_at_equality(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(4, 4))
        assert ridge_fit(X, encode_one_hot([0, 1, 0, 1], 2), 0.5).mode == "primal"

    def test_primal_dual_equivalence_sweep(self):
        for seed, (n, d) in enumerate([(8, 3), (3, 8), (6, 6)]):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(n, d))
            Y = rng.normal(size=(n, 2))
            for lam in (1e-3, 1.0):
                p = primal_oracle(X, Y, lam)
                q = dual_oracle(X, Y, lam)
                assert np.abs(p - q).max() < 1e-8
                got = ridge_fit(X, Y, lam).weights
                assert np.abs(got - p).max() < 1e-8

    def test_minimizer_property(self):
        # perturbing W never decreases the penalized objective
        rng = np.random.default_rng(42)
        X = rng.normal(size=(12, 4))
        Y = encode_one_hot(rng.integers(0, 3, 12), 3)
        lam = 0.3
        W = ridge_fit(X, Y, lam).weights

        def objective(M):
            R = Y.matrix - X @ M
            return np.trace(R.T @ R) + lam * np.sum(M * M)

        base = objective(W)
        for _ in range(20):
            D = rng.normal(size=W.shape)
            assert objective(W + 1e-3 * D) >= base - 1e-10

    def test_row_mismatch(self):
        with pytest.raises(ShapeError, match="rows"):
            ridge_fit(np.ones((3, 2)), encode_one_hot([0, 1], 2), 1.0)


class TestRidgePredict:
    def test_identity_weights(self):
        model = ridge_fit(np.eye(2), encode_one_hot([0, 1], 2), 1e-12)
        r = ridge_predict(model, np.array([0.2, 0.8]))
        assert np.allclose(r, [0.2, 0.8], atol=1e-10)

    def test_zero_vector(self):
        rng = np.random.default_rng(3)
        model = ridge_fit(rng.normal(size=(5, 3)),
                          encode_one_hot([0, 1, 0, 1, 0], 2), 0.1)
        assert np.array_equal(ridge_predict(model, np.zeros(3)), [0.0, 0.0])

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(9)
        W = rng.normal(size=(4, 3))
        model = RidgeModel(weights=W, lam=1.0, mode="primal")
        x = rng.normal(size=4)
        expected = [sum(W[i, j] * x[i] for i in range(4)) for j in range(3)]
        assert np.allclose(ridge_predict(model, x), expected, atol=1e-12)

    def test_dimension_mismatch(self):
        model = ridge_fit(np.eye(3), encode_one_hot([0, 1, 2], 3), 1.0)
        with pytest.raises(ShapeError, match="dimension"):
            ridge_predict(model, np.ones(4))


class TestClassify:
    def test_argmax(self):
        assert classify(np.array([0.1, 0.9, 0.3])) == 1

    def test_tie_breaks_low(self):
        assert classify(np.array([0.5, 0.5])) == 0

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(13)
        R = rng.normal(size=(100, 6))
        got = classify(R)
        for i, row in enumerate(R):
            best, best_v = 0, row[0]
            for j, v in enumerate(row):
                if v > best_v:
                    best, best_v = j, v
            assert got[i] == best

    def test_nan_rejected(self):
        with pytest.raises(ShapeError, match="NaN"):
            classify(np.array([0.1, np.nan]))

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            classify(np.array([]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=10),
           st.floats(-50, 50), st.floats(0.01, 100))
    def test_shift_and_scale_invariance(self, resp, shift, scale):
        r = np.asarray(resp)
        base = classify(r)
        assert classify(r + shift) == base
        assert classify(r * scale) == base


class TestKrr:
    def test_single_sample_scalar_solve(self):
        Y = encode_one_hot([0], 2)
        model = krr_fit(np.array([[1.0, 2.0]]), Y, 1.0, 0.5)
        assert np.allclose(model.dual_coeffs, Y.matrix / 2.0, atol=1e-12)

    def test_huge_gamma_identity_kernel(self):
        X = np.array([[0.0], [10.0], [20.0]])
        Y = encode_one_hot([0, 1, 0], 2)
        model = krr_fit(X, Y, 0.5, 1e6)
        assert np.abs(model.dual_coeffs - Y.matrix / 1.5).max() < 1e-12

    def krr_oracle(self, X, Ymat, lam, gamma, queries):
        def k(a, b):
            return np.exp(-gamma * np.sum((a - b) ** 2))
        n = X.shape[0]
        K = np.array([[k(X[i], X[j]) for j in range(n)] for i in range(n)])
        alpha = np.linalg.inv(K + lam * np.eye(n)) @ Ymat
        return np.array([[float(np.array([k(q, X[i]) for i in range(n)]) @ alpha[:, c])
                          for c in range(Ymat.shape[1])] for q in queries])

    def test_toy_set_matches_dense_oracle(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(6, 2))
        Y = encode_one_hot(rng.integers(0, 2, 6), 2)
        model = krr_fit(X, Y, 0.1, 0.8)
        got = krr_predict(model, X)
        ref = self.krr_oracle(X, Y.matrix, 0.1, 0.8, X)
        assert np.abs(got - ref).max() < 1e-8
        q = rng.normal(size=(3, 2))
        assert np.abs(krr_predict(model, q)
                      - self.krr_oracle(X, Y.matrix, 0.1, 0.8, q)).max() < 1e-8

    def test_interpolation_at_single_point(self):
        Y = encode_one_hot([1], 2)
        model = krr_fit(np.array([[3.0, 1.0]]), Y, 1e-12, 1.0)
        r = krr_predict(model, np.array([3.0, 1.0]))
        assert np.abs(r - Y.matrix[0]).max() < 1e-10

    def test_far_query_vanishes(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 2))
        Y = encode_one_hot(rng.integers(0, 2, 5), 2)
        model = krr_fit(X, Y, 0.1, 1e6)
        r = krr_predict(model, np.array([500.0, 500.0]))
        assert np.abs(r).max() < 1e-12

    def test_near_interpolation_small_lambda(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(10, 3))
        Y = encode_one_hot(rng.integers(0, 3, 10), 3)
        model = krr_fit(X, Y, 1e-10, 0.5)
        assert np.abs(krr_predict(model, X) - Y.matrix).max() <= 1e-6

    def test_dimension_mismatch(self):
        X = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        model = krr_fit(X, encode_one_hot([0, 1], 2), 0.1, 1.0)
        with pytest.raises(ShapeError, match="dimension"):
            krr_predict(model, np.ones(4))
