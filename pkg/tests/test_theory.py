import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from danet.dan import DanConfig, dan_fit
from danet.distances import class_distances, exact_class_distances
from danet.errors import ShapeError
from danet.kdan import KdanConfig, kdan_fit
from danet.ridge import encode_one_hot
from danet.synth import make_blobs
from danet.theory import (augmentation_identity_check, dynamics_trace,
                          error_stats, gaussian_density_at_targets,
                          relu_moments, span_gain_check, tail_bound,
                          theoretical_deltas)


def random_span_instance(seed, n=30, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) > 0.5).astype(np.float64)
    return X, y


class TestSpanGain:
    def test_all_nonnegative_predictions(self):
        # strictly positive design and targets keep every prediction >= 0,
        # so the negative-index projection is empty
        rng = np.random.default_rng(1)
        X = rng.uniform(0.5, 1.5, size=(20, 3))
        y = np.ones(20)
        v = span_gain_check(X, y, 0.01)
        assert v.orthogonality_neg == 0.0
        assert v.in_span  # relu leaves the prediction unchanged in this case

    def test_zero_error_fixed_point(self):
        rng = np.random.default_rng(2)
        X = np.abs(rng.normal(size=(15, 4))) + 0.1
        coef = np.abs(rng.normal(size=4))
        y = X @ coef  # exactly fittable, predictions positive
        v = span_gain_check(X, y, 1e-10)
        assert abs(v.orthogonality_neg) < 1e-6
        assert abs(v.orthogonality_nonneg) < 1e-6
        assert v.residual_after <= v.residual_before + 1e-8

    def test_monotonicity_on_random_instances(self):
        out_of_span = 0
        for seed in range(50):
            X, y = random_span_instance(seed)
            v = span_gain_check(X, y, 0.1)
            if not v.in_span:
                out_of_span += 1
                assert v.residual_after <= v.residual_before + 1e-8
        assert out_of_span >= 45  # random instances essentially always gain

    def test_full_rank_rejected(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(4, 6))
        with pytest.raises(ShapeError, match="vacuous"):
            span_gain_check(X, np.ones(4), 0.1)

    def test_lambda_positive_required(self):
        X, y = random_span_instance(0)
        with pytest.raises(ShapeError, match="lambda"):
            span_gain_check(X, y, 0.0)

    def test_out_of_span_condition_tracks_orthogonality(self):
        # nonzero orthogonality quantities must coincide with span escape
        for seed in range(20):
            X, y = random_span_instance(seed, n=20, d=4)
            v = span_gain_check(X, y, 0.5)
            either_nonzero = (abs(v.orthogonality_neg) > 1e-10
                              or abs(v.orthogonality_nonneg) > 1e-10)
            if either_nonzero:
                assert not v.in_span


class TestAugmentationIdentity:
    def test_identities_across_instances(self):
        checked = 0
        for seed in range(40):
            if checked >= 10:
                break
            X, y = random_span_instance(seed, n=14, d=4)
            try:
                ai = augmentation_identity_check(X, y, 0.3)
            except ShapeError:
                continue  # no clipping on this draw; identity vacuous
            checked += 1
            assert ai.hat_svd_gap <= 1e-8
            assert ai.update_gap <= 1e-8
            assert ai.cross_term_gap <= 1e-8
            assert ai.drop_gap <= 1e-8
            assert ai.residual_drop_direct >= -1e-10
        assert checked == 10

    def test_drop_formula_sign(self):
        X, y = random_span_instance(11, n=25, d=3)
        ai = augmentation_identity_check(X, y, 0.05)
        assert ai.residual_drop_formula >= 0.0


class TestClassDistances:
    def test_identical_rows(self):
        H = np.ones((8, 3))
        labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        w, b = class_distances(H, labels, 200, seed=0)
        assert w == 0.0 and b == 0.0

    def test_two_point_masses(self):
        p, q = np.array([1.0, 2.0]), np.array([4.0, 6.0])
        H = np.vstack([np.tile(p, (4, 1)), np.tile(q, (4, 1))])
        labels = np.array([0] * 4 + [1] * 4)
        w, b = class_distances(H, labels, 500, seed=1)
        assert w == 0.0
        assert np.isclose(b, 25.0, atol=1e-12)

    def test_monte_carlo_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(41)
        H = rng.normal(size=(30, 4))
        labels = rng.integers(0, 3, 30)
        labels[:6] = [0, 0, 1, 1, 2, 2]
        w_mc, b_mc = class_distances(H, labels, 1000, seed=41)
        w_ex, b_ex = exact_class_distances(H, labels)

        # population standard errors from the exact pair populations
        sq = ((H[:, None, :] - H[None, :, :]) ** 2).sum(axis=2)
        same = labels[:, None] == labels[None, :]
        np.fill_diagonal(same, False)
        diff = labels[:, None] != labels[None, :]
        se_w = sq[same].std() / np.sqrt(1000)
        se_b = sq[diff].std() / np.sqrt(1000)
        assert abs(w_mc - w_ex) <= 3 * se_w
        assert abs(b_mc - b_ex) <= 3 * se_b

    def test_small_class_rejected(self):
        H = np.zeros((3, 2))
        with pytest.raises(ShapeError, match="class"):
            class_distances(H, np.array([0, 0, 1]), 10, seed=0)


class TestErrorStats:
    def test_perfect_predictions(self):
        Y = encode_one_hot([0, 1, 0, 1], 2)
        stats = error_stats(Y.matrix.copy(), Y)
        assert (stats.sigma == 0).all()
        assert np.array_equal(stats.p_cj, np.eye(2))

    def test_off_class_probability_is_half(self):
        rng = np.random.default_rng(0)
        Y = encode_one_hot(rng.integers(0, 2, 50), 2)
        P = Y.matrix + rng.normal(scale=0.1, size=Y.matrix.shape)
        stats = error_stats(P, Y)
        off = stats.p_cj[~np.eye(2, dtype=bool)]
        assert np.allclose(off, 0.5, atol=1e-12)

    def test_recovers_known_gaussian(self):
        rng = np.random.default_rng(47)
        n = 10000
        labels = rng.integers(0, 3, n)
        Y = encode_one_hot(labels, 3)
        sigma_true = 0.2
        P = Y.matrix + rng.normal(scale=sigma_true, size=(n, 3))
        stats = error_stats(P, Y)
        assert np.abs(stats.sigma / sigma_true - 1).max() < 0.02
        expected = np.where(np.eye(3, dtype=bool),
                            norm.cdf(1.0 / stats.sigma), 0.5)
        assert np.abs(stats.p_cj - expected).max() < 0.01
        # zero-mean diagnostic close to zero for genuinely centered noise
        assert np.abs(stats.mean_eps).max() < 0.02

    def test_empirical_mode_cross_check(self):
        rng = np.random.default_rng(48)
        n = 20000
        labels = rng.integers(0, 2, n)
        Y = encode_one_hot(labels, 2)
        P = Y.matrix + rng.normal(scale=0.3, size=(n, 2))
        gauss = error_stats(P, Y, mode="gaussian")
        counts = error_stats(P, Y, mode="empirical")
        assert np.abs(gauss.p_cj - counts.p_cj).max() < 0.02

    def test_empty_class_rejected(self):
        Y = encode_one_hot([0, 0, 2], 3)
        with pytest.raises(ShapeError, match="class 1"):
            error_stats(Y.matrix, Y)


def quad_moments(t, s):
    """Numerical quadrature of the rectified-Gaussian moments, integrating
    from the kink so the integrand is smooth."""
    lo, hi = -t, -t + 60.0 * s

    def pdf(e):
        return np.exp(-e * e / (2 * s * s)) / (s * np.sqrt(2 * np.pi))

    m1 = quad(lambda e: (t + e) * pdf(e), lo, hi, limit=400)[0]
    m2 = quad(lambda e: (t + e) ** 2 * pdf(e), lo, hi, limit=400)[0]
    return m1, m2


class TestMomentsAndDeltas:
    def test_moments_match_quadrature(self):
        worst = 0.0
        for t in (-1.0, -0.4, 0.0, 0.3, 1.0):
            for s in (0.05, 0.2, 1.0, 3.0):
                m1, m2 = relu_moments(t, s)
                q1, q2 = quad_moments(t, s)
                worst = max(worst, abs(m1 - q1), abs(m2 - q2))
        assert worst <= 1e-6

    def test_small_sigma_limits(self):
        sigma = np.full((3, 3), 1e-9)
        targets = np.eye(3)
        p_cj = np.where(targets > 0, 1.0, 0.5)
        density = gaussian_density_at_targets(sigma, targets)
        d = theoretical_deltas(sigma, p_cj, targets, density)
        off = ~np.eye(3, dtype=bool)
        assert np.allclose(d.delta_b[off], 2.0, atol=1e-6)
        assert np.allclose(d.limit_b[off], 2.0)
        assert np.abs(d.delta_w).max() < 1e-6

    def test_intraclass_bound_holds(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            c = rng.integers(2, 5)
            sigma = rng.uniform(0.0, 2.0, size=(c, c))
            targets = np.eye(c)
            density = gaussian_density_at_targets(sigma, targets)
            safe = np.where(sigma > 0, sigma, 1.0)
            p_cj = np.where(sigma > 0, norm.cdf(targets / safe),
                            (targets > 0).astype(float))
            d = theoretical_deltas(sigma, p_cj, targets, density)
            assert (d.delta_w >= -1e-12).all()
            assert (d.delta_w <= d.bound_w + 1e-12).all()

    def test_deltas_against_monte_carlo(self):
        # simulate the error model directly and compare the increments
        rng = np.random.default_rng(12)
        sigma_row = np.array([0.3, 0.5])
        targets = np.eye(2)
        sigma = np.vstack([sigma_row, sigma_row])
        density = gaussian_density_at_targets(sigma, targets)
        p_cj = norm.cdf(targets / sigma)
        d = theoretical_deltas(sigma, p_cj, targets, density)

        n = 200000
        q0 = np.maximum(0.0, targets[0] + rng.normal(size=(n, 2)) * sigma_row)
        q0b = np.maximum(0.0, targets[0] + rng.normal(size=(n, 2)) * sigma_row)
        q1 = np.maximum(0.0, targets[1] + rng.normal(size=(n, 2)) * sigma_row)
        dw_mc = np.sum((q0 - q0b) ** 2, axis=1).mean()
        db_mc = np.sum((q0 - q1) ** 2, axis=1).mean()
        assert np.isclose(d.delta_w[0], dw_mc, rtol=0.02)
        assert np.isclose(d.delta_b[0, 1], db_mc, rtol=0.02)


class TestTailBound:
    def test_exact_at_zero(self):
        assert tail_bound(0.0, 1.0) == pytest.approx(0.5, abs=1e-12)
        assert norm.sf(0.0) == 0.5

    def test_dominates_exact_tail(self):
        for x in np.linspace(0.0, 6.0, 50):
            assert tail_bound(x, 1.0) >= norm.sf(x) - 1e-15
        assert tail_bound(3.0, 1.0) >= norm.sf(3.0)

    def test_monotone_decreasing(self):
        grid = [tail_bound(t, 0.7) for t in np.linspace(0.0, 5.0, 40)]
        assert all(b <= a for a, b in zip(grid, grid[1:]))

    def test_scale_invariance(self):
        assert tail_bound(1.5, 0.5) == pytest.approx(tail_bound(3.0, 1.0),
                                                     rel=1e-12)

    def test_sigma_positive(self):
        with pytest.raises(ShapeError, match="sigma"):
            tail_bound(1.0, 0.0)


class TestDynamicsTrace:
    def test_one_layer_anchor(self, blob_set):
        X, y, Y = blob_set
        model, _ = dan_fit(X, Y, DanConfig(depth=1, lambda_layer=0.1),
                           distance_pairs=0)
        trace = dynamics_trace(model, X, y, sample_pairs=500, seed=3)
        assert len(trace.train) == 1
        rec = trace.train[0]
        assert rec.w_theo == rec.w_phys
        assert rec.b_theo == rec.b_phys

    def test_blob_gap_non_decreasing(self, blob_set):
        X, y, Y = blob_set
        model, _ = dan_fit(X, Y, DanConfig(depth=4, lambda_layer=0.1),
                           distance_pairs=0)
        trace = dynamics_trace(model, X, y, sample_pairs=1000, seed=5)
        gaps = [r.b_phys - r.w_phys for r in trace.train]
        assert all(b >= a - 1e-9 for a, b in zip(gaps, gaps[1:]))

    def test_fixed_pairs_make_distances_non_decreasing(self, blob_set):
        # stacking only appends coordinates, so on fixed pairs both
        # distances are monotone in the layer index
        X, y, Y = blob_set
        model, _ = dan_fit(X, Y, DanConfig(depth=4, lambda_layer=0.1),
                           distance_pairs=0)
        trace = dynamics_trace(model, X, y, sample_pairs=800, seed=9)
        for a, b in zip(trace.train, trace.train[1:]):
            assert b.w_phys >= a.w_phys - 1e-12
            assert b.b_phys >= a.b_phys - 1e-12

    def test_test_side_trace(self, blob_set):
        X, y, Y = blob_set
        model, _ = dan_fit(X[:180], encode_one_hot(y[:180], 2),
                           DanConfig(depth=2, lambda_layer=0.1),
                           distance_pairs=0)
        trace = dynamics_trace(model, X[:180], y[:180], X[180:], y[180:],
                               sample_pairs=400, seed=2)
        assert trace.test is not None and len(trace.test) == 2

    def test_kernel_stack_trace(self):
        X, y = make_blobs(120, [[-4.0, 0.0], [4.0, 0.0]], cluster_std=0.8,
                          seed=7)
        model, _ = kdan_fit(X, encode_one_hot(y, 2),
                            KdanConfig(depth=3, lambda_layer=0.1,
                                       gamma_layer=0.2, trim=True),
                            distance_pairs=0)
        trace = dynamics_trace(model, X, y, sample_pairs=500, seed=11)
        assert len(trace.train) == 3
        gaps = [r.b_phys - r.w_phys for r in trace.train]
        assert all(b >= a - 1e-9 for a, b in zip(gaps, gaps[1:]))
