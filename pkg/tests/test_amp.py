import numpy as np
import pytest

from conformal_amp import (
    AmpOptions,
    AmpState,
    Dataset,
    GlmSpec,
    NotConvergedError,
    SyntheticConfig,
    amp_fit,
    augment,
    conformity_scores_amp,
    exact_loo_predictions,
    exact_loo_scores,
    generate_synthetic,
    loo_coefficients,
    loo_predictions,
)

RIDGE = GlmSpec("ridge", 1.0)


class TestFixedPoint:
    def test_scalar_ridge(self):
        ds = Dataset(np.array([[1.0]]), np.array([1.0]))
        state = amp_fit(ds, RIDGE)
        assert state.converged
        assert state.theta_hat[0] == pytest.approx(0.5, abs=1e-8)

    def test_zero_labels_zero_fixed_point(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=20, d=10, seed=1))
        state = amp_fit(Dataset(ds.X, np.zeros(20)), RIDGE)
        np.testing.assert_allclose(state.theta_hat, 0.0, atol=1e-12)
        np.testing.assert_allclose(state.g, 0.0, atol=1e-12)

    def test_matches_closed_form_ridge(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=400, d=200, seed=2))
        state = amp_fit(ds, RIDGE)
        assert state.converged
        ref = np.linalg.solve(ds.X.T @ ds.X + np.eye(200), ds.X.T @ ds.y)
        rel = np.linalg.norm(state.theta_hat - ref) / np.linalg.norm(ref)
        assert rel <= 1e-6

    @pytest.mark.parametrize("spec", [RIDGE, GlmSpec("lasso", 1.0)])
    def test_kkt_at_fixed_point(self, spec):
        ds, _ = generate_synthetic(SyntheticConfig(n=200, d=100, seed=3))
        opts = AmpOptions(tol=1e-12)
        state = amp_fit(ds, spec, opts)
        assert state.converged
        grad = ds.X.T @ (ds.y - ds.X @ state.theta_hat)
        if spec.regularizer == "ridge":
            resid = spec.lam * state.theta_hat - grad
            assert np.max(np.abs(resid)) <= 10 * 1e-10 * (1 + np.max(np.abs(ds.y)))
        else:
            active = state.theta_hat != 0
            assert np.max(np.abs(grad[active] - spec.lam * np.sign(state.theta_hat[active]))) <= 1e-6
            assert np.max(np.abs(grad[~active])) <= spec.lam + 1e-6

    @pytest.mark.parametrize("spec", [RIDGE, GlmSpec("lasso", 0.5)])
    def test_variances_nonnegative(self, spec):
        ds, _ = generate_synthetic(SyntheticConfig(n=60, d=40, seed=4))
        state = amp_fit(ds, spec)
        assert np.all(state.v_hat >= 0.0)

    def test_permutation_symmetry(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=50, d=25, seed=5))
        state = amp_fit(ds, RIDGE)
        perm = np.random.default_rng(0).permutation(50)
        permuted = amp_fit(Dataset(ds.X[perm], ds.y[perm]), RIDGE)
        np.testing.assert_allclose(permuted.theta_hat, state.theta_hat, atol=1e-12)
        np.testing.assert_allclose(permuted.g, state.g[perm], atol=1e-12)

    def test_warm_start_resumes(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=80, d=40, seed=6))
        cold = amp_fit(ds, RIDGE)
        warm = amp_fit(ds, RIDGE, AmpOptions(warm_start=cold))
        assert warm.iterations <= 2
        np.testing.assert_allclose(warm.theta_hat, cold.theta_hat, atol=1e-9)

    def test_seeded_init_reaches_same_fixed_point(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=80, d=40, seed=7))
        a = amp_fit(ds, RIDGE)
        b = amp_fit(ds, RIDGE, AmpOptions(init_seed=123))
        np.testing.assert_allclose(a.theta_hat, b.theta_hat, atol=1e-8)

    def test_max_iter_reports_not_converged(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=80, d=40, seed=8))
        state = amp_fit(ds, RIDGE, AmpOptions(max_iter=2))
        assert not state.converged
        with pytest.raises(NotConvergedError):
            loo_predictions(state, ds)

    def test_damping_reaches_same_fixed_point(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=60, d=30, seed=9))
        plain = amp_fit(ds, RIDGE)
        damped = amp_fit(ds, RIDGE, AmpOptions(damping=0.5, max_iter=5000))
        assert damped.converged
        np.testing.assert_allclose(damped.theta_hat, plain.theta_hat, atol=1e-8)


class TestLeaveOneOut:
    def test_zero_g_row_equals_full_prediction(self):
        # with g_i = 0 the cavity correction for row i vanishes identically
        rng = np.random.default_rng(10)
        X = rng.normal(size=(5, 3))
        state = AmpState(
            theta_hat=rng.normal(size=3), v_hat=rng.uniform(0.1, 1.0, 3),
            omega=np.zeros(5), V=np.zeros(5),
            g=np.array([0.0, 1.0, -1.0, 0.5, 2.0]), dg=np.zeros(5),
            b=np.zeros(3), A=np.ones(3), iterations=1, converged=True,
        )
        ds = Dataset(X, rng.normal(size=5))
        preds = loo_predictions(state, ds)
        assert preds[0] == pytest.approx(float(X[0] @ state.theta_hat), abs=1e-14)

    def test_loo_coefficients_match_predictions(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=30, d=15, seed=11))
        state = amp_fit(ds, RIDGE)
        coefs = loo_coefficients(state, ds)
        preds = loo_predictions(state, ds)
        np.testing.assert_allclose(np.einsum("ij,ij->i", coefs, ds.X), preds, atol=1e-12)

    def test_close_to_exact_refits_small(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=6, d=3, seed=12))
        state = amp_fit(ds, RIDGE)
        exact = exact_loo_predictions(ds, RIDGE)
        assert np.max(np.abs(loo_predictions(state, ds) - exact)) <= 0.2

    def test_gap_shrinks_with_dimension(self):
        # the cavity formula is exact only to leading order; its error
        # should drop clearly when n and d double at fixed ratio
        gaps = {}
        for d in (60, 240):
            per_seed = []
            for seed in range(3):
                ds, _ = generate_synthetic(
                    SyntheticConfig(n=d // 2, d=d, noise_variance=1.0, seed=seed)
                )
                state = amp_fit(ds, RIDGE)
                per_seed.append(np.mean(np.abs(
                    loo_predictions(state, ds) - exact_loo_predictions(ds, RIDGE)
                )))
            gaps[d] = np.mean(per_seed)
        assert gaps[240] < gaps[60]


class TestConformityScores:
    def test_interpolating_regime(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=80, d=8, noise_variance=0.0, seed=13))
        x = np.full(8, 0.05)
        aug = augment(ds, x, 0.0)
        # the augmented label 0.0 is not the teacher's, so only rows 1..n vanish
        scores = conformity_scores_amp(aug, GlmSpec("ridge", 1e-6))
        assert np.max(scores[:-1]) <= 1e-3

    def test_matches_exact_scores_on_average(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=200, d=100, seed=14))
        aug = augment(ds, np.random.default_rng(0).normal(0, 0.1, 100), 0.5)
        amp_scores = conformity_scores_amp(aug, RIDGE)
        exact = exact_loo_scores(aug, RIDGE)
        assert np.mean(np.abs(amp_scores - exact)) <= 0.2

    def test_train_permutation_moves_scores_with_rows(self):
        ds, _ = generate_synthetic(SyntheticConfig(n=40, d=20, seed=15))
        x = np.random.default_rng(1).normal(0, 0.2, 20)
        aug = augment(ds, x, 1.0)
        scores = conformity_scores_amp(aug, RIDGE)
        perm = np.random.default_rng(2).permutation(40)
        aug_perm = augment(Dataset(ds.X[perm], ds.y[perm]), x, 1.0)
        permuted = conformity_scores_amp(aug_perm, RIDGE)
        np.testing.assert_allclose(permuted[:-1], scores[:-1][perm], atol=1e-12)
        assert permuted[-1] == pytest.approx(scores[-1], abs=1e-12)
