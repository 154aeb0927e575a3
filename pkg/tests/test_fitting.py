import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from entikit.errors import DegenerateDataError, InsufficientDataError, SingularDesignError
from entikit.fitting import (
    StudyDataset,
    average_by_stimulus,
    correlation_matrix,
    cronbach_alpha,
    f_survival,
    incomplete_beta,
    ols_fit,
    one_at_a_time_stimuli,
    pca_first_component,
    refit_pipeline,
    reverse_score,
    study_alpha,
    synthesize_study,
)
from study_fixtures import A, M, ITEM_CORRELATIONS, U, design, feature_study, half_fraction, rank_one_study


class TestAverage:
    def test_identity(self):
        ds = feature_study()
        out = average_by_stimulus(ds)
        np.testing.assert_array_equal(out.responses, ds.responses)
        np.testing.assert_array_equal(out.gp, ds.gp)

    def test_midpoint(self):
        gp = np.tile([4, 1, 1.5, 0.5], (2, 1))
        ds = StudyDataset([0, 1], [5, 5], gp, [[2, 2, 2, 2], [4, 4, 4, 4]])
        np.testing.assert_allclose(average_by_stimulus(ds).responses, [[3, 3, 3, 3]])

    def test_212_participants(self):
        stimuli = one_at_a_time_stimuli()
        ds = synthesize_study(stimuli, design(stimuli) @ M.T, noise=0.3, seed=4)
        assert len(set(ds.participant_ids)) == 212
        out = average_by_stimulus(ds)
        for k, sid in enumerate(out.stimulus_ids):
            rows = [ds.responses[i] for i in range(len(ds)) if ds.stimulus_ids[i] == sid]
            np.testing.assert_allclose(out.responses[k], np.sum(rows, axis=0) / len(rows),
                                       rtol=1e-12)


class TestPCA:
    def test_rank_one(self):
        c = np.linspace(-2, 3, 8)
        loadings, ratio = pca_first_component(np.outer(c, U))
        np.testing.assert_allclose(loadings, U, atol=1e-12)
        assert ratio == pytest.approx(1.0)

    def test_isotropic(self):
        X = np.random.default_rng(0).normal(size=(10_000, 4))
        _, ratio = pca_first_component(X)
        assert abs(ratio - 0.25) <= 0.05

    def test_item_correlation_structure(self):
        L = np.linalg.cholesky(ITEM_CORRELATIONS)
        X = np.random.default_rng(1).normal(size=(5000, 4)) @ L.T
        loadings, ratio = pca_first_component(X)
        assert ratio >= 0.95
        assert list(np.sign(loadings)) == [-1, 1, -1, 1]

    def test_zero_variance(self):
        with pytest.raises(DegenerateDataError):
            pca_first_component(np.ones((5, 4)))

    @settings(max_examples=25)
    @given(st.integers(0, 10_000))
    def test_row_duplication_invariance(self, seed):
        X = np.random.default_rng(seed).normal(size=(12, 4)) * [1, 2, 3, 4]
        a, _ = pca_first_component(X)
        b, _ = pca_first_component(np.vstack([X, X]))
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestOLS:
    def test_exact(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([np.ones(20), rng.normal(size=(20, 3))])
        beta = np.array([0.5, -1.0, 2.0, 0.25])
        res = ols_fit(X, X @ beta)
        np.testing.assert_allclose(res.coefficients, beta, atol=1e-9)
        assert res.r2 == pytest.approx(1.0)
        assert res.p == 0.0

    def test_orthogonal_response(self):
        x = np.array([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0])
        y = np.array([1.0, -2.0, 1.0, 1.0, -2.0, 1.0])  # orthogonal to centred x
        res = ols_fit(np.column_stack([np.ones(6), x]), y)
        assert res.r2 == pytest.approx(0.0, abs=1e-12)

    def test_linear_entitativity_fixture(self):
        # 8 stimuli, each the mean of 106 ratings with noise sd 0.05
        stimuli = half_fraction()
        X = design(stimuli)
        y = X @ A + np.random.default_rng(3).normal(0, 0.05, (106, 8)).mean(axis=0)
        res = ols_fit(X, y)
        assert np.abs(res.coefficients - A).max() <= 0.05
        assert res.r2 >= 0.9

    def test_singular(self):
        X = np.column_stack([np.ones(6), np.arange(6), 2 * np.arange(6)])
        with pytest.raises(SingularDesignError):
            ols_fit(X, np.arange(6.0))

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            ols_fit(np.eye(3), np.ones(3))

    def test_f_and_p_against_reference(self):
        rng = np.random.default_rng(5)
        X = np.column_stack([np.ones(8), rng.normal(size=(8, 4))])
        y = X @ [1, 0.3, -0.2, 0.1, 0.0] + rng.normal(0, 0.5, 8)
        res = ols_fit(X, y)
        assert (res.df_model, res.df_resid) == (4, 3)
        assert res.p == pytest.approx(scipy.stats.f.sf(res.f, 4, 3), abs=1e-10)

    @settings(max_examples=40)
    @given(st.floats(1e-3, 500), st.integers(1, 20), st.integers(1, 200))
    def test_f_survival_matches_scipy(self, f, d1, d2):
        assert f_survival(f, d1, d2) == pytest.approx(scipy.stats.f.sf(f, d1, d2), abs=1e-8)

    @settings(max_examples=40)
    @given(st.floats(0.01, 50), st.floats(0.01, 50), st.floats(0, 1))
    def test_incomplete_beta_matches_scipy(self, a, b, x):
        assert incomplete_beta(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), abs=1e-8)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_residual_orthogonality_and_nesting(self, seed):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(15), rng.normal(size=(15, 3))])
        y = rng.normal(size=15)
        res = ols_fit(X, y)
        scale = np.linalg.norm(X, axis=0) * np.linalg.norm(y)
        assert np.all(np.abs(X.T @ res.residuals) <= 1e-8 * scale)
        bigger = ols_fit(np.column_stack([X, rng.normal(size=15)]), y)
        assert bigger.r2 >= res.r2 - 1e-12


class TestCorrelation:
    def test_duplicate(self):
        x = np.random.default_rng(0).normal(size=(10, 1))
        R = correlation_matrix(np.hstack([x, x, x + 1, 2 * x]))
        np.testing.assert_allclose(R, np.ones((4, 4)), atol=1e-12)

    def test_negation(self):
        x = np.random.default_rng(0).normal(size=(10, 1))
        R = correlation_matrix(np.hstack([x, -x]))
        assert R[0, 1] == pytest.approx(-1.0)

    def test_item_correlation_sampling(self):
        L = np.linalg.cholesky(ITEM_CORRELATIONS)
        X = np.random.default_rng(6).normal(size=(5000, 4)) @ L.T
        np.testing.assert_allclose(correlation_matrix(X), ITEM_CORRELATIONS, atol=0.05)

    def test_zero_variance(self):
        with pytest.raises(DegenerateDataError):
            correlation_matrix(np.column_stack([np.ones(5), np.arange(5)]))

    @settings(max_examples=25)
    @given(st.integers(0, 10_000), st.lists(st.floats(0.01, 100), min_size=4, max_size=4),
           st.lists(st.floats(-100, 100), min_size=4, max_size=4))
    def test_affine_invariance(self, seed, scale, shift):
        X = np.random.default_rng(seed).normal(size=(30, 4))
        np.testing.assert_allclose(correlation_matrix(X * scale + shift), correlation_matrix(X),
                                   atol=1e-9)


class TestAlpha:
    def test_identical_columns(self):
        x = np.random.default_rng(0).normal(size=(50, 1))
        assert cronbach_alpha(np.hstack([x] * 4)) == pytest.approx(1.0)

    def test_independent(self):
        X = np.random.default_rng(0).normal(size=(10_000, 4))
        assert abs(cronbach_alpha(X)) <= 0.05

    def test_spearman_brown(self):
        r, k = 0.49, 4
        C = np.full((k, k), r) + (1 - r) * np.eye(k)
        X = np.random.default_rng(1).normal(size=(20_000, k)) @ np.linalg.cholesky(C).T
        expected = k * r / (1 + (k - 1) * r)
        assert expected == pytest.approx(0.7935, abs=1e-4)
        assert cronbach_alpha(X) == pytest.approx(expected, abs=0.03)

    def test_reverse_keyed_items(self):
        rng = np.random.default_rng(2)
        trait = rng.normal(size=500)
        items = np.column_stack([3.5 - trait, 3.5 + trait, 3.5 - trait, 3.5 + trait])
        items += rng.normal(0, 0.3, items.shape)
        assert cronbach_alpha(items) < 0
        assert cronbach_alpha(items, reverse=(0, 2), scale=(1, 6)) > 0.9
        np.testing.assert_allclose(reverse_score(items, (0,), (1, 6))[:, 0], 7 - items[:, 0])

    def test_study_alpha_reverses_friendliness_and_comfort(self):
        rng = np.random.default_rng(3)
        trait = rng.normal(size=300)
        resp = 3.5 + np.outer(trait, [-1, 1, -1, 1]) + rng.normal(0, 0.3, (300, 4))
        ds = StudyDataset(np.arange(300), np.arange(300) % 8, np.tile([4, 1, 1.5, 0.5], (300, 1)), resp)
        assert study_alpha(ds) > 0.9

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            cronbach_alpha(np.ones((5, 3)))


class TestRefit:
    def test_noiseless_loadings_and_label_model(self):
        b = refit_pipeline(rank_one_study())
        np.testing.assert_allclose(b.pca_loadings, U, atol=1e-6)
        np.testing.assert_allclose(b.coefficients, A, atol=1e-6)
        assert b.explained_variance_ratio == pytest.approx(1.0)

    def test_noiseless_feature_map(self):
        b = refit_pipeline(feature_study())
        np.testing.assert_allclose(b.feature_matrix, M, atol=1e-6)

    def test_noisy_r2(self):
        b = refit_pipeline(feature_study(one_at_a_time_stimuli(), noise=0.05, seed=8))
        assert min(d.r2 for d in b.feature_fits) >= 0.9

    def test_too_few_stimuli(self):
        ds = feature_study(one_at_a_time_stimuli()[:5])
        with pytest.raises(InsufficientDataError) as exc:
            refit_pipeline(ds)
        assert exc.value.stage == "average"

    def test_deterministic(self):
        ds = feature_study(noise=0.05, seed=2)
        a, b = refit_pipeline(ds), refit_pipeline(ds)
        np.testing.assert_array_equal(a.feature_matrix, b.feature_matrix)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_bundle_drives_forward_model(self):
        from entikit.core import predict_entitativity

        model = refit_pipeline(rank_one_study()).to_model()
        assert predict_entitativity((4, 1, 1.5, 0.5), model) == pytest.approx(-0.17, abs=1e-6)
