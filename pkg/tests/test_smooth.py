import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from afpca.basis import make_knots, wand_transform
from afpca.exceptions import DataValidationError, RankDeficiencyError
from afpca.simulate import ise, true_functions
from afpca.smooth import (
    SmoothConfig,
    fit_adaptive_smooth,
    nonadaptive_lambda,
    penalized_nll,
    tuning_update,
    update_beta,
    update_lambda,
    update_sigma2,
)


def tiny_problem(seed=0, J=20, P=6):
    rng = np.random.default_rng(seed)
    tb = wand_transform(make_knots((0, 1), P))
    t = np.sort(rng.uniform(0, 1, J))
    t[[0, -1]] = 0, 1
    y = np.sin(3 * t) + rng.normal(0, 0.2, J)
    return tb, t, y


class TestUpdateBeta:
    def test_ols_reduction(self):
        tb, t, y = tiny_problem()
        W = tb.eval(t)
        beta = update_beta(W, y, np.zeros(6), 0.3)
        ref = np.linalg.solve(W.T @ W, W.T @ y)
        np.testing.assert_allclose(beta, ref, rtol=0, atol=1e-10)

    def test_square_ols(self):
        tb = wand_transform(make_knots((0, 1), 6))
        t = np.linspace(0, 1, 6)
        W = tb.eval(t)
        y = np.cos(t)
        beta = update_beta(W, y, np.zeros(6), 1.0)
        assert np.max(np.abs(W @ beta - y)) < 1e-10

    def test_infinite_penalty_gives_affine_fit(self):
        tb, t, y = tiny_problem(J=50, P=10)
        W = tb.eval(t)
        lam = np.r_[0, 0, np.full(8, 1e12)]
        fit = W @ update_beta(W, y, lam, 0.5)
        X = np.column_stack([np.ones_like(t), t])
        affine = X @ np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.max(np.abs(fit - affine)) < 1e-4

    def test_zero_gradient(self):
        tb, t, y = tiny_problem(seed=3)
        W = tb.eval(t)
        sigma2 = 0.37
        lam = np.r_[0, 0, np.random.default_rng(1).uniform(0.5, 5, 4)]
        beta = update_beta(W, y, lam, sigma2)

        def objective(b):
            r = y - W @ b
            return penalized_nll(float(r @ r), t.size, sigma2, b, lam)

        g = oracles.numeric_gradient(objective, beta)
        assert np.max(np.abs(g)) < 1e-8

    def test_rank_deficient(self):
        tb, t, y = tiny_problem(J=4, P=6)
        with pytest.raises(RankDeficiencyError):
            update_beta(tb.eval(t), y, np.zeros(6), 1.0)

    def test_nonconformable(self):
        with pytest.raises(DataValidationError):
            update_beta(np.ones((5, 3)), np.ones(4), np.zeros(3), 1.0)


class TestTuning:
    def test_squaring(self):
        lam = update_lambda(np.array([3.0, -2.0, 0.5, -0.5, 2.0]))
        np.testing.assert_allclose(lam, [0, 0, 4, 4, 0.25])

    def test_floor(self):
        lam = update_lambda(np.array([1.0, 1.0, 0.0, 1e-9, -1e-7]))
        np.testing.assert_allclose(lam[2:], 1e12)
        assert np.all(np.isfinite(lam))

    def test_null_entries_exactly_zero(self):
        lam = update_lambda(np.array([1e-12, 0.0, 1.0, 1.0]))
        assert lam[0] == 0.0 and lam[1] == 0.0

    def test_baseline_symmetric_case(self):
        c = 0.37
        beta = np.r_[1.2, -3.0, np.full(38, c)]
        base = nonadaptive_lambda(beta)
        np.testing.assert_allclose(base[2:], 1 / c**2, rtol=1e-12)
        np.testing.assert_allclose(update_lambda(beta)[2:], base[2:], rtol=1e-12)
        assert base[0] == base[1] == 0

    def test_mode_aliases(self):
        beta = np.r_[1.0, 1.0, 0.5, 2.0]
        np.testing.assert_array_equal(tuning_update(beta, mode="nonadaptive-baseline"), nonadaptive_lambda(beta))
        with pytest.raises(ValueError):
            tuning_update(beta, mode="lasso")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=3, max_size=50))
    def test_finite_and_nonnegative(self, values):
        beta = np.array(values)
        for lam in (update_lambda(beta), nonadaptive_lambda(beta)):
            assert np.all(np.isfinite(lam))
            assert np.all(lam >= 0)
            assert lam[0] == lam[1] == 0


class TestSigma2:
    def test_zero(self):
        assert update_sigma2(np.zeros(7)) == 0.0

    def test_pair(self):
        assert update_sigma2([1.0, -1.0]) == 1.0

    def test_random(self):
        r = np.random.default_rng(7).normal(size=333)
        ref = sum(float(v) ** 2 for v in r) / len(r)
        assert abs(update_sigma2(r) - ref) < 1e-12

    def test_empty(self):
        with pytest.raises(DataValidationError):
            update_sigma2([])


class TestFit:
    def test_affine_reproduction(self):
        t = np.linspace(0, 1, 200)
        y = 2 + 3 * t
        fit = fit_adaptive_smooth(t, y)
        assert np.max(np.abs(fit.predict(t) - y)) < 1e-6
        assert np.all(np.abs(fit.beta[2:]) <= 1e-6)

    def test_first_iterate_is_ols(self):
        tb, t, y = tiny_problem(J=80, P=12)
        fit = fit_adaptive_smooth(t, y, SmoothConfig(P=12, max_iter=1), basis=tb)
        W = tb.eval(t)
        ols = np.linalg.lstsq(W, y, rcond=None)[0]
        np.testing.assert_allclose(fit.beta, ols, rtol=0, atol=1e-10)
        r = y - W @ ols
        assert fit.sigma2 == pytest.approx(r @ r / t.size, rel=1e-12)

    def test_invariants(self):
        tb, t, y = tiny_problem(J=150, P=20, seed=11)
        fit = fit_adaptive_smooth(t, y, SmoothConfig(P=20))
        assert fit.lambda_diag[0] == fit.lambda_diag[1] == 0
        assert np.all(fit.lambda_diag >= 0)
        assert fit.sigma2 > 0
        assert np.all(np.isfinite(fit.objective_trace))
        assert len(fit.objective_trace) == fit.n_iter
        if fit.converged:
            a, b = fit.objective_trace[-2:]
            assert abs(b - a) < max(1e-6 * abs(b), 1e-10)

    @pytest.mark.parametrize("seed", [12, 13, 14])
    def test_fixed_point(self, seed):
        tb, t, y = tiny_problem(J=150, P=20, seed=seed)
        config = SmoothConfig(P=20, max_iter=500)
        fit = fit_adaptive_smooth(t, y, config)
        assert fit.converged
        W = fit.basis.eval(t)
        again = update_beta(W, y, fit.lambda_diag, fit.sigma2)
        assert np.max(np.abs(again - fit.beta)) < 10 * config.tol

    def test_translation_equivariance(self):
        _, t, y = tiny_problem(J=120, P=15, seed=13)
        a = fit_adaptive_smooth(t, y, SmoothConfig(P=15))
        b = fit_adaptive_smooth(t + 7.25, y, SmoothConfig(P=15))
        assert np.max(np.abs(a.predict(t) - b.predict(t + 7.25))) < 1e-8

    def test_too_few_points(self):
        t = np.linspace(0, 1, 10)
        with pytest.raises(RankDeficiencyError, match="smaller P"):
            fit_adaptive_smooth(t, t, SmoothConfig(P=12))

    def test_nonfinite(self):
        t = np.linspace(0, 1, 50)
        y = np.sin(t)
        y[3] = np.nan
        with pytest.raises(DataValidationError):
            fit_adaptive_smooth(t, y)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SmoothConfig(max_iter=0)
        with pytest.raises(ValueError):
            SmoothConfig(tol=0)
        with pytest.raises(ValueError):
            SmoothConfig(beta_floor=-1)

    def test_lambda_function_output(self):
        _, t, y = tiny_problem(J=200, P=20, seed=14)
        fit = fit_adaptive_smooth(t, y, SmoothConfig(P=20))
        lam = fit.lambda_fn(np.linspace(0, 1, 200))
        assert np.all(lam[np.isfinite(lam)] >= 0)
        assert np.isfinite(lam).sum() > 100

    def test_deterministic(self):
        _, t, y = tiny_problem(J=100, P=15, seed=15)
        a = fit_adaptive_smooth(t, y, SmoothConfig(P=15))
        b = fit_adaptive_smooth(t, y, SmoothConfig(P=15))
        np.testing.assert_array_equal(a.beta, b.beta)
        assert a.objective_trace == b.objective_trace


def test_adaptive_beats_single_weight_on_flat_then_sine():
    """Mean shape of the simulation generator plus noise, 100 seeded replicates."""
    truth = true_functions()
    t = np.linspace(0, 1, 100)
    f = truth.mean(t)
    wins = 0
    for seed in range(100):
        y = f + np.random.default_rng(seed).normal(0, np.sqrt(0.1), t.size)
        a = fit_adaptive_smooth(t, y, SmoothConfig(mode="adaptive"))
        b = fit_adaptive_smooth(t, y, SmoothConfig(mode="baseline"))
        wins += ise(a.predict(t), f, t) < ise(b.predict(t), f, t)
    assert wins >= 80
