import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from drselect import pglm
from drselect.core import Dataset, split_by_arm, standardize
from drselect.dgp import ScenarioSpec, generate
from drselect.exceptions import EmptyArm, EmptyGrid, NotConverged, TooFewRows
from drselect.pglm import LambdaGrid
from helpers import noise_data
from oracles import univariate_min


def orthonormal_design(m, k, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, k))
    z -= z.mean(0)
    q, _ = np.linalg.qr(z)
    return np.column_stack([np.ones(m), q * np.sqrt(m)])


class TestLambdaGrid:
    def test_descending_log_uniform(self):
        v = LambdaGrid(0.1, count=100).values(2.0)
        assert v.shape == (100,) and v[0] == pytest.approx(2.0) and v[-1] == pytest.approx(0.1)
        assert np.all(np.diff(v) < 0)
        np.testing.assert_allclose(np.diff(np.log(v)), np.log(0.1 / 2.0) / 99)

    def test_collapse_and_single(self):
        np.testing.assert_array_equal(LambdaGrid(0.3).values(0.2), [0.3])
        np.testing.assert_array_equal(LambdaGrid.single(0.5).values(), [0.5])
        with pytest.raises(EmptyGrid):
            LambdaGrid(0.1, count=0).values(1.0)

    @pytest.mark.parametrize("kwargs", [dict(lambda_min=0.0), dict(lambda_min=0.1, folds=1),
                                        dict(lambda_min=0.5, lambda_max=0.1),
                                        dict(lambda_min=0.1, lambda_max_rule="other")])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            LambdaGrid(**kwargs)

    def test_eigenvalue_rule(self):
        x = orthonormal_design(200, 4, 0)
        assert pglm.eigenvalue_lambda_max(x) == pytest.approx(1.0)


def test_orthonormal_design_matches_univariate_oracle():
    m, k = 300, 6
    x = orthonormal_design(m, k, 1)
    beta = np.array([0.5, 2.0, -0.8, 0.3, 0.0, 0.12, -0.05])
    y = x @ beta + 0.05 * np.random.default_rng(2).standard_normal(m)
    lams = np.array([0.5, 0.2, 0.1])
    coefs, _, conv = pglm.linear_path(x, y, lams)
    assert conv.all()
    z = x.T @ y / m
    for row, lam in zip(coefs, lams):
        assert row[0] == pytest.approx(y.mean(), abs=1e-9)
        for j in range(1, k + 1):
            b_ref, _ = univariate_min(z[j], 1.0, lam)
            assert row[j] == pytest.approx(b_ref, abs=1e-6)


def test_null_gradient_bound_is_tight():
    d, _ = generate(ScenarioSpec(1, "a", n=400, p=12, seed=3))
    t, _ = split_by_arm(standardize(d)[0])
    top = pglm.null_gradient_lambda_max(t.x, t.y)
    coefs, _, _ = pglm.linear_path(t.x, t.y, [top * 1.0001, top * 0.99])
    assert not np.any(coefs[0, 1:]) and np.any(coefs[1, 1:])
    top = pglm.null_gradient_lambda_max(d.x, d.a)
    coefs, _, _ = pglm.logistic_path(standardize(d)[0].x, d.a, [top * 1.0001])
    assert not np.any(coefs[0, 1:])


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from(["linear", "logistic"]))
def test_objective_decreases_monotonically(seed, kind):
    d, _ = generate(ScenarioSpec(1 + seed % 4, "ab"[seed % 2], n=300, p=10, seed=seed))
    d, _ = standardize(d)
    hist = np.full(5000, np.nan)
    if kind == "linear":
        arm, _ = split_by_arm(d)
        pglm.linear_path(arm.x, arm.y, [0.15], history=hist)
    else:
        pglm.logistic_path(d.x, d.a, [0.03], history=hist)
    h = hist[np.isfinite(hist)]
    assert h.size > 0
    assert np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, np.abs(h[:-1])))


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_path_points_are_stationary(seed):
    d, _ = generate(ScenarioSpec(1 + seed % 4, "abcd"[seed % 4], n=400, p=15, seed=seed))
    d, _ = standardize(d)
    lams = LambdaGrid(0.02, count=20).values(pglm.null_gradient_lambda_max(d.x, d.a))
    coefs, _, conv = pglm.logistic_path(d.x, d.a, lams)
    for lam, c, ok in zip(lams, coefs, conv):
        assert ok
        v = pglm.stationarity_violation(pglm.logistic_score(d.x, d.a, c), c, lam)
        assert np.all(v <= 1e-6)
    arm, _ = split_by_arm(d)
    lams = LambdaGrid(0.1, count=20).values(pglm.null_gradient_lambda_max(arm.x, arm.y))
    coefs, _, conv = pglm.linear_path(arm.x, arm.y, lams)
    for lam, c in zip(lams, coefs):
        assert np.all(pglm.stationarity_violation(pglm.linear_score(arm.x, arm.y, c), c, lam) <= 1e-6)


def test_tiny_lambda_recovers_logistic_mle():
    d, _ = generate(ScenarioSpec(1, "a", n=2000, p=8, seed=8))
    d, _ = standardize(d)

    def nll(al):
        eta = d.x @ al
        return np.mean(np.logaddexp(0.0, eta) - d.a * eta)

    def grad(al):
        return d.x.T @ (1.0 / (1.0 + np.exp(-(d.x @ al))) - d.a) / d.n

    mle = scipy.optimize.minimize(nll, np.zeros(d.p), jac=grad, method="BFGS", options={"gtol": 1e-12}).x
    coefs, _, conv = pglm.logistic_path(d.x, d.a, [1e-6])
    assert conv.all()
    np.testing.assert_allclose(coefs[0], mle, atol=1e-5)


def test_cv_ties_go_to_larger_lambda():
    x = np.column_stack([np.ones(40), np.arange(40.0)])
    y = np.zeros(40)

    def path(xt, yt, lambdas):
        return np.zeros((len(lambdas), 2))

    lam, idx, table = pglm.cross_validate(path, x, y, [0.5, 0.3, 0.1], folds=4)
    assert (lam, idx) == (0.5, 0) and len(table) == 3


def test_folds_follow_rows_under_permutation():
    rng = np.random.default_rng(0)
    x = np.column_stack([np.ones(103), rng.standard_normal((103, 3))])
    y = rng.standard_normal(103)
    labels = pglm.assign_folds(x, y, 10, 7)
    assert sorted(np.bincount(labels)) == [10] * 7 + [11] * 3
    perm = rng.permutation(103)
    np.testing.assert_array_equal(pglm.assign_folds(x[perm], y[perm], 10, 7), labels[perm])


def test_fit_wrappers_and_errors():
    d, _ = generate(ScenarioSpec(2, "a", n=600, p=10, seed=2))
    d, _ = standardize(d)
    arm, _ = split_by_arm(d)
    fit = pglm.fit_penalized_linear(arm, LambdaGrid(0.1), seed=1)
    assert fit.active_set == pglm.active_indices(fit.coefficients) and fit.converged
    assert {3, 4} <= set(fit.active_set)
    assert fit.lambda_used >= 0.1 and len(fit.cv_table) == 100
    with pytest.raises(ValueError):
        pglm.fit_penalized_linear(d, LambdaGrid(0.1))
    with pytest.raises(NotConverged) as info:
        pglm.fit_penalized_logistic(d, LambdaGrid(0.02), max_iter=1)
    assert info.value.model == "propensity"
    with pytest.raises(EmptyArm):
        pglm.fit_penalized_logistic(arm, LambdaGrid(0.02))
    few = d.subset_rows(np.r_[np.flatnonzero(d.a == 0)[:4], np.flatnonzero(d.a == 1)[:4]])
    with pytest.raises(TooFewRows):
        pglm.fit_penalized_logistic(few, LambdaGrid(0.02))
    with pytest.raises(EmptyGrid):
        pglm.fit_penalized_logistic(d, LambdaGrid(0.02, count=0))


def test_fit_is_reproducible():
    d, _ = generate(ScenarioSpec(3, "b", n=500, p=10, seed=5))
    d, _ = standardize(d)
    f1 = pglm.fit_penalized_logistic(d, LambdaGrid(0.02), seed=3)
    f2 = pglm.fit_penalized_logistic(d, LambdaGrid(0.02), seed=3)
    assert np.array_equal(f1.coefficients, f2.coefficients) and f1.cv_table == f2.cv_table


def test_penalized_fit_validates_active_set():
    with pytest.raises(ValueError):
        pglm.PenalizedFit(np.array([1.0, 0.0, 2.0]), (1,), 0.1, True, 3)
    single = Dataset(np.zeros(3), np.ones(3), np.ones((3, 1)))
    assert single.n_control == 0


def test_zero_signal_and_single_lambda():
    d, _ = standardize(generate(ScenarioSpec(1, "a", n=300, p=10, seed=4))[0])
    arm, _ = split_by_arm(d)
    zero = Dataset(np.zeros(arm.n), arm.a, arm.x)
    fit = pglm.fit_penalized_linear(zero, LambdaGrid(0.1))
    assert not np.any(fit.coefficients) and fit.active_set == ()
    fit = pglm.fit_penalized_linear(arm, LambdaGrid.single(0.2))
    assert fit.lambda_used == 0.2 and len(fit.cv_table) == 1


@pytest.mark.parametrize("k", [0.5, 3.0, -2.0])
def test_outcome_scaling(k):
    d, _ = standardize(generate(ScenarioSpec(3, "a", n=300, p=10, seed=5))[0])
    arm, _ = split_by_arm(d)
    base, _, _ = pglm.linear_path(arm.x, arm.y, [0.15], tol=1e-12)
    scaled, _, _ = pglm.linear_path(arm.x, k * arm.y, [0.15 * abs(k)], tol=1e-12)
    np.testing.assert_allclose(scaled[0], k * base[0], atol=1e-9)


@pytest.mark.slow
def test_noise_linear_cv_stays_near_top():
    empty = 0
    for seed in range(50):
        d, _ = standardize(noise_data(2000, 50, seed))
        arm, _ = split_by_arm(d)
        fit = pglm.fit_penalized_linear(arm, LambdaGrid(0.1), seed=seed)
        empty += fit.active_set == ()
    assert empty >= 45


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="pooled held-out deviance is flat near the top of the path, so noise "
                                       "covariates enter in about 15% of draws; see the decisions ledger")
def test_noise_propensity_empty_rate():
    empty = 0
    for seed in range(200):
        d, _ = standardize(noise_data(5000, 50, seed))
        fit = pglm.fit_penalized_logistic(d, LambdaGrid(0.02), seed=seed)
        empty += fit.active_set == ()
        if fit.active_set == ():
            assert fit.coefficients[0] == pytest.approx(np.log(d.a.mean() / (1 - d.a.mean())), abs=1e-6)
    assert empty >= 190


@pytest.mark.slow
def test_scenario_support_recovery_large_n():
    outcome_hits = ps_hits = 0
    for seed in range(200):
        d, _ = standardize(generate(ScenarioSpec(2 if seed % 2 else 1, "a", n=5000, seed=seed))[0])
        if seed % 2:
            arm, _ = split_by_arm(d)
            outcome_hits += pglm.fit_penalized_linear(arm, LambdaGrid(0.1), seed=seed).active_set == (3, 4)
        else:
            ps_hits += {1, 2, 3, 4} <= set(pglm.fit_penalized_logistic(d, LambdaGrid(0.02), seed=seed).active_set)
    assert outcome_hits >= 98 and ps_hits >= 98


@pytest.mark.slow
def test_scenario1_outcome_false_positives():
    fp = []
    for seed in range(100):
        d, _ = standardize(generate(ScenarioSpec(1, "a", n=2000, seed=seed))[0])
        arm, _ = split_by_arm(d)
        fp.append(len(set(pglm.fit_penalized_linear(arm, LambdaGrid(0.1), seed=seed).active_set) - {3, 4, 5, 6}))
    assert np.mean(fp) <= 0.05
