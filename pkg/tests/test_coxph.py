"""Cox model tests: partial likelihood, penalized fitting, inference, baseline."""

import numpy as np
import pytest

from survkit.coxph import (
    breslow_baseline,
    breslow_from_scores,
    fit_coxph,
    neg_log_partial_likelihood,
    predict_survival,
    wald_stats,
)
from survkit.errors import ComputationError, DataError, ScalingWarning
from survkit.impute import nelson_aalen


def exponential_cohort(rng, beta, n, censor_scale=None):
    """Exponential event times with hazard proportional to exp(x . beta)."""
    beta = np.asarray(beta, dtype=float)
    x = rng.normal(0.0, 1.0, (n, len(beta)))
    eta = x @ beta
    t_event = rng.exponential(1.0, n) / np.exp(eta)
    if censor_scale is None:
        return x, t_event, np.ones(n)
    c = rng.exponential(censor_scale, n)
    times = np.minimum(t_event, c)
    events = (t_event <= c).astype(float)
    return x, times, events


# -- partial likelihood ----------------------------------------------------------


def test_nlpl_at_zero_is_log_riskset_sizes():
    # with beta = 0 every subject has unit hazard: value = log 3 + log 2 + log 1
    x = np.array([[0.5], [-0.2], [0.9]])
    value, grad = neg_log_partial_likelihood(
        np.zeros(1), x, [1.0, 2.0, 3.0], [1.0, 1.0, 1.0]
    )
    assert value == pytest.approx(np.log(6.0), abs=1e-12)
    # chain rule: d/dbeta = x^T d/deta with d/deta = (-2/3, -1/6, 5/6)
    expected = x[:, 0] @ np.array([-2 / 3, -1 / 6, 5 / 6])
    assert grad[0] == pytest.approx(expected, abs=1e-12)


def test_nlpl_gradient_finite_differences():
    rng = np.random.default_rng(2)
    x, t, e = exponential_cohort(rng, [0.5, -0.3], 40, censor_scale=2.0)
    t = np.round(t, 1) + 0.1  # force some ties
    beta = rng.normal(0.0, 0.5, 2)
    _, grad = neg_log_partial_likelihood(beta, x, t, e)
    eps = 1e-6
    for j in range(2):
        hi, lo = beta.copy(), beta.copy()
        hi[j] += eps
        lo[j] -= eps
        fd = (
            neg_log_partial_likelihood(hi, x, t, e)[0]
            - neg_log_partial_likelihood(lo, x, t, e)[0]
        ) / (2 * eps)
        assert grad[j] == pytest.approx(fd, abs=1e-6)


# -- fitting ----------------------------------------------------------------------


def test_fit_recovers_binary_log_hazard_ratio():
    """Two exponential groups with true hazard ratio 2 (log HR 0.693)."""
    rng = np.random.default_rng(42)
    n = 5000
    g = (rng.random(n) < 0.5).astype(float)
    t = rng.exponential(1.0, n) / np.exp(np.log(2.0) * g)
    model = fit_coxph(g[:, None], t, np.ones(n), names=["group"])
    assert model.converged
    assert 0.62 <= model.beta[0] <= 0.77


def test_fit_matches_grid_search_oracle():
    """1-D maximizer agrees with a dense scan of the raw partial likelihood."""
    rng = np.random.default_rng(5)
    x, t, e = exponential_cohort(rng, [0.6], 300, censor_scale=2.0)
    model = fit_coxph(x, t, e)
    grid = np.arange(0.0, 1.2001, 1e-4)
    vals = [neg_log_partial_likelihood(np.array([b]), x, t, e)[0] for b in grid]
    best = grid[int(np.argmin(vals))]
    assert abs(model.beta[0] - best) < 2e-4


def test_objective_decreases_monotonically():
    rng = np.random.default_rng(7)
    x, t, e = exponential_cohort(rng, [0.4, -0.4, 0.2], 200, censor_scale=3.0)
    model = fit_coxph(x, t, e, l1=0.01, l2=0.01)
    hist = np.array(model.objective_history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert model.converged


def test_translation_invariance_of_coefficients():
    # shifting a covariate column leaves the partial-likelihood maximizer alone
    rng = np.random.default_rng(11)
    x, t, e = exponential_cohort(rng, [0.5, -0.2], 250, censor_scale=2.0)
    m0 = fit_coxph(x, t, e)
    with pytest.warns(ScalingWarning):
        m1 = fit_coxph(x + 7.0, t, e)
    np.testing.assert_allclose(m1.beta, m0.beta, atol=2e-6)


def test_huge_l1_zeroes_everything():
    rng = np.random.default_rng(3)
    x, t, e = exponential_cohort(rng, [0.7, -0.5], 150, censor_scale=2.0)
    model = fit_coxph(x, t, e, l1=10.0)
    np.testing.assert_array_equal(model.beta, np.zeros(2))
    assert model.converged


def test_penalties_shrink_toward_zero():
    rng = np.random.default_rng(13)
    x, t, e = exponential_cohort(rng, [0.8, -0.6], 400, censor_scale=2.0)
    free = fit_coxph(x, t, e)
    l2fit = fit_coxph(x, t, e, l2=0.5)
    l1fit = fit_coxph(x, t, e, l1=0.05)
    assert np.linalg.norm(l2fit.beta) < np.linalg.norm(free.beta)
    assert np.abs(l1fit.beta).sum() < np.abs(free.beta).sum()
    assert np.all(np.abs(l2fit.beta) > 0)  # ridge shrinks but keeps support


def test_final_nlpl_is_raw_likelihood_at_solution():
    rng = np.random.default_rng(17)
    x, t, e = exponential_cohort(rng, [0.5], 120, censor_scale=2.0)
    model = fit_coxph(x, t, e, l2=0.1)
    raw, _ = neg_log_partial_likelihood(model.beta, x, t, e)
    assert model.final_nlpl == pytest.approx(raw, rel=1e-12)


def test_separation_is_detected():
    """A separating covariate on a tiny scale walks beta past the bound.

    With a 0.01-scale group indicator the optimizer needs |beta| in the
    thousands, so it crosses the +/-50 separation bound while the objective
    is still falling instead of flattening out numerically first.
    """
    t = np.r_[np.arange(1.0, 11.0), np.arange(100.0, 110.0)]
    e = np.ones(20)
    g = np.r_[np.ones(10), np.zeros(10)] * 0.01
    with pytest.warns(UserWarning, match="separation"):
        model = fit_coxph(g[:, None], t, e, max_iter=20000)
    assert model.separation
    assert not model.converged
    assert model.baseline is None


def test_input_validation():
    x = np.array([[1.0], [2.0]])
    with pytest.raises(DataError):
        fit_coxph(x, [1.0], [1.0, 0.0])
    with pytest.raises(DataError):
        fit_coxph(x, [1.0, 2.0], [1.0, 0.0], l1=-0.1)
    with pytest.raises(DataError):
        fit_coxph(x, [1.0, 2.0], [1.0, 0.0], names=["a", "b"])
    with pytest.raises(DataError):
        fit_coxph(np.array([[np.nan], [1.0]]), [1.0, 2.0], [1.0, 0.0])
    with pytest.raises(DataError):
        fit_coxph(np.empty((2, 0)), [1.0, 2.0], [1.0, 0.0])


def test_warm_start_agrees_with_cold_start():
    rng = np.random.default_rng(19)
    x, t, e = exponential_cohort(rng, [0.5, -0.3], 200, censor_scale=2.0)
    cold = fit_coxph(x, t, e)
    warm = fit_coxph(x, t, e, init=cold.beta)
    # both runs stop inside the solver tolerance band around the optimum
    np.testing.assert_allclose(warm.beta, cold.beta, atol=1e-4)
    assert warm.n_iter <= cold.n_iter


# -- Wald inference ----------------------------------------------------------------


def test_wald_matches_numeric_information():
    """Standard errors agree with a finite-difference observed information."""
    rng = np.random.default_rng(23)
    x, t, e = exponential_cohort(rng, [0.6, -0.4], 500, censor_scale=2.0)
    model = fit_coxph(x, t, e)
    rows = wald_stats(model)

    eps = 1e-5
    p = 2
    hess = np.empty((p, p))
    for j in range(p):
        hi, lo = model.beta.copy(), model.beta.copy()
        hi[j] += eps
        lo[j] -= eps
        g_hi = neg_log_partial_likelihood(hi, x, t, e)[1]
        g_lo = neg_log_partial_likelihood(lo, x, t, e)[1]
        hess[:, j] = (g_hi - g_lo) / (2 * eps)
    se_fd = np.sqrt(np.diag(np.linalg.inv((hess + hess.T) / 2)))
    for j, row in enumerate(rows):
        assert row.se == pytest.approx(se_fd[j], rel=1e-4)
        assert row.hr == pytest.approx(np.exp(row.beta))
        assert row.hr_low == pytest.approx(np.exp(row.beta - 1.96 * row.se))
        assert row.hr_high == pytest.approx(np.exp(row.beta + 1.96 * row.se))
        assert 0.0 <= row.p_value <= 1.0
    # a strong true effect at n=500 should be decisively significant
    assert rows[0].p_value < 1e-6


def test_wald_refuses_penalized_fits():
    rng = np.random.default_rng(29)
    x, t, e = exponential_cohort(rng, [0.5], 100, censor_scale=2.0)
    model = fit_coxph(x, t, e, l1=0.01)
    with pytest.raises(ComputationError):
        wald_stats(model)


# -- baseline and prediction ---------------------------------------------------------


def test_breslow_at_zero_scores_is_nelson_aalen():
    rng = np.random.default_rng(31)
    t = np.round(rng.exponential(10.0, 60), 0) + 1.0
    e = (rng.random(60) < 0.6).astype(float)
    bres = breslow_from_scores(t, e, np.zeros(60))
    na = nelson_aalen(t, e)
    np.testing.assert_array_equal(bres.knots, na.knots)
    np.testing.assert_allclose(bres.values, na.values, rtol=1e-14)


def test_heavy_ridge_baseline_matches_nelson_aalen():
    # l2 large enough pins beta at ~0, so the fitted baseline is Nelson-Aalen
    rng = np.random.default_rng(37)
    x, t, e = exponential_cohort(rng, [0.5], 80, censor_scale=2.0)
    model = fit_coxph(x, t, e, l2=1e12)
    assert abs(model.beta[0]) < 1e-8
    na = nelson_aalen(t, e)
    np.testing.assert_allclose(model.baseline.values, na.values, rtol=1e-6)


def test_breslow_underflow_reports_error():
    with pytest.raises(ComputationError):
        breslow_from_scores(
            np.array([1.0, 2.0, 3.0]),
            np.array([0.0, 1.0, 1.0]),
            np.array([800.0, -800.0, -800.0]),
        )


def test_predict_survival_values_and_shape():
    rng = np.random.default_rng(41)
    x, t, e = exponential_cohort(rng, [0.5], 100, censor_scale=2.0)
    model = fit_coxph(x, t, e)
    times = np.array([0.1, 0.5, 1.0, 2.0])
    curves = predict_survival(model, x[:5], times)
    assert len(curves) == 5
    h0 = model.baseline(times)
    for i, c in enumerate(curves):
        risk = np.exp(model.beta[0] * x[i, 0])
        np.testing.assert_allclose(np.asarray(c(times)), np.exp(-h0 * risk), rtol=1e-12)
        vals = np.asarray(c(times))
        assert np.all(np.diff(vals) <= 0)
        assert np.all((0.0 <= vals) & (vals <= 1.0))
    with pytest.raises(DataError):
        predict_survival(model, x[:2], times[::-1])


def test_breslow_baseline_wrapper():
    rng = np.random.default_rng(43)
    x, t, e = exponential_cohort(rng, [0.4], 50, censor_scale=2.0)
    model = fit_coxph(x, t, e)
    h = breslow_baseline(model, x, t, e)
    np.testing.assert_allclose(h.values, model.baseline.values, rtol=1e-12)
