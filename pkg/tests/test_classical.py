import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayestmle import Dataset, DgpSpec, gen_dataset
from bayestmle.classical import (
    EstimationError,
    clever_covariate,
    clever_covariate_two,
    fit_classical,
    targeted_predict,
)
from bayestmle.glm import expit
from bayestmle.simulate import gen_confounders, outcome_mean


class TestCleverCovariate:
    def test_values_by_hand(self):
        assert clever_covariate(1, 0.25) == pytest.approx(4.0)
        assert clever_covariate(0, 0.25) == pytest.approx(-4 / 3)
        assert clever_covariate_two(1, 0.25) == pytest.approx((0.0, 4.0))
        assert clever_covariate_two(0, 0.25) == pytest.approx((4 / 3, 0.0))

    @given(st.integers(0, 1), st.floats(1e-6, 1 - 1e-6))
    def test_one_param_is_difference_of_two(self, a, p):
        h0, h1 = clever_covariate_two(a, p)
        assert clever_covariate(a, p) == pytest.approx(h1 - h0, rel=1e-12)

    def test_extreme_propensity_is_clamped(self):
        flags = []
        h = clever_covariate(np.array([1.0, 0.0]), np.array([0.0, 1.0]), flags)
        assert np.all(np.isfinite(h)) and flags == [2]


class TestFit:
    def test_targeted_predict_by_hand(self, binary_500):
        fit = fit_classical(binary_500)
        q_y, q_a = fit.theta_Y.size, fit.theta_A.size
        # zero nuisance coefficients: Y_init = 0.5, p = 0.5, H(a=1) = 2
        pinned = dataclasses.replace(fit, theta_Y=np.zeros(q_y), theta_A=np.zeros(q_a), epsilon=np.array([0.1]))
        np.testing.assert_allclose(targeted_predict(pinned, binary_500, 1), expit(0.2), rtol=1e-12)
        np.testing.assert_allclose(targeted_predict(pinned, binary_500, 0), expit(-0.2), rtol=1e-12)

    def test_ate_is_mean_of_targeted_predictions(self, binary_500, continuous_500):
        for ds in (binary_500, continuous_500):
            fit = fit_classical(ds)
            diff = targeted_predict(fit, ds, 1) - targeted_predict(fit, ds, 0)
            assert fit.ate == pytest.approx(diff.mean(), rel=1e-10)

    def test_ci_and_influence_curve(self, binary_500):
        fit = fit_classical(binary_500)
        assert fit.ci95 == pytest.approx((fit.ate - 1.96 * fit.se, fit.ate + 1.96 * fit.se))
        assert abs(fit.influence_values.mean()) < 1e-6
        se = fit.influence_values.std(ddof=1) / math.sqrt(binary_500.n)
        assert fit.se == pytest.approx(se, rel=1e-10)

    def test_score_equation_solved(self, binary_500):
        for form in ("one", "two"):
            assert abs(fit_classical(binary_500, fluctuation_form=form).diagnostics["score"]) < 1e-6

    def test_two_param_close_to_one_param(self, binary_500):
        one = fit_classical(binary_500, fluctuation_form="one")
        two = fit_classical(binary_500, fluctuation_form="two")
        assert two.epsilon.shape == (2,)
        assert abs(one.ate - two.ate) < one.se

    def test_continuous_scale_invariance(self, continuous_500):
        fit = fit_classical(continuous_500)
        ds = continuous_500
        scaled = Dataset(ds.confounders, ds.treatment, 10 * ds.outcome + 3, "continuous", ds.column_names, ds.column_kinds)
        fit10 = fit_classical(scaled)
        assert fit10.ate == pytest.approx(10 * fit.ate, rel=1e-8)
        assert fit10.se == pytest.approx(10 * fit.se, rel=1e-8)

    def test_single_arm_rejected(self):
        ds = Dataset(np.random.default_rng(0).normal(size=(10, 1)), np.ones(10), np.arange(10) % 2, "binary")
        with pytest.raises(EstimationError):
            fit_classical(ds)

    def test_propensity_clipping_option(self, binary_500):
        fit = fit_classical(binary_500, clip_propensity=True)
        assert np.isfinite(fit.ate)


def test_randomized_treatment_matches_difference_in_means():
    rng = np.random.default_rng(7)
    n = 20000
    x = gen_confounders(n, 123)
    a = (rng.uniform(size=n) < 0.5).astype(float)
    prob, _ = outcome_mean(x, a, 0.1, "binary", "first")
    y = (rng.uniform(size=n) < prob).astype(float)
    fit = fit_classical(Dataset(x, a, y, "binary", ("X1", "X2", "X3")))
    dim = y[a == 1].mean() - y[a == 0].mean()
    assert abs(fit.ate - dim) < 2 * fit.se


def test_width_shrinks_with_root_d():
    widths = {100: [], 400: []}
    for rep in range(20):
        for n in widths:
            fit = fit_classical(gen_dataset(DgpSpec(n=n, effect_size=0.15, outcome_order="first", seed=1000 + rep)))
            widths[n].append(fit.ci95[1] - fit.ci95[0])
    ratio = np.mean(widths[400]) / np.mean(widths[100])
    assert 0.4 <= ratio <= 0.6


def test_double_robustness_with_misspecified_outcome():
    psi = 0.03
    # the true ATE, including rows where p0 + psi is clamped at 1
    x = gen_confounders(2_000_000, 99)
    p1, _ = outcome_mean(x, 1.0, psi, "binary", "second")
    p0, _ = outcome_mean(x, 0.0, psi, "binary", "second")
    truth = float(np.mean(p1 - p0))
    hits = 0
    for rep in range(100):
        ds = gen_dataset(DgpSpec(n=10000, effect_size=psi, label_noise=0.0, seed=5000 + rep))
        fit = fit_classical(ds)
        hits += abs(fit.ate - truth) < 3 * fit.se
    assert hits >= 90
