import math

import numpy as np
import pytest

from bayestmle.glm import LogDensityModel, fit_mle, logistic_log_density, make_blocks
from bayestmle.sampler import (
    InitializationError,
    SamplerConfig,
    _warmup_windows,
    initialize,
    sample,
    split_rhat,
)

CFG = SamplerConfig(n_chains=2, n_warmup=500, n_draws=2000, seed=5)


def gaussian(mean, cov, name="x"):
    mean = np.asarray(mean, dtype=float)
    prec = np.linalg.inv(np.asarray(cov, dtype=float))

    def f(x):
        r = x - mean
        return -0.5 * float(r @ prec @ r), -prec @ r

    return LogDensityModel(mean.size, f, make_blocks([(name, mean.size, "identity")]))


def batch_mcse(x, n_batches=40):
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x)
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batches)


class TestTargets:
    def test_standard_normal_moments(self):
        x = sample(gaussian([0.0], [[1.0]]), CFG)["x"][:, 0]
        assert abs(x.mean()) < 3 * batch_mcse(x) + 1e-3
        assert x.std() == pytest.approx(1.0, abs=0.06)

    def test_conjugate_normal_mean(self):
        # ten observations equal to one, unit noise, N(0, 1) prior
        y = np.ones(10)

        def f(x):
            t = x[0]
            return -0.5 * float(np.sum((y - t) ** 2)) - 0.5 * t * t, np.array([np.sum(y - t) - t])

        model = LogDensityModel(1, f, make_blocks([("mu", 1, "identity")]))
        mu = sample(model, CFG)["mu"][:, 0]
        assert abs(mu.mean() - 10 / 11) < 3 * batch_mcse(mu)
        assert mu.std() == pytest.approx(math.sqrt(1 / 11), rel=0.1)

    def test_correlated_covariance(self):
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        draws = sample(gaussian([1.0, -1.0], cov), CFG)["x"]
        np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.15, atol=0.15 * 0.9)

    def test_log_block_is_exponentiated(self):
        def f(x):
            return -0.5 * x[0] ** 2, -x

        model = LogDensityModel(1, f, make_blocks([("s", 1, "log")]))
        draws = sample(model, SamplerConfig(n_chains=1, n_warmup=200, n_draws=300, seed=1))
        assert np.all(draws["s"] > 0)

    def test_logistic_posterior_near_mle(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(2000), rng.normal(size=2000)])
        y = (rng.uniform(size=2000) < 1 / (1 + np.exp(-(X @ [0.3, -0.7])))).astype(float)
        draws = sample(logistic_log_density(X, y, prior_scale=10.0), CFG)["theta"]
        mle = fit_mle("logistic", X, y).theta
        sd = draws.std(axis=0)
        assert np.all(np.abs(draws.mean(axis=0) - mle) < 0.25 * sd)


class TestMechanics:
    def test_deterministic(self):
        model = gaussian([0.0, 0.0], np.eye(2))
        cfg = SamplerConfig(n_chains=2, n_warmup=100, n_draws=100, seed=9)
        assert np.array_equal(sample(model, cfg)["x"], sample(model, cfg)["x"])
        other = sample(model, cfg.with_seed(10))["x"]
        assert not np.array_equal(sample(model, cfg)["x"], other)

    def test_draw_shape_and_chain_order(self):
        cfg = SamplerConfig(n_chains=3, n_warmup=50, n_draws=40, seed=2)
        d = sample(gaussian([0.0, 0.0, 0.0], np.eye(3)), cfg)
        assert d["x"].shape == (120, 3) and d.m == 120
        assert len(d.diagnostics["chains"]) == 3

    def test_initialization_range_and_determinism(self):
        model = gaussian(np.zeros(6), np.eye(6))
        x0 = initialize(model, 3, chain=1)
        assert np.all(np.abs(x0) <= 2.0)
        assert np.array_equal(x0, initialize(model, 3, chain=1))
        assert not np.array_equal(x0, initialize(model, 3, chain=0))

    def test_never_finite_density(self):
        model = LogDensityModel(1, lambda x: (-math.inf, np.zeros(1)), make_blocks([("x", 1, "identity")]))
        with pytest.raises(InitializationError):
            sample(model, SamplerConfig(n_chains=1, n_warmup=10, n_draws=10))

    def test_zero_dimensional_model(self):
        model = LogDensityModel(0, lambda x: (0.0, np.zeros(0)), make_blocks([("x", 0, "identity")]))
        d = sample(model, SamplerConfig(n_chains=2, n_warmup=10, n_draws=5))
        assert d["x"].shape == (10, 0)

    def test_keep_restricts_blocks(self):
        def f(x):
            return -0.5 * float(x @ x), -x

        model = LogDensityModel(3, f, make_blocks([("a", 2, "identity"), ("b", 1, "identity")]))
        cfg = SamplerConfig(n_chains=1, n_warmup=200, n_draws=100, seed=4)
        full, kept = sample(model, cfg), sample(model, cfg, keep=("b",))
        assert set(kept.blocks) == {"b"}
        assert np.array_equal(kept["b"], full["b"])


class TestRhat:
    def test_identical_chains_near_one(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 1000))
        assert split_rhat(x) == pytest.approx(1.0, abs=0.01)

    def test_shifted_chain_flags(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 500))
        x[1] += 3.0
        assert split_rhat(x) > 1.5

    def test_by_hand(self):
        # one chain split into halves with means 0 and 2, within-variance 1
        half_a = np.array([-1.0, 1.0, -1.0, 1.0]) * math.sqrt(3) / 2
        x = np.concatenate([half_a, half_a + 2.0])[None, :]
        n, w, b = 4, 1.0, 4 * 2.0
        want = math.sqrt(((n - 1) / n * w + b / n) / w)
        assert split_rhat(x) == pytest.approx(want)

    def test_constant_chains(self):
        assert split_rhat(np.ones((2, 10))) == 1.0


class TestWarmupWindows:
    def test_default_schedule(self):
        init, ends = _warmup_windows(1000)
        assert init == 75 and ends == [100, 150, 250, 450, 950]

    def test_short_warmup_scales_buffers(self):
        init, ends = _warmup_windows(100)
        assert init == 15 and ends[-1] == 90

    def test_tiny_warmup_has_no_windows(self):
        assert _warmup_windows(10) == (10, [])
