import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayestmle.data import ModelOrder, OutcomeKind
from bayestmle.glm import expit
from bayestmle.simulate import (
    DgpSpec,
    MisspecCase,
    RegenerationError,
    case_orders,
    gen_confounders,
    gen_dataset,
    gen_outcome_binary,
    gen_treatment,
    outcome_mean,
    treatment_logit,
)


@pytest.fixture(scope="module")
def big_x():
    return gen_confounders(100_000, 2024)


class TestConfounders:
    def test_marginals(self, big_x):
        n = big_x.shape[0]
        se = lambda p: 4 * np.sqrt(p * (1 - p) / n)  # noqa: E731
        assert abs(big_x[:, 0].mean() - 0.4) < se(0.4)
        for level, p in enumerate((0.3, 0.5, 0.2)):
            assert abs(np.mean(big_x[:, 1] == level) - p) < se(p)
        assert abs(big_x[:, 2].mean()) < 4 / np.sqrt(n)
        assert abs(big_x[:, 2].std() - 1) < 0.01

    def test_deterministic(self):
        assert np.array_equal(gen_confounders(50, 1), gen_confounders(50, 1))
        assert not np.array_equal(gen_confounders(50, 1), gen_confounders(50, 2))


class TestTreatment:
    def test_first_order_logit_by_hand(self):
        x = np.array([[1.0, 2.0, -1.0]])
        assert treatment_logit(x, "first")[0] == pytest.approx(-1.4 + 0.3 + 1.0 + 0.9)

    def test_second_order_logit_by_hand(self):
        x = np.array([[1.0, 2.0, -1.0]])
        extra = 0.07 * 1.0 - 0.02 * 2.0 + 0.06 * 2.0 * -1.0
        assert treatment_logit(x, "second")[0] == pytest.approx(-1.4 + 0.3 + 1.0 + 0.9 + extra)

    def test_treated_fraction(self, big_x):
        a = gen_treatment(big_x, "first", 5)
        want = expit(treatment_logit(big_x, "first")).mean()
        assert abs(a.mean() - want) < 4 * np.sqrt(want * (1 - want) / a.size)


class TestOutcome:
    def test_binary_mean_by_hand(self):
        x = np.array([[0.0, 0.0, 0.0]])
        p, clamped = outcome_mean(x, 1.0, 0.1, "binary", "first")
        assert p[0] == pytest.approx(expit(-1.3) + 0.1) and clamped == 0

    def test_clamping_counted(self):
        x = np.array([[0.0, 2.0, 5.0]])  # control probability near 1
        p, clamped = outcome_mean(x, 1.0, 0.2, "binary", "first")
        assert p[0] == 1.0 and clamped == 1

    def test_label_noise_flip_fraction(self, big_x):
        a = gen_treatment(big_x, "first", 5)
        clean, _ = gen_outcome_binary(big_x, a, 0.03, "second", 0.0, 9)
        noisy, _ = gen_outcome_binary(big_x, a, 0.03, "second", 0.05, 9)
        flipped = np.mean(clean != noisy)
        assert abs(flipped - 0.05) < 4 * np.sqrt(0.05 * 0.95 / a.size)

    def test_continuous_residual_sd(self):
        ds = gen_dataset(DgpSpec(n=50_000, effect_size=0.25, outcome_kind="continuous", seed=3))
        mean, _ = outcome_mean(ds.confounders, ds.treatment, 0.25, OutcomeKind.CONTINUOUS)
        assert np.std(ds.outcome - mean) == pytest.approx(0.1, rel=0.02)

    @given(st.floats(-0.3, 0.3), st.integers(0, 2**31 - 1))
    def test_binary_outcomes_are_zero_one(self, effect, seed):
        ds = gen_dataset(DgpSpec(n=40, effect_size=effect, seed=seed))
        assert set(np.unique(ds.outcome)) <= {0.0, 1.0}


class TestCases:
    def test_orders(self):
        assert case_orders("NMS") == (ModelOrder.FIRST, ModelOrder.FIRST)
        assert case_orders("OMS") == (ModelOrder.FIRST, ModelOrder.SECOND)
        assert case_orders("OPMS") == (ModelOrder.SECOND, ModelOrder.SECOND)
        assert case_orders(MisspecCase.OPMS, literal_paper_dgp=True) == (ModelOrder.SECOND, ModelOrder.FIRST)

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            case_orders("XYZ")


class TestDataset:
    def test_deterministic(self):
        spec = DgpSpec(n=300, seed=12)
        assert gen_dataset(spec) == gen_dataset(spec)

    def test_spec_round_trip(self):
        spec = DgpSpec(n=20, outcome_kind="continuous", treatment_order="second", seed=4)
        assert DgpSpec.from_dict(spec.to_dict()) == spec

    def test_empty_arm_raises(self):
        # n=1 is allowed; find a tiny n whose draws leave one arm empty
        for seed in range(200):
            try:
                gen_dataset(DgpSpec(n=2, seed=seed))
            except RegenerationError:
                return
        pytest.fail("no seed produced a single-arm dataset")

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            DgpSpec(label_noise=1.0)
        with pytest.raises(ValueError):
            DgpSpec(n=0)
