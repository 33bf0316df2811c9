import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bayestmle.data import (
    AteDistribution,
    ColumnKind,
    Dataset,
    DataValidationError,
    DegenerateColumnError,
    EncodingError,
    EncodingMeta,
    ModelOrder,
    ModelRole,
    ModelSpec,
    OutcomeKind,
    PosteriorDraws,
    PredictionKind,
    PredictionMatrix,
    SchemaError,
    apply_design,
    build_design,
    read_csv,
    write_csv,
)

KINDS = (ColumnKind.BINARY, ColumnKind.CATEGORICAL, ColumnKind.CONTINUOUS)


def toy():
    # five rows, hand-checkable encodings
    x = np.array([
        [0, 0, 1.0],
        [1, 1, 2.0],
        [0, 2, 3.0],
        [1, 1, 4.0],
        [0, 0, 5.0],
    ])
    return Dataset(x, [0, 1, 0, 1, 1], [0, 1, 1, 0, 1], "binary", ("X1", "X2", "X3"), KINDS)


def prop(order="first"):
    return ModelSpec(order, ModelRole.PROPENSITY)


def out(order="first"):
    return ModelSpec(order, ModelRole.OUTCOME)


@st.composite
def datasets(draw, min_rows=3, max_rows=40):
    n = draw(st.integers(min_rows, max_rows))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    x1 = rng.integers(0, 2, n).astype(float)
    x2 = rng.integers(0, 3, n).astype(float)
    x3 = rng.normal(size=n) * draw(st.floats(0.1, 50.0)) + draw(st.floats(-100, 100))
    kind = draw(st.sampled_from(["binary", "continuous"]))
    y = rng.integers(0, 2, n).astype(float) if kind == "binary" else rng.normal(size=n)
    return Dataset(np.column_stack([x1, x2, x3]), rng.integers(0, 2, n), y, kind, ("X1", "X2", "X3"), KINDS)


class TestDatasetValidation:
    def test_row_mismatch(self):
        with pytest.raises(DataValidationError):
            Dataset(np.zeros((3, 1)), [0, 1], [0, 1, 0], "binary")

    def test_non_binary_treatment(self):
        with pytest.raises(DataValidationError):
            Dataset(np.zeros((2, 1)), [0, 2], [0, 1], "binary")

    def test_non_binary_outcome(self):
        with pytest.raises(DataValidationError):
            Dataset(np.zeros((2, 1)), [0, 1], [0, 0.5], "binary")

    def test_continuous_outcome_accepts_reals(self):
        ds = Dataset(np.zeros((2, 1)), [0, 1], [0.3, -1.7], "continuous")
        assert ds.n == 2 and ds.outcome_kind is OutcomeKind.CONTINUOUS

    def test_empty(self):
        with pytest.raises(DataValidationError):
            Dataset(np.zeros((0, 1)), [], [], "binary")

    def test_negative_category(self):
        with pytest.raises(DataValidationError):
            Dataset([[-1.0], [0.0]], [0, 1], [0, 1], "binary", ("C",), (ColumnKind.CATEGORICAL,))

    def test_arrays_are_read_only(self):
        ds = toy()
        with pytest.raises(ValueError):
            ds.treatment[0] = 1.0


class TestBuildDesign:
    def test_all_zero_row_first_order_propensity(self):
        ds = toy()
        z3 = (1.0 - 3.0) / np.std([1, 2, 3, 4, 5.0])
        np.testing.assert_allclose(build_design(ds, prop()).values[0], [1, 0, 0, 0, z3])

    def test_reference_coding_by_hand(self):
        d = build_design(toy(), prop())
        assert d.column_names == ("(Intercept)", "X1", "X2[1]", "X2[2]", "X3")
        np.testing.assert_array_equal(d.values[:, 2], [0, 1, 0, 1, 0])
        np.testing.assert_array_equal(d.values[:, 3], [0, 0, 1, 0, 0])

    def test_outcome_role_appends_treatment(self):
        d = build_design(toy(), out())
        assert d.column_names[-1] == "A" and d.includes_treatment
        np.testing.assert_array_equal(d.values[:, -1], [0, 1, 0, 1, 1])
        assert d.shape[1] == build_design(toy(), prop()).shape[1] + 1

    def test_second_order_is_superset(self):
        first = build_design(toy(), prop()).column_names
        second = build_design(toy(), prop("second")).column_names
        assert set(first) < set(second)
        assert "X3^2" in second and "X1:X2[1]" in second and "X2[2]:X3" in second

    def test_zero_variance_continuous(self):
        ds = Dataset(np.ones((4, 1)), [0, 1, 0, 1], [0, 1, 1, 0], "binary")
        with pytest.raises(DegenerateColumnError):
            build_design(ds, prop())

    @given(datasets())
    def test_standardized_columns(self, ds):
        d = build_design(ds, prop())
        z = d.values[:, d.column_names.index("X3")]
        assert abs(z.mean()) < 1e-10
        assert abs(z.std() - 1.0) < 1e-10

    @given(datasets())
    def test_one_hot_row_sums(self, ds):
        d = build_design(ds, prop())
        cols = [i for i, n in enumerate(d.column_names) if n.startswith("X2[")]
        assert set(np.unique(d.values[:, cols].sum(axis=1))) <= {0.0, 1.0}

    @given(datasets(), st.sampled_from(["first", "second"]))
    def test_deterministic_and_reapplicable(self, ds, order):
        d1 = build_design(ds, out(order))
        d2 = build_design(ds, out(order))
        assert np.array_equal(d1.values, d2.values)
        again = apply_design(ds.confounders, d1.encoding_meta, ds.treatment)
        assert np.array_equal(again.values, d1.values)


class TestApplyDesign:
    def test_new_row_by_hand(self):
        meta = build_design(toy(), prop()).encoding_meta
        row = apply_design([1, 2, 3.5], meta).values[0]
        sd = np.std([1, 2, 3, 4, 5.0])
        np.testing.assert_allclose(row, [1, 1, 0, 1, 0.5 / sd])

    def test_unseen_level(self):
        meta = build_design(toy(), prop()).encoding_meta
        with pytest.raises(EncodingError):
            apply_design([0, 3, 1.0], meta)

    def test_column_mismatch(self):
        meta = build_design(toy(), prop()).encoding_meta
        with pytest.raises(SchemaError):
            apply_design([[0, 1]], meta)

    def test_meta_round_trips_through_json(self):
        meta = build_design(toy(), out("second")).encoding_meta
        back = EncodingMeta.from_dict(json.loads(json.dumps(meta.to_dict())))
        assert back == meta

    def test_with_treatment(self):
        d = build_design(toy(), out())
        assert np.all(d.with_treatment(1).values[:, -1] == 1)
        with pytest.raises(EncodingError):
            build_design(toy(), prop()).with_treatment(1)


class TestCsv:
    @given(datasets(min_rows=1, max_rows=30))
    def test_round_trip(self, tmp_path_factory, ds):
        root = tmp_path_factory.mktemp("csv")
        write_csv(ds, root / "d.csv", root / "s.json")
        assert read_csv(root / "d.csv", root / "s.json") == ds

    def test_string_categories(self, tmp_path):
        (tmp_path / "d.csv").write_text("G,A,Y\nb,0,1\na,1,0\nc,1,1\n")
        (tmp_path / "s.json").write_text(json.dumps({"columns": [
            {"name": "G", "kind": "categorical", "role": "confounder"},
            {"name": "A", "kind": "binary", "role": "treatment"},
            {"name": "Y", "kind": "binary", "role": "outcome"},
        ]}))
        ds = read_csv(tmp_path / "d.csv", tmp_path / "s.json")
        np.testing.assert_array_equal(ds.confounders[:, 0], [1, 0, 2])

    def test_missing_column(self, tmp_path):
        (tmp_path / "d.csv").write_text("A,Y\n0,1\n")
        (tmp_path / "s.json").write_text(json.dumps({"columns": [
            {"name": "X", "kind": "continuous", "role": "confounder"},
            {"name": "A", "kind": "binary", "role": "treatment"},
            {"name": "Y", "kind": "binary", "role": "outcome"},
        ]}))
        with pytest.raises(SchemaError):
            read_csv(tmp_path / "d.csv", tmp_path / "s.json")


class TestContainers:
    def test_draw_counts_must_match(self):
        with pytest.raises(ValueError):
            PosteriorDraws({"a": np.zeros((4, 1)), "b": np.zeros((3, 1))}, 2, 2)

    def test_scale_blocks_positive(self):
        with pytest.raises(ValueError):
            PosteriorDraws({"sigma_o": np.array([1.0, 0.0])}, 1, 2)

    def test_merge(self):
        a = PosteriorDraws({"x": np.zeros(4)}, 2, 2)
        b = PosteriorDraws({"y": np.ones(4)}, 2, 2)
        assert set(a.merged(b).blocks) == {"x", "y"}
        with pytest.raises(ValueError):
            a.merged(a)

    def test_prediction_bounds(self):
        PredictionMatrix(np.full((2, 2), 0.5), PredictionKind.PROPENSITY_SCORE)
        with pytest.raises(ValueError):
            PredictionMatrix(np.ones((2, 2)), PredictionKind.PROPENSITY_SCORE)
        with pytest.raises(ValueError):
            PredictionMatrix(np.full((2, 2), np.nan), PredictionKind.CLEVER_COVARIATE)
        # continuous targeted outcomes are unbounded
        PredictionMatrix(np.full((2, 2), 7.0), PredictionKind.TARGETED_OUTCOME, OutcomeKind.CONTINUOUS)

    def test_ate_distribution_helpers(self):
        dist = AteDistribution(np.array([0.0, 1.0]), 0.5, 0.0, 1.0, np.array([0.0]), np.array([1.0]))
        assert dist.width == 1.0 and dist.contains(0.2) and not dist.contains(1.5)
        assert dist.kde == [(0.0, 1.0)]

    def test_model_spec_validation(self):
        assert ModelSpec("second", "propensity").order is ModelOrder.SECOND
        with pytest.raises(ValueError):
            ModelSpec(prior_scale=0.0)
