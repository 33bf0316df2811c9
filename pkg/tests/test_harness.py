import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import betainc

from bayestmle.harness import (
    SweepSpec,
    aggregate,
    audit_sweep,
    emit_report,
    fit_methods,
    jeffreys_interval,
    read_coverage_csv,
    read_replications,
    replication_seed,
    run_case_study,
    run_sweep,
)
from bayestmle.sampler import SamplerConfig
from bayestmle.schemas import validate

TINY = SamplerConfig(n_chains=2, n_warmup=100, n_draws=100, seed=1)


def bisect_beta_quantile(a, b, q):
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if betainc(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


class TestJeffreys:
    def test_boundaries(self):
        low, high = jeffreys_interval(0, 20)
        assert low == 0.0 and 0 < high < 0.2
        low, high = jeffreys_interval(20, 20)
        assert high == 1.0 and 0.8 < low < 1

    def test_against_bisection(self):
        low, high = jeffreys_interval(93, 100)
        assert low == pytest.approx(bisect_beta_quantile(93.5, 7.5, 0.025), abs=1e-9)
        assert high == pytest.approx(bisect_beta_quantile(93.5, 7.5, 0.975), abs=1e-9)

    @given(st.integers(1, 200), st.data())
    def test_contains_point_estimate(self, n, data):
        x = data.draw(st.integers(0, n))
        low, high = jeffreys_interval(x, n)
        assert 0 <= low <= x / n <= high <= 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            jeffreys_interval(3, 2)
        with pytest.raises(ValueError):
            jeffreys_interval(0, 0)


def row(rep, method, ate, low, high, truth=0.1, error=""):
    return {
        "data_size": 50, "case": "NMS", "effect_size": truth, "replication": rep, "seed": rep,
        "method": method, "ate_mean": ate, "ci_low": low, "ci_high": high, "width": high - low,
        "contains_truth": (not error) and low <= truth <= high, "error": error,
    }


class TestAggregate:
    def test_arithmetic_by_hand(self):
        rows = [
            row(0, "Classical", 0.1, 0.0, 0.2),
            row(1, "Classical", 0.3, 0.2, 0.4),
            row(2, "Classical", 0.2, 0.05, 0.35),
            row(3, "Classical", math.nan, math.nan, math.nan, error="EstimationError: x"),
        ]
        (c,) = aggregate(rows)
        assert c.n_valid == 3 and c.n_failed == 1
        assert c.coverage_pct == pytest.approx(200 / 3)
        assert c.mean_ate_mean == pytest.approx(0.2)
        assert c.mean_width == pytest.approx((0.2 + 0.2 + 0.3) / 3)
        low, high = jeffreys_interval(2, 3)
        assert c.coverage_jeffreys_ci == pytest.approx((100 * low, 100 * high))
        assert c.mean_ate_ci95 == pytest.approx(tuple(np.percentile([0.1, 0.3, 0.2], [2.5, 97.5])))

    def test_groups_by_method(self):
        rows = [row(0, "BnTmle1p", 0.1, 0, 0.2), row(0, "Classical", 0.1, 0.15, 0.2)]
        out = {c.method: c for c in aggregate(rows)}
        assert out["BnTmle1p"].coverage_pct == 100.0 and out["Classical"].coverage_pct == 0.0

    def test_all_failed_cell(self):
        (c,) = aggregate([row(0, "Classical", math.nan, math.nan, math.nan, error="boom")])
        assert c.n_valid == 0 and math.isnan(c.coverage_pct)


class TestSeeds:
    def test_injective_over_grid(self):
        spec = SweepSpec()
        seeds = {
            replication_seed(0, size, case, effect, rep)
            for size, case, effect in spec.cells()
            for rep in range(100)
        }
        assert len(seeds) == spec.n_analyses

    def test_keyed_by_values(self):
        assert replication_seed(0, 100, "OMS", 0.15, 3) == replication_seed(0, 100, "OMS", 0.15 + 1e-12, 3)
        assert replication_seed(0, 100, "OMS", 0.15, 3) != replication_seed(1, 100, "OMS", 0.15, 3)


class TestSpec:
    def test_round_trip(self):
        spec = SweepSpec(data_sizes=(30, 60), replications=3, sampler=TINY)
        back = SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert back == spec
        validate(spec.to_dict(), "sweep_spec")

    @pytest.mark.parametrize("bad", [
        {"data_sizes": [1]}, {"replications": 0}, {"methods": ["Nope"]},
        {"cases": ["NMS", "NMS"]}, {"effect_sizes": [0.1, 0.1000000001]}, {"colour": 1},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            SweepSpec.from_dict(bad)


def classical_spec(**kw):
    base = dict(data_sizes=(40, 80), replications=4, cases=("NMS", "OMS"), effect_sizes=(0.15,),
                methods=("Classical",), base_seed=3, sampler=TINY)
    base.update(kw)
    return SweepSpec(**base)


class TestSweep:
    def test_outputs_and_audit(self, tmp_path):
        rows = run_sweep(classical_spec(), tmp_path)
        assert len(rows) == 4
        assert len(read_replications(tmp_path / "replications.csv")) == 16
        assert audit_sweep(tmp_path) == []
        stored = read_coverage_csv(tmp_path / "coverage.csv")
        assert [r["coverage_pct"] for r in stored] == [r.coverage_pct for r in rows]

    def test_audit_detects_tampering(self, tmp_path):
        run_sweep(classical_spec(), tmp_path)
        path = tmp_path / "coverage.csv"
        text = path.read_text().splitlines()
        fields = text[1].split(",")
        fields[4] = "999"  # n_valid
        text[1] = ",".join(fields)
        path.write_text("\n".join(text) + "\n")
        assert audit_sweep(tmp_path)

    def test_resume_matches_fresh_run(self, tmp_path):
        spec = classical_spec()
        run_sweep(spec, tmp_path / "fresh")
        partial = tmp_path / "partial"
        run_sweep(classical_spec(replications=2), partial)
        # same seeds per replication, so the first two replications carry over
        (partial / "spec.json").unlink()
        run_sweep(spec, partial, resume=True)
        key = lambda r: (r["data_size"], r["case"], r["replication"], r["method"])  # noqa: E731
        fresh = sorted(read_replications(tmp_path / "fresh" / "replications.csv"), key=key)
        resumed = sorted(read_replications(partial / "replications.csv"), key=key)
        assert fresh == resumed
        assert (tmp_path / "fresh" / "coverage.csv").read_text() == (partial / "coverage.csv").read_text()

    def test_existing_output_needs_resume(self, tmp_path):
        run_sweep(classical_spec(), tmp_path)
        with pytest.raises(FileExistsError):
            run_sweep(classical_spec(), tmp_path)
        with pytest.raises(ValueError):
            run_sweep(classical_spec(base_seed=4), tmp_path, resume=True)

    def test_worker_count_does_not_change_results(self, tmp_path):
        spec = classical_spec(data_sizes=(40,), replications=2, cases=("NMS",), methods=("Classical", "BnTmle1p"))
        run_sweep(spec, tmp_path / "one")
        run_sweep(SweepSpec(**{**spec.__dict__, "worker_count": 2}), tmp_path / "two")
        for name in ("replications.csv", "coverage.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_report_round_trip(self, tmp_path):
        run_sweep(classical_spec(), tmp_path)
        paths = emit_report(tmp_path, "csv", plot_data=True)
        assert {p.name for p in paths} == {"report.csv", "coverage_series.csv"}
        with (tmp_path / "report.csv").open() as fh:
            report = list(csv.DictReader(fh))
        stored = read_coverage_csv(tmp_path / "coverage.csv")
        assert [float(r["coverage_pct"]) for r in report] == [r["coverage_pct"] for r in stored]
        emit_report(tmp_path, "json")
        validate(json.loads((tmp_path / "report.json").read_text()), "sweep_report")

    def test_report_needs_inputs(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            emit_report(tmp_path)


class TestMethods:
    def test_failures_are_captured(self):
        from bayestmle import Dataset

        ds = Dataset(np.zeros((6, 1)) + np.arange(6)[:, None], np.ones(6), np.arange(6) % 2, "binary")
        outcomes = fit_methods(ds, ["Classical", "BnTmle1p"], TINY)
        assert all(not o.ok and o.error for o in outcomes)
        assert not outcomes[0].contains(0.0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            fit_methods(None, ["Nope"], TINY)

    def test_case_study_small(self, tmp_path):
        report = run_case_study("binary", 2, n=300, config=TINY, methods=("Classical", "BTmleM"))
        payload = report.to_dict()
        validate(json.loads(json.dumps(payload)), "case_study")
        assert payload["truth"] == 0.03 and len(payload["methods"]) == 2
        assert len(payload["methods"][1]["kde"]) == 512
