"""Case studies, seeded coverage sweeps, coverage aggregation and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import beta

from .bayes import BayesTmleResult, TmleSpecs, fit_bn_tmle, fit_btmle_m, fit_btmle_ss, fit_nuisance
from .classical import fit_classical
from .data import OutcomeKind
from .sampler import SamplerConfig
from .seeding import child_seed
from .simulate import DgpSpec, MisspecCase, case_orders, gen_dataset

__all__ = [
    "ALL_METHODS",
    "CaseStudyReport",
    "CoverageRow",
    "SweepSpec",
    "aggregate",
    "audit_sweep",
    "emit_report",
    "fit_methods",
    "jeffreys_interval",
    "read_replications",
    "replication_seed",
    "run_case_study",
    "run_sweep",
]

log = logging.getLogger(__name__)

ALL_METHODS = ("Classical", "BTmleM", "BTmleSS", "BnTmle1p", "BnTmle2p")
CASE_STUDY_METHODS = ("Classical", "BTmleM", "BTmleSS", "BnTmle1p")
CASE_CODES = {"NMS": 0, "OMS": 1, "OPMS": 2}
CASE_STUDY_EFFECT = {OutcomeKind.BINARY: 0.03, OutcomeKind.CONTINUOUS: 0.25}

REPLICATION_FIELDS = (
    "data_size", "case", "effect_size", "replication", "seed", "method",
    "ate_mean", "ci_low", "ci_high", "width", "contains_truth", "error",
)
COVERAGE_FIELDS = (
    "data_size", "case", "effect_size", "method", "n_valid", "n_failed",
    "mean_ate_mean", "mean_ate_ci_low", "mean_ate_ci_high",
    "mean_width", "width_ci_low", "width_ci_high",
    "coverage_pct", "coverage_ci_low", "coverage_ci_high",
)


def jeffreys_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed Beta(x + 1/2, n - x + 1/2) interval for a binomial proportion.

    The lower end is pinned to 0 when ``x = 0`` and the upper to 1 when ``x = n``.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    dist = beta(successes + 0.5, trials - successes + 0.5)
    low = 0.0 if successes == 0 else float(dist.ppf(tail))
    high = 1.0 if successes == trials else float(dist.ppf(1.0 - tail))
    return low, high


# -- running estimators ---------------------------------------------------------


@dataclass(frozen=True)
class MethodOutcome:
    method: str
    ate_mean: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    sd: float = math.nan
    error: str | None = None
    result: object = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def contains(self, truth: float) -> bool:
        return self.ok and self.ci_low <= truth <= self.ci_high


def _outcome_from(method: str, fit) -> MethodOutcome:
    if isinstance(fit, BayesTmleResult):
        return MethodOutcome(method, fit.ate.mean, fit.ate.ci_low, fit.ate.ci_high, fit.ate.sd, result=fit)
    return MethodOutcome(method, fit.ate, fit.ci95[0], fit.ci95[1], fit.se, result=fit)


def fit_methods(
    dataset,
    methods: Sequence[str],
    config: SamplerConfig,
    specs: TmleSpecs | None = None,
    fluctuation_form: str = "one",
) -> list[MethodOutcome]:
    """Fit each named method; failures become error outcomes instead of raising.

    The two sequential Bayesian methods share one set of nuisance posteriors.
    ``fluctuation_form`` applies to the classical and sequential methods; the
    network methods carry their form in their name.
    """
    specs = specs or TmleSpecs()
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    nuisance = None
    out = []
    for method in methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if method == "Classical":
                    fit = fit_classical(dataset, specs.outcome, specs.propensity, fluctuation_form)
                elif method in ("BTmleM", "BTmleSS"):
                    if nuisance is None:
                        nuisance = fit_nuisance(dataset, specs, config)
                    fitter = fit_btmle_m if method == "BTmleM" else fit_btmle_ss
                    fit = fitter(dataset, specs, config, fluctuation_form, nuisance=nuisance)
                else:
                    form = "one" if method == "BnTmle1p" else "two"
                    fit = fit_bn_tmle(dataset, specs, config, form)
            out.append(_outcome_from(method, fit))
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed: %s", method, exc)
            out.append(MethodOutcome(method, error=f"{type(exc).__name__}: {exc}"))
    return out


# -- case study ---------------------------------------------------------------


@dataclass(frozen=True)
class CaseStudyReport:
    dgp: DgpSpec
    truth: float
    sampler: SamplerConfig
    outcomes: tuple[MethodOutcome, ...]

    def outcome(self, method: str) -> MethodOutcome:
        for o in self.outcomes:
            if o.method == method:
                return o
        raise KeyError(method)

    def to_dict(self) -> dict:
        methods = []
        for o in self.outcomes:
            entry = {
                "method": o.method,
                "ate_mean": _num(o.ate_mean),
                "ci95": [_num(o.ci_low), _num(o.ci_high)],
                "sd": _num(o.sd),
                "contains_truth": o.contains(self.truth),
                "error": o.error,
            }
            if isinstance(o.result, BayesTmleResult):
                entry["kde"] = [[x, y] for x, y in o.result.ate.kde]
                entry["max_rhat"] = _num(o.result.diagnostics.get("max_rhat", math.nan))
            methods.append(entry)
        return {
            "kind": "case_study",
            "dgp": self.dgp.to_dict(),
            "truth": self.truth,
            "sampler": self.sampler.to_dict(),
            "methods": methods,
        }


def _num(value: float):
    value = float(value)
    return value if math.isfinite(value) else None


def run_case_study(
    outcome_kind: OutcomeKind | str,
    seed: int,
    *,
    n: int = 10000,
    effect_size: float | None = None,
    config: SamplerConfig | None = None,
    methods: Sequence[str] = CASE_STUDY_METHODS,
    specs: TmleSpecs | None = None,
) -> CaseStudyReport:
    """Generate one case-study dataset and fit every requested method on it.

    The data follow a first-order treatment and second-order outcome law;
    models are first order. The sampler seed is derived from ``seed``.
    """
    kind = OutcomeKind(outcome_kind)
    psi = CASE_STUDY_EFFECT[kind] if effect_size is None else float(effect_size)
    dgp = DgpSpec(n=n, effect_size=psi, outcome_kind=kind, seed=seed)
    config = (config or SamplerConfig()).with_seed(child_seed(seed, 100))
    outcomes = fit_methods(gen_dataset(dgp), methods, config, specs)
    return CaseStudyReport(dgp, psi, config, tuple(outcomes))


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    data_sizes: tuple[int, ...] = (25, 50, 75, 100, 150, 200, 250, 300, 350, 400, 450, 500)
    replications: int = 100
    cases: tuple[str, ...] = ("NMS", "OMS", "OPMS")
    effect_sizes: tuple[float, ...] = (0.03, 0.15)
    methods: tuple[str, ...] = ("Classical", "BnTmle1p")
    base_seed: int = 0
    worker_count: int = 1
    outcome_kind: OutcomeKind = OutcomeKind.BINARY
    label_noise: float = 0.05
    literal_paper_dgp: bool = False
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        object.__setattr__(self, "data_sizes", tuple(int(s) for s in self.data_sizes))
        object.__setattr__(self, "cases", tuple(MisspecCase(c).value for c in self.cases))
        object.__setattr__(self, "effect_sizes", tuple(float(e) for e in self.effect_sizes))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "outcome_kind", OutcomeKind(self.outcome_kind))
        if isinstance(self.sampler, dict):
            object.__setattr__(self, "sampler", SamplerConfig(**self.sampler))
        if not self.data_sizes or min(self.data_sizes) < 2:
            raise ValueError("data sizes must be at least 2")
        if self.replications < 1 or self.worker_count < 1:
            raise ValueError("replications and worker_count must be positive")
        if not self.cases or not self.effect_sizes or not self.methods:
            raise ValueError("cases, effect_sizes and methods must be nonempty")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if len(set(self.data_sizes)) != len(self.data_sizes) or len(set(self.cases)) != len(self.cases):
            raise ValueError("data sizes and cases must not repeat")
        if len({_effect_key(e) for e in self.effect_sizes}) != len(self.effect_sizes):
            raise ValueError("effect sizes must differ at 1e-6 resolution")

    @property
    def n_analyses(self) -> int:
        return len(self.data_sizes) * len(self.cases) * len(self.effect_sizes) * self.replications

    def cells(self):
        for size in self.data_sizes:
            for case in self.cases:
                for effect in self.effect_sizes:
                    yield size, case, effect

    def to_dict(self) -> dict:
        out = asdict(self)
        out["outcome_kind"] = self.outcome_kind.value
        out["sampler"] = self.sampler.to_dict()
        for key in ("data_sizes", "cases", "effect_sizes", "methods"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "SweepSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(payload) - known
        if extra:
            raise ValueError(f"unknown sweep spec keys {sorted(extra)}")
        return cls(**payload)


def _effect_key(effect: float) -> int:
    return int(round(effect * 1e6))


def replication_seed(base_seed: int, size: int, case: str, effect: float, replication: int) -> int:
    """Seed for one replication, keyed by cell values rather than list positions."""
    return child_seed(base_seed, size, CASE_CODES[MisspecCase(case).value], _effect_key(effect), replication)


@dataclass(frozen=True)
class _Task:
    size: int
    case: str
    effect: float
    replication: int
    spec: SweepSpec

    @property
    def key(self) -> tuple:
        return (self.size, self.case, _effect_key(self.effect), self.replication)


def _run_task(task: _Task) -> list[dict]:
    spec = task.spec
    seed = replication_seed(spec.base_seed, task.size, task.case, task.effect, task.replication)
    treat_order, outcome_order = case_orders(task.case, spec.literal_paper_dgp)
    dgp = DgpSpec(
        n=task.size, effect_size=task.effect, outcome_kind=spec.outcome_kind,
        treatment_order=treat_order, outcome_order=outcome_order,
        label_noise=spec.label_noise, seed=seed,
    )
    base = {
        "data_size": task.size, "case": task.case, "effect_size": task.effect,
        "replication": task.replication, "seed": seed,
    }
    try:
        dataset = gen_dataset(dgp)
    except ValueError as exc:
        log.warning("replication seed %d: %s", seed, exc)
        return [_failed_row(base, m, exc) for m in spec.methods]
    config = spec.sampler.with_seed(child_seed(seed, 100))
    rows = []
    for o in fit_methods(dataset, spec.methods, config):
        if not o.ok:
            log.warning("replication seed %d, %s: %s", seed, o.method, o.error)
        rows.append({
            **base,
            "method": o.method,
            "ate_mean": o.ate_mean,
            "ci_low": o.ci_low,
            "ci_high": o.ci_high,
            "width": o.ci_high - o.ci_low,
            "contains_truth": o.contains(task.effect),
            "error": o.error or "",
        })
    return rows


def _failed_row(base: dict, method: str, exc: Exception) -> dict:
    nan = math.nan
    return {**base, "method": method, "ate_mean": nan, "ci_low": nan, "ci_high": nan,
            "width": nan, "contains_truth": False, "error": f"{type(exc).__name__}: {exc}"}


def _format(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _append_rows(path: Path, rows: Iterable[dict]) -> None:
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(REPLICATION_FIELDS)
        for row in rows:
            writer.writerow([_format(row[k]) for k in REPLICATION_FIELDS])


def read_replications(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPLICATION_FIELDS:
            raise ValueError(f"{path}: unexpected replication columns {reader.fieldnames}")
        rows = []
        for raw in reader:
            rows.append({
                "data_size": int(raw["data_size"]),
                "case": raw["case"],
                "effect_size": float(raw["effect_size"]),
                "replication": int(raw["replication"]),
                "seed": int(raw["seed"]),
                "method": raw["method"],
                "ate_mean": float(raw["ate_mean"]),
                "ci_low": float(raw["ci_low"]),
                "ci_high": float(raw["ci_high"]),
                "width": float(raw["width"]),
                "contains_truth": raw["contains_truth"] == "1",
                "error": raw["error"],
            })
    return rows


def _row_key(row: dict) -> tuple:
    return (row["data_size"], row["case"], _effect_key(row["effect_size"]), row["replication"])


def run_sweep(spec: SweepSpec, out_dir, *, resume: bool = False) -> list["CoverageRow"]:
    """Run every replication of ``spec``, persist rows, and return coverage by cell.

    Rows go to ``replications.csv`` in ``out_dir`` in task order as each
    replication finishes. With ``resume`` the replications already on disk
    are kept and only missing ones are run; without it an existing file is an
    error. ``coverage.csv`` and ``spec.json`` are (re)written at the end.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "replications.csv"
    spec_path = out / "spec.json"
    spec_json = json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"
    done: set = set()
    if rows_path.exists():
        if not resume:
            raise FileExistsError(f"{rows_path} exists; pass resume=True to continue it")
        if spec_path.exists() and json.loads(spec_path.read_text()) != json.loads(spec_json):
            raise ValueError(f"{spec_path} describes a different sweep; refusing to resume")
        counts: dict = {}
        for row in read_replications(rows_path):
            counts[_row_key(row)] = counts.get(_row_key(row), 0) + 1
        done = {k for k, c in counts.items() if c >= len(spec.methods)}
    spec_path.write_text(spec_json)

    tasks = [
        _Task(size, case, effect, rep, spec)
        for size, case, effect in spec.cells()
        for rep in range(spec.replications)
    ]
    pending = [t for t in tasks if t.key not in done]
    log.info("sweep: %d of %d replications to run", len(pending), len(tasks))
    if spec.worker_count == 1:
        for task in pending:
            _append_rows(rows_path, _run_task(task))
    elif pending:
        with ProcessPoolExecutor(max_workers=spec.worker_count) as pool:
            for rows in pool.map(_run_task, pending):
                _append_rows(rows_path, rows)

    coverage = aggregate(read_replications(rows_path), spec)
    write_coverage_csv(coverage, out / "coverage.csv")
    return coverage


# -- aggregation ----------------------------------------------------------------


@dataclass(frozen=True)
class CoverageRow:
    data_size: int
    case: str
    effect_size: float
    method: str
    n_valid: int
    n_failed: int
    mean_ate_mean: float
    mean_ate_ci95: tuple[float, float]
    mean_width: float
    width_ci95: tuple[float, float]
    coverage_pct: float
    coverage_jeffreys_ci: tuple[float, float]

    def flat(self) -> dict:
        return {
            "data_size": self.data_size,
            "case": self.case,
            "effect_size": self.effect_size,
            "method": self.method,
            "n_valid": self.n_valid,
            "n_failed": self.n_failed,
            "mean_ate_mean": self.mean_ate_mean,
            "mean_ate_ci_low": self.mean_ate_ci95[0],
            "mean_ate_ci_high": self.mean_ate_ci95[1],
            "mean_width": self.mean_width,
            "width_ci_low": self.width_ci95[0],
            "width_ci_high": self.width_ci95[1],
            "coverage_pct": self.coverage_pct,
            "coverage_ci_low": self.coverage_jeffreys_ci[0],
            "coverage_ci_high": self.coverage_jeffreys_ci[1],
        }


def _spread(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    low, high = np.percentile(values, [2.5, 97.5])
    return float(low), float(high)


def aggregate(rows: Sequence[dict], spec: SweepSpec | None = None) -> list[CoverageRow]:
    """Fold replication rows into one :class:`CoverageRow` per cell and method.

    Failed replications are counted and left out. The intervals on the mean
    ATE and on the width are the 2.5 and 97.5 percentiles across
    replications; the coverage interval is Jeffreys, in percent. Output is
    ordered by the spec's cell order when given, otherwise sorted.
    """
    groups: dict = {}
    for row in rows:
        key = (row["data_size"], row["case"], _effect_key(row["effect_size"]), row["method"])
        groups.setdefault(key, []).append(row)
    if spec is not None:
        order = [
            (size, case, _effect_key(effect), method)
            for size, case, effect in spec.cells()
            for method in spec.methods
        ]
        order = [k for k in order if k in groups]
    else:
        order = sorted(groups, key=lambda k: (k[0], CASE_CODES.get(k[1], 99), k[2], ALL_METHODS.index(k[3]) if k[3] in ALL_METHODS else 99))
    out = []
    for key in order:
        group = sorted(groups[key], key=lambda r: r["replication"])
        valid = [r for r in group if not r["error"]]
        means = np.array([r["ate_mean"] for r in valid])
        widths = np.array([r["width"] for r in valid])
        hits = sum(1 for r in valid if r["contains_truth"])
        if valid:
            low, high = jeffreys_interval(hits, len(valid))
            pct, jeff = 100.0 * hits / len(valid), (100.0 * low, 100.0 * high)
        else:
            pct, jeff = math.nan, (math.nan, math.nan)
        out.append(CoverageRow(
            data_size=key[0],
            case=key[1],
            effect_size=group[0]["effect_size"],
            method=key[3],
            n_valid=len(valid),
            n_failed=len(group) - len(valid),
            mean_ate_mean=float(means.mean()) if valid else math.nan,
            mean_ate_ci95=_spread(means),
            mean_width=float(widths.mean()) if valid else math.nan,
            width_ci95=_spread(widths),
            coverage_pct=pct,
            coverage_jeffreys_ci=jeff,
        ))
    return out


def write_coverage_csv(rows: Sequence[CoverageRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COVERAGE_FIELDS)
        for row in rows:
            flat = row.flat()
            writer.writerow([_format(flat[k]) for k in COVERAGE_FIELDS])


def read_coverage_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for raw in reader:
            row = {}
            for k in COVERAGE_FIELDS:
                if k in ("data_size", "n_valid", "n_failed"):
                    row[k] = int(raw[k])
                elif k in ("case", "method"):
                    row[k] = raw[k]
                else:
                    row[k] = float(raw[k])
            out.append(row)
    return out


def audit_sweep(out_dir, tol: float = 1e-12) -> list[str]:
    """Recompute coverage from the persisted replications and list any mismatches."""
    out = Path(out_dir)
    spec = SweepSpec.from_dict(json.loads((out / "spec.json").read_text()))
    fresh = [r.flat() for r in aggregate(read_replications(out / "replications.csv"), spec)]
    stored = read_coverage_csv(out / "coverage.csv")
    problems = []
    if len(fresh) != len(stored):
        problems.append(f"row count {len(stored)} stored vs {len(fresh)} recomputed")
    for a, b in zip(fresh, stored):
        for k in COVERAGE_FIELDS:
            x, y = a[k], b[k]
            if isinstance(x, float):
                same = (math.isnan(x) and math.isnan(y)) or abs(x - y) <= tol * max(1.0, abs(x))
            else:
                same = x == y
            if not same:
                problems.append(f"{a['data_size']}/{a['case']}/{a['effect_size']}/{a['method']}: {k} {y!r} != {x!r}")
    return problems


# -- reports ----------------------------------------------------------------------


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def dump_json(payload, path) -> None:
    Path(path).write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")


def emit_report(in_dir, fmt: str = "csv", plot_data: bool = False) -> list[Path]:
    """Write a report for a sweep or case-study output directory.

    Sweep directories (with ``replications.csv``) get ``report.csv`` or
    ``report.json`` with one row per cell and method. Case-study directories
    (with ``case_study.json``) get the per-method comparison table. With
    ``plot_data`` sweep reports also write ``coverage_series.csv`` (coverage
    and width against data size) and case studies one ``kde_<method>.csv``
    per Bayesian method.
    """
    src = Path(in_dir)
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    written = []
    if (src / "replications.csv").exists():
        spec = SweepSpec.from_dict(json.loads((src / "spec.json").read_text())) if (src / "spec.json").exists() else None
        rows = [r.flat() for r in aggregate(read_replications(src / "replications.csv"), spec)]
        if not rows:
            raise ValueError(f"{src} holds no replication rows")
        target = src / f"report.{fmt}"
        if fmt == "csv":
            _write_table(target, COVERAGE_FIELDS, rows)
        else:
            dump_json({"kind": "sweep", "rows": rows}, target)
        written.append(target)
        if plot_data:
            series = src / "coverage_series.csv"
            fields = ("case", "effect_size", "method", "data_size", "coverage_pct",
                      "coverage_ci_low", "coverage_ci_high", "mean_width", "mean_ate_mean")
            ordered = sorted(rows, key=lambda r: (CASE_CODES[r["case"]], r["effect_size"], r["method"], r["data_size"]))
            _write_table(series, fields, ordered)
            written.append(series)
        return written
    if (src / "case_study.json").exists():
        payload = json.loads((src / "case_study.json").read_text())
        fields = ("method", "ate_mean", "ci_low", "ci_high", "sd", "contains_truth", "error")
        rows = [
            {"method": m["method"], "ate_mean": m["ate_mean"], "ci_low": m["ci95"][0],
             "ci_high": m["ci95"][1], "sd": m["sd"], "contains_truth": m["contains_truth"],
             "error": m["error"] or ""}
            for m in payload["methods"]
        ]
        if not rows:
            raise ValueError(f"{src} holds no method results")
        target = src / f"report.{fmt}"
        if fmt == "csv":
            _write_table(target, fields, rows)
        else:
            dump_json({"kind": "case_study_table", "truth": payload["truth"], "rows": rows}, target)
        written.append(target)
        if plot_data:
            for m in payload["methods"]:
                if m.get("kde"):
                    kde_path = src / f"kde_{m['method']}.csv"
                    _write_table(kde_path, ("x", "density"), [{"x": x, "density": y} for x, y in m["kde"]])
                    written.append(kde_path)
        return written
    raise FileNotFoundError(f"{src} holds neither replications.csv nor case_study.json")


def _write_table(path: Path, fields: Sequence[str], rows: Sequence[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow(["" if row[k] is None else _format(row[k]) for k in fields])

