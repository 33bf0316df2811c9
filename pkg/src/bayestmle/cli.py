"""Simulate data, fit Bayesian and classical TMLE, and run coverage sweeps.

Exit codes: 0 on success, 1 when an estimator fails, 2 on bad configuration
or input files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema

from . import harness
from .bayes import BayesTmleResult, TmleSpecs
from .classical import FluctuationForm
from .data import ModelOrder, ModelRole, ModelSpec, SchemaError, read_csv, write_csv
from .harness import SweepSpec, dump_json
from .sampler import SamplerConfig
from .schemas import validate
from .simulate import DgpSpec, MisspecCase, case_orders, gen_dataset

EXIT_OK, EXIT_ESTIMATOR, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("bayestmle")


class ConfigError(Exception):
    pass


def _load_json(path, schema: str | None = None) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if schema is not None:
        try:
            validate(payload, schema)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"{path}: {exc.message}") from exc
    return payload


def cmd_simulate(args) -> int:
    payload = _load_json(args.spec, "dgp_spec") if args.spec else {}
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.case:
        treat, outcome = case_orders(MisspecCase(args.case), args.literal_paper_dgp)
        payload["treatment_order"], payload["outcome_order"] = treat.value, outcome.value
    try:
        spec = DgpSpec.from_dict(payload)
        dataset = gen_dataset(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out / "data.csv", out / "schema.json")
    (out / "dgp.json").write_text(spec.to_json() + "\n")
    log.info("wrote %d rows to %s", dataset.n, out / "data.csv")
    return EXIT_OK


def _fit_settings(payload: dict):
    sampler = SamplerConfig(**payload.get("sampler", {}))
    if "seed" in payload:
        sampler = sampler.with_seed(payload["seed"])
    scale = payload.get("prior_scale", 1.0)
    specs = TmleSpecs(
        ModelSpec(ModelOrder(payload.get("outcome_order", "first")), ModelRole.OUTCOME, scale, scale),
        ModelSpec(ModelOrder(payload.get("propensity_order", "first")), ModelRole.PROPENSITY, scale, scale),
        payload.get("epsilon_prior_scale", 1.0),
    )
    return sampler, specs, FluctuationForm(payload.get("fluctuation_form", "one"))


def cmd_fit(args) -> int:
    payload = _load_json(args.config, "fit_config") if args.config else {}
    try:
        sampler, specs, form = _fit_settings(payload)
        dataset = read_csv(args.data, args.schema)
    except (SchemaError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    method = args.method
    if method in ("BnTmle1p", "BnTmle2p") and "fluctuation_form" in payload:
        raise ConfigError("BnTmle1p/BnTmle2p fix the fluctuation form; drop fluctuation_form")
    (outcome,) = harness.fit_methods(dataset, [method], sampler, specs, form)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if outcome.error:
        dump_json({"method": method, "error": outcome.error}, out)
        log.error("%s failed: %s", method, outcome.error)
        return EXIT_ESTIMATOR
    fit = outcome.result
    if isinstance(fit, BayesTmleResult):
        samples_path = None
        if payload.get("write_samples", False):
            samples_path = out.with_name(out.stem + "_samples.csv")
            with samples_path.open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["draw", "ate"])
                for j, v in enumerate(fit.ate.samples):
                    writer.writerow([j, repr(float(v))])
        dump_json(fit.to_dict(samples_path=samples_path.name if samples_path else None), out)
    else:
        dump_json(fit.to_dict(), out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    payload = _load_json(args.spec, "sweep_spec")
    if args.workers is not None:
        payload["worker_count"] = args.workers
    try:
        spec = SweepSpec.from_dict(payload)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        rows = harness.run_sweep(spec, args.out, resume=args.resume)
    except (FileExistsError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    failed = sum(r.n_failed for r in rows)
    if failed:
        log.warning("%d method fits failed and were left out of coverage", failed)
    log.info("wrote %s", Path(args.out) / "coverage.csv")
    return EXIT_OK


def cmd_case_study(args) -> int:
    sampler = SamplerConfig(**_load_json(args.sampler)) if args.sampler else SamplerConfig()
    report = harness.run_case_study(args.outcome, args.seed, n=args.n, config=sampler)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    validate(json.loads(json.dumps(harness._json_safe(payload))), "case_study")
    dump_json(payload, out / "case_study.json")
    for o in report.outcomes:
        line = f"{o.method:10s} " + (
            f"ATE {o.ate_mean:.4f} [{o.ci_low:.4f}, {o.ci_high:.4f}]" if o.ok else f"failed: {o.error}"
        )
        print(line)
    return EXIT_ESTIMATOR if any(not o.ok for o in report.outcomes) else EXIT_OK


def cmd_report(args) -> int:
    try:
        paths = harness.emit_report(args.input, args.format, args.plot_data)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        problems = harness.audit_sweep(args.input)
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    for p in problems:
        print(p)
    if problems:
        return EXIT_CONFIG
    print("coverage.csv matches replications.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayestmle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--spec", help="DGP spec JSON (defaults apply to missing keys)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--case", choices=[c.value for c in MisspecCase], help="set DGP orders from a misspecification case")
    p.add_argument("--literal-paper-dgp", action="store_true", help="OPMS pairs a second-order treatment with a first-order outcome")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--method", required=True, choices=harness.ALL_METHODS)
    p.add_argument("--config", help="fit config JSON")
    p.add_argument("--out", required=True, help="result JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="run a coverage sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--workers", type=int, help="override the spec's worker_count")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="write tables from a sweep or case-study directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--plot-data", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("case-study", help="fit the four estimators on one d=10000 dataset")
    p.add_argument("--outcome", choices=["binary", "continuous"], required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--sampler", help="sampler config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_case_study)

    p = sub.add_parser("audit", help="check coverage.csv against replications.csv")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:
        # unknown keys in a config dict surface as unexpected keyword arguments
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
