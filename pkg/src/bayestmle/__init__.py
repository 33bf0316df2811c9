"""Classical and Bayesian targeted maximum likelihood estimation of average treatment effects."""

from .bayes import (
    BayesMethod,
    BayesTmleResult,
    TmleSpecs,
    ate_distribution,
    do_predict,
    fit_bn_tmle,
    fit_btmle_m,
    fit_btmle_ss,
    fit_nuisance,
)
from .classical import ClassicalTmleFit, FluctuationForm, fit_classical, targeted_predict
from .data import Dataset, ModelOrder, ModelRole, ModelSpec, OutcomeKind, read_csv, write_csv
from .harness import SweepSpec, audit_sweep, emit_report, jeffreys_interval, run_case_study, run_sweep
from .sampler import SamplerConfig, sample
from .simulate import DgpSpec, MisspecCase, case_orders, gen_dataset

__all__ = [
    "BayesMethod",
    "BayesTmleResult",
    "ClassicalTmleFit",
    "Dataset",
    "DgpSpec",
    "FluctuationForm",
    "MisspecCase",
    "ModelOrder",
    "ModelRole",
    "ModelSpec",
    "OutcomeKind",
    "SamplerConfig",
    "SweepSpec",
    "TmleSpecs",
    "ate_distribution",
    "audit_sweep",
    "case_orders",
    "do_predict",
    "emit_report",
    "fit_bn_tmle",
    "fit_btmle_m",
    "fit_btmle_ss",
    "fit_classical",
    "fit_nuisance",
    "gen_dataset",
    "jeffreys_interval",
    "read_csv",
    "run_case_study",
    "run_sweep",
    "sample",
    "targeted_predict",
    "write_csv",
]
