"""Seeded synthetic datasets: three confounders, a binary treatment, binary or continuous outcome.

All formulas use the raw confounders, with X2 entering as its integer level
(0, 1 or 2). Every generator takes its own seed; :func:`gen_dataset` derives
those child seeds from one spec seed via ``SeedSequence`` spawn keys, so the
streams are independent and adding a generator never perturbs the others.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .data import ColumnKind, Dataset, DataValidationError, ModelOrder, OutcomeKind
from .seeding import child_seed

__all__ = [
    "DgpSpec",
    "MisspecCase",
    "RegenerationError",
    "case_orders",
    "gen_confounders",
    "gen_dataset",
    "gen_outcome_binary",
    "gen_outcome_continuous",
    "gen_treatment",
    "outcome_mean",
    "treatment_logit",
]

CONFOUNDER_NAMES = ("X1", "X2", "X3")
CONFOUNDER_KINDS = (ColumnKind.BINARY, ColumnKind.CATEGORICAL, ColumnKind.CONTINUOUS)


class RegenerationError(DataValidationError):
    """Generated data has an empty treatment arm."""


class MisspecCase(str, Enum):
    NMS = "NMS"
    OMS = "OMS"
    OPMS = "OPMS"


def case_orders(case: MisspecCase | str, literal_paper_dgp: bool = False) -> tuple[ModelOrder, ModelOrder]:
    """(treatment_order, outcome_order) of the DGP behind a misspecification case.

    Models are always fit with first-order terms, so a second-order DGP is a
    misspecified model. With ``literal_paper_dgp`` the OPMS case pairs a
    second-order treatment with a first-order outcome, as the source text
    literally reads (which leaves the outcome model correctly specified).
    """
    case = MisspecCase(case)
    if case is MisspecCase.NMS:
        return ModelOrder.FIRST, ModelOrder.FIRST
    if case is MisspecCase.OMS:
        return ModelOrder.FIRST, ModelOrder.SECOND
    if literal_paper_dgp:
        return ModelOrder.SECOND, ModelOrder.FIRST
    return ModelOrder.SECOND, ModelOrder.SECOND


@dataclass(frozen=True)
class DgpSpec:
    n: int = 10000
    effect_size: float = 0.03
    outcome_kind: OutcomeKind = OutcomeKind.BINARY
    treatment_order: ModelOrder = ModelOrder.FIRST
    outcome_order: ModelOrder = ModelOrder.SECOND
    label_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "outcome_kind", OutcomeKind(self.outcome_kind))
        object.__setattr__(self, "treatment_order", ModelOrder(self.treatment_order))
        object.__setattr__(self, "outcome_order", ModelOrder(self.outcome_order))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must lie in [0, 1)")
        if not np.isfinite(self.effect_size):
            raise ValueError("effect_size must be finite")

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("outcome_kind", "treatment_order", "outcome_order"):
            out[key] = out[key].value
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "DgpSpec":
        return cls(**payload)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def gen_confounders(n: int, seed: int) -> np.ndarray:
    """``(n, 3)`` matrix: X1 ~ Bernoulli(0.4), X2 ~ Categorical(0.3, 0.5, 0.2), X3 ~ N(0, 1)."""
    rng = _rng(seed)
    x1 = (rng.uniform(size=n) < 0.4).astype(float)
    x2 = rng.choice(3, size=n, p=[0.3, 0.5, 0.2]).astype(float)
    x3 = rng.standard_normal(n)
    return np.column_stack([x1, x2, x3])


def _second_order_terms(x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return 0.07 * x3**2 - 0.02 * x1 * x2 + 0.06 * x2 * x3


def treatment_logit(x: np.ndarray, order: ModelOrder | str) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = -1.4 + 0.3 * x[:, 0] + 0.5 * x[:, 1] - 0.9 * x[:, 2]
    if ModelOrder(order) is ModelOrder.SECOND:
        out = out + _second_order_terms(x)
    return out


def _control_linear(x: np.ndarray, order: ModelOrder | str) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = -1.3 - 0.7 * x[:, 0] + 0.8 * x[:, 1] + 0.9 * x[:, 2]
    if ModelOrder(order) is ModelOrder.SECOND:
        out = out + _second_order_terms(x)
    return out


def gen_treatment(confounders: np.ndarray, order: ModelOrder | str, seed: int) -> np.ndarray:
    p = expit(treatment_logit(confounders, order))
    return (_rng(seed).uniform(size=p.shape[0]) < p).astype(float)


def outcome_mean(
    confounders: np.ndarray,
    treatment,
    effect_size: float,
    outcome_kind: OutcomeKind | str,
    outcome_order: ModelOrder | str = ModelOrder.SECOND,
) -> tuple[np.ndarray, int]:
    """Noise-free E[Y | A, X] and the number of probabilities clamped into [0, 1]."""
    a = np.broadcast_to(np.asarray(treatment, dtype=float), (np.atleast_2d(confounders).shape[0],))
    if OutcomeKind(outcome_kind) is OutcomeKind.CONTINUOUS:
        y0 = _control_linear(confounders, ModelOrder.SECOND)
        return y0 + a * effect_size, 0
    p0 = expit(_control_linear(confounders, outcome_order))
    p1 = p0 + effect_size
    clamped = int(np.sum(a * ((p1 > 1.0) | (p1 < 0.0))))
    p1 = np.clip(p1, 0.0, 1.0)
    return a * p1 + (1.0 - a) * p0, clamped


def gen_outcome_binary(
    confounders: np.ndarray,
    treatment,
    effect_size: float,
    outcome_order: ModelOrder | str,
    noise: float,
    seed: int,
) -> tuple[np.ndarray, int]:
    """Bernoulli outcome with additive risk difference and random label flips.

    Returns ``(y, n_clamped)``. Each row draws one uniform for the outcome and
    one for the flip, so a noise-free run with the same seed is the exact
    shadow of a noisy one.
    """
    prob, clamped = outcome_mean(confounders, treatment, effect_size, OutcomeKind.BINARY, outcome_order)
    rng = _rng(seed)
    u = rng.uniform(size=(prob.shape[0], 2))
    y = (u[:, 0] < prob).astype(float)
    flip = u[:, 1] < noise
    y[flip] = 1.0 - y[flip]
    return y, clamped


def gen_outcome_continuous(confounders: np.ndarray, treatment, effect_size: float, seed: int) -> np.ndarray:
    """Y ~ Normal(A*Y1 + (1-A)*Y0, 0.1) with the second-order Y0 and Y1 = Y0 + effect."""
    mean, _ = outcome_mean(confounders, treatment, effect_size, OutcomeKind.CONTINUOUS)
    return mean + 0.1 * _rng(seed).standard_normal(mean.shape[0])


def gen_dataset(spec: DgpSpec) -> Dataset:
    x = gen_confounders(spec.n, child_seed(spec.seed, 0))
    a = gen_treatment(x, spec.treatment_order, child_seed(spec.seed, 1))
    if spec.n > 1 and (a.min() == a.max()):
        raise RegenerationError(
            f"seed {spec.seed}: generated treatment has an empty arm; use another seed"
        )
    if spec.outcome_kind is OutcomeKind.BINARY:
        y, _ = gen_outcome_binary(
            x, a, spec.effect_size, spec.outcome_order, spec.label_noise, child_seed(spec.seed, 2)
        )
    else:
        y = gen_outcome_continuous(x, a, spec.effect_size, child_seed(spec.seed, 2))
    return Dataset(x, a, y, spec.outcome_kind, CONFOUNDER_NAMES, CONFOUNDER_KINDS)
