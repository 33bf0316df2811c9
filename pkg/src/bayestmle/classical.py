"""Frequentist TMLE baseline with an influence-curve confidence interval."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import (
    Dataset,
    DesignMatrix,
    EncodingMeta,
    ModelOrder,
    ModelRole,
    ModelSpec,
    OutcomeKind,
    apply_design,
    build_design,
    outcome_scaling,
)
from .glm import GlmKind, clamp_probability, expit, fit_mle, logit, offset_glm_fit

__all__ = [
    "ClassicalTmleFit",
    "EstimationError",
    "FluctuationForm",
    "clever_covariate",
    "clever_covariate_two",
    "fit_classical",
    "targeted_predict",
]

Z_95 = 1.96


class EstimationError(RuntimeError):
    """An estimator could not produce a result for this dataset."""


class FluctuationForm(str, Enum):
    ONE_PARAM = "one"
    TWO_PARAM = "two"


def _propensity(p, flags: list | None = None):
    p = np.asarray(p, dtype=float)
    clamped = clamp_probability(p)
    if flags is not None and np.any(clamped != p):
        flags.append(int(np.sum(clamped != p)))
    return clamped


def clever_covariate(a, propensity, flags: list | None = None):
    """I(a=1)/p - I(a=0)/(1-p), with p clamped into (0, 1)."""
    a = np.asarray(a, dtype=float)
    p = _propensity(propensity, flags)
    out = a / p - (1.0 - a) / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def clever_covariate_two(a, propensity, flags: list | None = None):
    """(h0, h1) = (I(a=0)/(1-p), I(a=1)/p)."""
    a = np.asarray(a, dtype=float)
    p = _propensity(propensity, flags)
    h0 = (1.0 - a) / (1.0 - p)
    h1 = a / p
    if h0.ndim == 0:
        return float(h0), float(h1)
    return h0, h1


@dataclass(frozen=True)
class ClassicalTmleFit:
    theta_Y: np.ndarray
    theta_A: np.ndarray
    epsilon: np.ndarray
    fluctuation_form: FluctuationForm
    ate: float
    se: float
    ci95: tuple[float, float]
    influence_values: np.ndarray
    outcome_kind: OutcomeKind
    outcome_meta: EncodingMeta
    propensity_meta: EncodingMeta
    y_center: float = 0.0
    y_scale: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def contains(self, value: float) -> bool:
        return self.ci95[0] <= value <= self.ci95[1]

    def to_dict(self) -> dict:
        return {
            "method": "Classical",
            "ate": self.ate,
            "se": self.se,
            "ci95": list(self.ci95),
            "epsilon": self.epsilon.tolist(),
            "fluctuation_form": self.fluctuation_form.value,
            "diagnostics": self.diagnostics,
        }


def _initial_outcome(theta_Y, design: DesignMatrix, kind: OutcomeKind):
    eta = design.values @ theta_Y
    if kind is OutcomeKind.BINARY:
        return clamp_probability(expit(eta))
    return eta


def _fluctuate(y_init, a, p, epsilon, form: FluctuationForm, kind: OutcomeKind):
    if form is FluctuationForm.ONE_PARAM:
        shift = epsilon[0] * clever_covariate(a, p)
    else:
        h0, h1 = clever_covariate_two(a, p)
        shift = epsilon[0] * h0 + epsilon[1] * h1
    if kind is OutcomeKind.BINARY:
        return clamp_probability(expit(logit(y_init) + shift))
    return y_init + shift


def targeted_predict(fit: ClassicalTmleFit, dataset: Dataset, a: int) -> np.ndarray:
    """Targeted outcome predictions for every row with treatment set to ``a``.

    Returned on the original outcome scale.
    """
    a_vec = np.full(dataset.n, float(a))
    x_out = apply_design(dataset.confounders, fit.outcome_meta, a_vec)
    x_prop = apply_design(dataset.confounders, fit.propensity_meta)
    y_init = _initial_outcome(fit.theta_Y, x_out, fit.outcome_kind)
    p = expit(x_prop.values @ fit.theta_A)
    yf = _fluctuate(y_init, a_vec, p, fit.epsilon, fit.fluctuation_form, fit.outcome_kind)
    return fit.y_center + fit.y_scale * yf


def fit_classical(
    dataset: Dataset,
    outcome_spec: ModelSpec | None = None,
    propensity_spec: ModelSpec | None = None,
    fluctuation_form: FluctuationForm | str = FluctuationForm.ONE_PARAM,
    *,
    clip_propensity: bool = False,
) -> ClassicalTmleFit:
    """Classical TMLE: MLE nuisance fits, one targeting step, influence-curve SE.

    Continuous outcomes are standardized before fitting; the ATE and its SE
    are reported on the original scale. ``clip_propensity`` truncates
    propensity scores to [0.005, 0.995] before building clever covariates.
    """
    outcome_spec = outcome_spec or ModelSpec(ModelOrder.FIRST, ModelRole.OUTCOME)
    propensity_spec = propensity_spec or ModelSpec(ModelOrder.FIRST, ModelRole.PROPENSITY)
    form = FluctuationForm(fluctuation_form)
    a = dataset.treatment
    if a.min() == a.max():
        raise EstimationError("both treatment arms must be present")
    kind = dataset.outcome_kind
    center, scale = outcome_scaling(dataset)
    y = (dataset.outcome - center) / scale

    x_out = build_design(dataset, ModelSpec(outcome_spec.order, ModelRole.OUTCOME))
    x_prop = build_design(dataset, ModelSpec(propensity_spec.order, ModelRole.PROPENSITY))
    glm_kind = GlmKind.LOGISTIC if kind is OutcomeKind.BINARY else GlmKind.LINEAR
    out_fit = fit_mle(glm_kind, x_out, y)
    prop_fit = fit_mle(GlmKind.LOGISTIC, x_prop, a)

    p = expit(x_prop.values @ prop_fit.theta)
    if clip_propensity:
        p = np.clip(p, 0.005, 0.995)
    clamp_flags: list = []
    p = _propensity(p, clamp_flags)
    y_init = _initial_outcome(out_fit.theta, x_out, kind)
    if form is FluctuationForm.ONE_PARAM:
        cov = clever_covariate(a, p)[:, None]
    else:
        cov = np.column_stack(clever_covariate_two(a, p))
    offset = logit(y_init) if kind is OutcomeKind.BINARY else y_init
    try:
        epsilon = offset_glm_fit(glm_kind, offset, cov, y)
    except RuntimeError as exc:
        raise EstimationError(str(exc)) from exc

    yf_obs = _fluctuate(y_init, a, p, epsilon, form, kind)
    yf = {}
    for arm in (0, 1):
        arm_vec = np.full(dataset.n, float(arm))
        init_arm = _initial_outcome(out_fit.theta, x_out.with_treatment(arm), kind)
        yf[arm] = _fluctuate(init_arm, arm_vec, p, epsilon, form, kind)
    effect = yf[1] - yf[0]
    ate_std = float(np.mean(effect))
    h = clever_covariate(a, p)
    ic = h * (y - yf_obs) + effect - ate_std
    se_std = float(np.std(ic, ddof=1) / math.sqrt(dataset.n)) if dataset.n > 1 else float("nan")

    ate, se = ate_std * scale, se_std * scale
    diagnostics = {
        "outcome_mle_warnings": list(out_fit.warnings),
        "propensity_mle_warnings": list(prop_fit.warnings),
        "propensity_clamped": int(sum(clamp_flags)),
        "score": float(np.sum(cov * (y - yf_obs)[:, None])),
    }
    return ClassicalTmleFit(
        theta_Y=out_fit.theta,
        theta_A=prop_fit.theta,
        epsilon=np.asarray(epsilon, dtype=float),
        fluctuation_form=form,
        ate=ate,
        se=se,
        ci95=(ate - Z_95 * se, ate + Z_95 * se),
        influence_values=ic * scale,
        outcome_kind=kind,
        outcome_meta=x_out.encoding_meta,
        propensity_meta=x_prop.encoding_meta,
        y_center=center,
        y_scale=scale,
        diagnostics=diagnostics,
    )
