"""Bayesian TMLE estimators returning a posterior distribution over the ATE.

Three estimators share one prediction core:

* ``fit_btmle_m`` samples outcome and propensity posteriors, averages the
  per-draw initial predictions and clever covariates row-wise, and fits a
  Bayesian fluctuation on those means.
* ``fit_btmle_ss`` reuses the same posteriors but treats each row's initial
  prediction and clever covariate as a latent Normal centred on its posterior
  mean and sd (``2d + 1`` latent parameters plus scales).
* ``fit_bn_tmle`` samples outcome, propensity and fluctuation parameters in a
  single joint density.

Every estimator ends the same way: for each posterior draw the treatment
column is forced to 1 and to 0, targeted predictions are formed from that
draw's parameters and the column means are differenced. The ``d x m``
prediction matrices are never held in full unless asked for; ATE samples are
accumulated in fixed-width column chunks.

Continuous outcomes are standardized before fitting and mapped back on output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .classical import FluctuationForm, clever_covariate, clever_covariate_two
from .data import (
    AteDistribution,
    Dataset,
    DesignMatrix,
    EncodingMeta,
    ModelOrder,
    ModelRole,
    ModelSpec,
    OutcomeKind,
    PosteriorDraws,
    PredictionKind,
    PredictionMatrix,
    apply_design,
    build_design,
    outcome_scaling,
)
from .glm import (
    LOG_2PI,
    LOGIT_BOUND,
    LogDensityModel,
    _MAX_LOG_SCALE,
    _log_halfnormal_jac,
    _normal_prior,
    bernoulli_terms,
    clamp_probability,
    expit,
    linear_log_density,
    logistic_log_density,
    logit,
    make_blocks,
)
from .sampler import SamplerConfig, sample
from .seeding import child_seed

__all__ = [
    "BayesMethod",
    "BayesTmleResult",
    "NuisancePosterior",
    "SubsampleWarning",
    "SummaryStats",
    "TmleSpecs",
    "ate_distribution",
    "do_predict",
    "fit_bayes_outcome",
    "fit_bayes_propensity",
    "fit_bn_tmle",
    "fit_btmle_m",
    "fit_btmle_ss",
    "fit_nuisance",
    "predict_matrices",
    "summary_stats",
]

CHUNK = 256
SD_FLOOR = 1e-6
SS_ROW_CAP = 20000
KDE_POINTS = 512

# child-seed keys under the caller's sampler seed
_SEED_OUTCOME, _SEED_PROPENSITY, _SEED_FLUCTUATION, _SEED_SUBSAMPLE, _SEED_JOINT = range(5)


class BayesMethod(str, Enum):
    BTMLE_M = "BTmleM"
    BTMLE_SS = "BTmleSS"
    BN_1P = "BnTmle1p"
    BN_2P = "BnTmle2p"


class SubsampleWarning(UserWarning):
    """The latent-variable estimator fitted its fluctuation on a row subsample."""


@dataclass(frozen=True)
class TmleSpecs:
    outcome: ModelSpec = field(default_factory=lambda: ModelSpec(ModelOrder.FIRST, ModelRole.OUTCOME))
    propensity: ModelSpec = field(
        default_factory=lambda: ModelSpec(ModelOrder.FIRST, ModelRole.PROPENSITY)
    )
    epsilon_prior_scale: float = 1.0

    def __post_init__(self):
        if not self.epsilon_prior_scale > 0:
            raise ValueError("epsilon_prior_scale must be positive")


@dataclass(frozen=True)
class SummaryStats:
    """Per-row posterior mean and sd of the initial prediction and clever covariate.

    Binary initial predictions are summarized on the logit scale. With the
    two-parameter fluctuation the covariate summarized is the one active at
    the observed treatment, ``A/p + (1-A)/(1-p)``.
    """

    mu_yinit: np.ndarray
    sd_yinit: np.ndarray
    mu_h: np.ndarray
    sd_h: np.ndarray


# -- prediction core -----------------------------------------------------------


def _chunks(m: int, width: int = CHUNK):
    for start in range(0, m, width):
        yield slice(start, min(start + width, m))


def _initial(eta: np.ndarray, kind: OutcomeKind) -> np.ndarray:
    return clamp_probability(expit(eta)) if kind is OutcomeKind.BINARY else eta


def _shift(a_col, p, eps: np.ndarray, form: FluctuationForm) -> np.ndarray:
    """Fluctuation shift for a block of draws; ``eps`` is ``(k, 1 or 2)``."""
    if form is FluctuationForm.ONE_PARAM:
        return eps[:, 0] * clever_covariate(a_col, p)
    h0, h1 = clever_covariate_two(a_col, p)
    return eps[:, 0] * h0 + eps[:, 1] * h1


def _targeted(y_init: np.ndarray, shift: np.ndarray, kind: OutcomeKind) -> np.ndarray:
    if kind is OutcomeKind.BINARY:
        return clamp_probability(expit(logit(y_init) + shift))
    return y_init + shift


@dataclass(frozen=True)
class _Targeter:
    """Parameter draws plus encodings: enough to form targeted predictions anywhere."""

    theta_Y: np.ndarray
    theta_A: np.ndarray
    epsilon: np.ndarray
    form: FluctuationForm
    outcome_kind: OutcomeKind
    outcome_meta: EncodingMeta
    propensity_meta: EncodingMeta
    y_center: float
    y_scale: float

    @property
    def m(self) -> int:
        return self.epsilon.shape[0]

    def designs(self, dataset: Dataset, a: int):
        a_vec = np.full(dataset.n, float(a))
        x_out = apply_design(dataset.confounders, self.outcome_meta, a_vec).values
        x_prop = apply_design(dataset.confounders, self.propensity_meta).values
        return x_out, x_prop, a_vec[:, None]

    def block(self, x_out, x_prop, a_col, cols: slice) -> np.ndarray:
        """Targeted predictions on the original outcome scale for draws ``cols``."""
        y_init = _initial(x_out @ self.theta_Y[cols].T, self.outcome_kind)
        p = expit(x_prop @ self.theta_A[cols].T)
        yf = _targeted(y_init, _shift(a_col, p, self.epsilon[cols], self.form), self.outcome_kind)
        if self.outcome_kind is OutcomeKind.CONTINUOUS:
            yf = self.y_center + self.y_scale * yf
        return np.ascontiguousarray(yf)

    def matrix(self, dataset: Dataset, a: int) -> np.ndarray:
        x_out, x_prop, a_col = self.designs(dataset, a)
        out = np.empty((dataset.n, self.m))
        for cols in _chunks(self.m):
            out[:, cols] = self.block(x_out, x_prop, a_col, cols)
        return out

    def ate_samples(self, dataset: Dataset) -> np.ndarray:
        x1, xp, a1 = self.designs(dataset, 1)
        x0, _, a0 = self.designs(dataset, 0)
        out = np.empty(self.m)
        for cols in _chunks(self.m):
            out[cols] = _column_means(self.block(x1, xp, a1, cols)) - _column_means(
                self.block(x0, xp, a0, cols)
            )
        return out


def _column_means(values: np.ndarray) -> np.ndarray:
    # one code path for chunked and full matrices keeps the two bit-identical
    out = np.empty(values.shape[1])
    for cols in _chunks(values.shape[1]):
        out[cols] = np.ascontiguousarray(values[:, cols]).mean(axis=0)
    return out


# -- ATE distribution ----------------------------------------------------------


def _silverman_kde(samples: np.ndarray, mean: float, sd: float):
    if not sd > 0:
        return np.empty(0), np.empty(0)
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * samples.shape[0] ** -0.2
    grid = np.linspace(mean - 4.0 * sd, mean + 4.0 * sd, KDE_POINTS)
    density = np.zeros(KDE_POINTS)
    for cols in _chunks(samples.shape[0], 4096):
        z = (grid[:, None] - samples[None, cols]) / bw
        density += np.exp(-0.5 * z * z).sum(axis=1)
    density /= samples.shape[0] * bw * math.sqrt(2.0 * math.pi)
    return grid, density


def _distribution(samples: np.ndarray) -> AteDistribution:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.shape[0] < 2:
        raise ValueError("an ATE distribution needs at least two draws")
    if not np.all(np.isfinite(samples)):
        raise ValueError("ATE samples contain NaN or Inf")
    mean = float(np.mean(samples))
    low, high = np.quantile(samples, [0.025, 0.975], method="inverted_cdf")
    grid, density = _silverman_kde(samples, mean, float(np.std(samples, ddof=1)))
    return AteDistribution(samples, mean, float(low), float(high), grid, density)


def ate_distribution(yf1, yf0) -> AteDistribution:
    """ATE samples ``colMean(yf1) - colMean(yf0)`` with interval and KDE.

    The interval is the equal-tailed 95% range, with endpoints taken as order
    statistics of the samples. The KDE uses a Gaussian kernel with
    Silverman's bandwidth on 512 points over mean +/- 4 sd; when every sample
    is identical the KDE is empty.
    """
    v1 = yf1.values if isinstance(yf1, PredictionMatrix) else np.asarray(yf1, dtype=float)
    v0 = yf0.values if isinstance(yf0, PredictionMatrix) else np.asarray(yf0, dtype=float)
    if v1.ndim != 2 or v1.shape != v0.shape:
        raise ValueError(f"prediction matrices must share a d x m shape, got {v1.shape} and {v0.shape}")
    return _distribution(_column_means(v1) - _column_means(v0))


# -- result --------------------------------------------------------------------


@dataclass(frozen=True)
class BayesTmleResult:
    method: BayesMethod
    draws: PosteriorDraws
    ate: AteDistribution
    outcome_kind: OutcomeKind
    fluctuation_form: FluctuationForm
    dataset: Dataset = field(repr=False, compare=False)
    targeter: _Targeter = field(repr=False, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.ate.samples.shape[0]

    @cached_property
    def yf_treated(self) -> PredictionMatrix:
        return do_predict(self, self.dataset, 1)

    @cached_property
    def yf_control(self) -> PredictionMatrix:
        return do_predict(self, self.dataset, 0)

    def to_dict(self, samples_path: str | None = None) -> dict:
        out = {
            "method": self.method.value,
            "ate_mean": self.ate.mean,
            "ci95": [self.ate.ci_low, self.ate.ci_high],
            "n_draws": self.m,
            "diagnostics": self.diagnostics,
            "kde": [[x, y] for x, y in self.ate.kde],
        }
        if samples_path is not None:
            out["samples_path"] = str(samples_path)
        return out


def do_predict(result: BayesTmleResult, dataset: Dataset, a: int) -> PredictionMatrix:
    """Targeted predictions with every row's treatment forced to ``a``.

    One column per posterior draw, original outcome scale. Nothing is refitted.
    """
    if a not in (0, 1):
        raise ValueError("treatment must be 0 or 1")
    values = result.targeter.matrix(dataset, a)
    return PredictionMatrix(values, PredictionKind.TARGETED_OUTCOME, result.outcome_kind)


# -- nuisance posteriors -------------------------------------------------------


def _standardized_outcome(dataset: Dataset):
    center, scale = outcome_scaling(dataset)
    return (dataset.outcome - center) / scale, center, scale


def _outcome_model(design: DesignMatrix, y, kind: OutcomeKind, spec: ModelSpec) -> LogDensityModel:
    if kind is OutcomeKind.BINARY:
        return logistic_log_density(design, y, spec.prior_scale, block="theta_Y")
    return linear_log_density(
        design, y, spec.prior_scale, spec.error_sd_prior_scale, block="theta_Y", sd_block="sigma_o"
    )


def fit_bayes_outcome(dataset: Dataset, spec: ModelSpec | None = None, config: SamplerConfig | None = None) -> PosteriorDraws:
    """Posterior draws of the outcome coefficients (and ``sigma_o`` when continuous).

    Continuous outcomes are fitted on the standardized scale.
    """
    spec = spec or ModelSpec(ModelOrder.FIRST, ModelRole.OUTCOME)
    design = build_design(dataset, ModelSpec(spec.order, ModelRole.OUTCOME, spec.prior_scale))
    y, _, _ = _standardized_outcome(dataset)
    return sample(_outcome_model(design, y, dataset.outcome_kind, spec), config)


def fit_bayes_propensity(dataset: Dataset, spec: ModelSpec | None = None, config: SamplerConfig | None = None) -> PosteriorDraws:
    spec = spec or ModelSpec(ModelOrder.FIRST, ModelRole.PROPENSITY)
    design = build_design(dataset, ModelSpec(spec.order, ModelRole.PROPENSITY, spec.prior_scale))
    return sample(logistic_log_density(design, dataset.treatment, spec.prior_scale, block="theta_A"), config)


@dataclass(frozen=True)
class NuisancePosterior:
    """Outcome and propensity posteriors shared by the two sequential estimators."""

    outcome: PosteriorDraws
    propensity: PosteriorDraws
    outcome_meta: EncodingMeta
    propensity_meta: EncodingMeta
    y_center: float
    y_scale: float

    @property
    def m(self) -> int:
        return self.outcome.m


def fit_nuisance(dataset: Dataset, specs: TmleSpecs | None = None, config: SamplerConfig | None = None) -> NuisancePosterior:
    specs = specs or TmleSpecs()
    config = config or SamplerConfig()
    outcome = fit_bayes_outcome(dataset, specs.outcome, config.with_seed(child_seed(config.seed, _SEED_OUTCOME)))
    propensity = fit_bayes_propensity(
        dataset, specs.propensity, config.with_seed(child_seed(config.seed, _SEED_PROPENSITY))
    )
    _, center, scale = _standardized_outcome(dataset)
    return NuisancePosterior(
        outcome,
        propensity,
        build_design(dataset, specs.outcome).encoding_meta,
        build_design(dataset, specs.propensity).encoding_meta,
        center,
        scale,
    )


def predict_matrices(
    draws: PosteriorDraws,
    dataset: Dataset,
    a: int,
    specs: TmleSpecs | None = None,
) -> tuple[PredictionMatrix, PredictionMatrix]:
    """``d x m`` initial predictions and one-parameter clever covariates under treatment ``a``.

    Continuous initial predictions are on the standardized scale the outcome
    model was fitted on. Designs are rebuilt from ``dataset`` using ``specs``,
    so the dataset must be the one the draws were fitted to.
    """
    if a not in (0, 1):
        raise ValueError("treatment must be 0 or 1")
    specs = specs or TmleSpecs()
    x_out = build_design(dataset, specs.outcome).with_treatment(a).values
    x_prop = build_design(dataset, specs.propensity).values
    kind = dataset.outcome_kind
    y_init = _initial(x_out @ draws["theta_Y"].T, kind)
    h = clever_covariate(np.full((dataset.n, 1), float(a)), expit(x_prop @ draws["theta_A"].T))
    return (
        PredictionMatrix(y_init, PredictionKind.INITIAL_OUTCOME, kind),
        PredictionMatrix(np.atleast_2d(h), PredictionKind.CLEVER_COVARIATE, kind),
    )


def _observed_blocks(nuisance: NuisancePosterior, dataset: Dataset, form: FluctuationForm):
    """Yield (latent initial prediction, covariate) blocks at observed treatment, by column chunk."""
    kind = dataset.outcome_kind
    x_out = apply_design(dataset.confounders, nuisance.outcome_meta, dataset.treatment).values
    x_prop = apply_design(dataset.confounders, nuisance.propensity_meta).values
    a_col = dataset.treatment[:, None]
    theta_Y, theta_A = nuisance.outcome["theta_Y"], nuisance.propensity["theta_A"]
    for cols in _chunks(nuisance.m):
        eta = x_out @ theta_Y[cols].T
        p = expit(x_prop @ theta_A[cols].T)
        if form is FluctuationForm.ONE_PARAM:
            h = clever_covariate(a_col, p)
        else:
            h0, h1 = clever_covariate_two(a_col, p)
            h = h0 + h1
        yield _initial(eta, kind), h


def _row_means(nuisance: NuisancePosterior, dataset: Dataset, form: FluctuationForm):
    sum_y = np.zeros(dataset.n)
    sum_h = np.zeros(dataset.n)
    for y_init, h in _observed_blocks(nuisance, dataset, form):
        sum_y += y_init.sum(axis=1)
        sum_h += h.sum(axis=1)
    return sum_y / nuisance.m, sum_h / nuisance.m


def summary_stats(nuisance: NuisancePosterior, dataset: Dataset, form=FluctuationForm.ONE_PARAM) -> SummaryStats:
    """Row-wise means and sds (ddof=0, floored at 1e-6) over the nuisance draws."""
    form = FluctuationForm(form)
    binary = dataset.outcome_kind is OutcomeKind.BINARY

    def passes():
        for y_init, h in _observed_blocks(nuisance, dataset, form):
            yield (logit(y_init) if binary else y_init), h

    sums = [np.zeros(dataset.n), np.zeros(dataset.n)]
    for blocks in passes():
        for acc, b in zip(sums, blocks):
            acc += b.sum(axis=1)
    means = [s / nuisance.m for s in sums]
    sq = [np.zeros(dataset.n), np.zeros(dataset.n)]
    for blocks in passes():
        for acc, b, mu in zip(sq, blocks, means):
            acc += ((b - mu[:, None]) ** 2).sum(axis=1)
    sds = [np.maximum(np.sqrt(s / nuisance.m), SD_FLOOR) for s in sq]
    return SummaryStats(means[0], sds[0], means[1], sds[1])


# -- sequential estimators -----------------------------------------------------


def _epsilon_names(form: FluctuationForm) -> tuple[str, ...]:
    return ("epsilon",) if form is FluctuationForm.ONE_PARAM else ("epsilon0", "epsilon1")


def _split_epsilon(draws: PosteriorDraws, form: FluctuationForm) -> PosteriorDraws:
    blocks = dict(draws.blocks)
    eps = blocks.pop("epsilon")
    for k, name in enumerate(_epsilon_names(form)):
        blocks[name] = eps[:, k : k + 1]
    return PosteriorDraws(blocks, draws.n_chains, draws.n_draws_per_chain, draws.diagnostics)


def _epsilon_matrix(draws: PosteriorDraws, form: FluctuationForm) -> np.ndarray:
    return np.column_stack([draws[name][:, 0] for name in _epsilon_names(form)])


def _stage_summary(stages: dict) -> dict:
    notes = []
    for name, diag in stages.items():
        notes.extend(f"{name}: {msg}" for msg in diag.get("warnings", []))
    rhats = [d.get("max_rhat", float("nan")) for d in stages.values()]
    rhats = [r for r in rhats if np.isfinite(r)]
    return {
        "stages": stages,
        "max_rhat": max(rhats) if rhats else float("nan"),
        "divergence_fraction": max((d.get("divergence_fraction", 0.0) for d in stages.values()), default=0.0),
        "warnings": notes,
    }


def _finish(method, draws, targeter: _Targeter, dataset: Dataset, diagnostics: dict) -> BayesTmleResult:
    return BayesTmleResult(
        method=BayesMethod(method),
        draws=draws,
        ate=_distribution(targeter.ate_samples(dataset)),
        outcome_kind=dataset.outcome_kind,
        fluctuation_form=targeter.form,
        dataset=dataset,
        targeter=targeter,
        diagnostics=diagnostics,
    )


def _check_arms(dataset: Dataset) -> None:
    if dataset.treatment.min() == dataset.treatment.max():
        raise ValueError("both treatment arms must be present")


def _sequential_result(method, dataset, nuisance, fluct: PosteriorDraws, form, extra=None):
    if fluct.m != nuisance.m:
        raise ValueError("fluctuation and nuisance posteriors must have the same number of draws")
    fluct = _split_epsilon(fluct, form)
    draws = nuisance.outcome.merged(nuisance.propensity).merged(fluct)
    targeter = _Targeter(
        nuisance.outcome["theta_Y"],
        nuisance.propensity["theta_A"],
        _epsilon_matrix(fluct, form),
        form,
        dataset.outcome_kind,
        nuisance.outcome_meta,
        nuisance.propensity_meta,
        nuisance.y_center,
        nuisance.y_scale,
    )
    diagnostics = _stage_summary(
        {
            "outcome": dict(nuisance.outcome.diagnostics),
            "propensity": dict(nuisance.propensity.diagnostics),
            "fluctuation": dict(fluct.diagnostics),
        }
    )
    diagnostics.update(extra or {})
    return _finish(method, draws, targeter, dataset, diagnostics)


def _fluctuation_config(config: SamplerConfig) -> SamplerConfig:
    return config.with_seed(child_seed(config.seed, _SEED_FLUCTUATION))


def fit_btmle_m(
    dataset: Dataset,
    specs: TmleSpecs | None = None,
    config: SamplerConfig | None = None,
    fluctuation_form: FluctuationForm | str = FluctuationForm.ONE_PARAM,
    *,
    nuisance: NuisancePosterior | None = None,
) -> BayesTmleResult:
    """Sequential Bayesian TMLE fluctuating on row-wise posterior means.

    Pass ``nuisance`` to reuse outcome and propensity posteriors already
    sampled with the same config.
    """
    _check_arms(dataset)
    specs = specs or TmleSpecs()
    config = config or SamplerConfig()
    form = FluctuationForm(fluctuation_form)
    nuisance = nuisance or fit_nuisance(dataset, specs, config)
    mean_y, mean_h = _row_means(nuisance, dataset, form)
    a = dataset.treatment
    cov = mean_h[:, None] if form is FluctuationForm.ONE_PARAM else np.column_stack([(1 - a) * mean_h, a * mean_h])
    y = (dataset.outcome - nuisance.y_center) / nuisance.y_scale
    if dataset.outcome_kind is OutcomeKind.BINARY:
        model = logistic_log_density(cov, y, specs.epsilon_prior_scale, offset=logit(mean_y), block="epsilon")
    else:
        model = linear_log_density(
            cov, y, specs.epsilon_prior_scale, specs.outcome.error_sd_prior_scale,
            offset=mean_y, block="epsilon", sd_block="sigma_f",
        )
    fluct = sample(model, _fluctuation_config(config))
    return _sequential_result(BayesMethod.BTMLE_M, dataset, nuisance, fluct, form)


def _latent_fluctuation_model(
    y: np.ndarray,
    stats: SummaryStats,
    arm: np.ndarray,
    kind: OutcomeKind,
    form: FluctuationForm,
    eps_scale: float,
    sd_scale: float,
) -> LogDensityModel:
    """Fluctuation with per-row latent initial predictions and clever covariates.

    Non-centred: ``l_i = mu_i + s_i z_i`` and ``h_i = muH_i + sH_i zH_i`` with
    standard Normal ``z``. Binary latents live on the logit scale.
    """
    n = y.shape[0]
    k = 1 if form is FluctuationForm.ONE_PARAM else 2
    binary = kind is OutcomeKind.BINARY
    idx = np.zeros(n, dtype=int) if k == 1 else arm.astype(int)
    spec = [("z_yinit", n, "identity"), ("z_h", n, "identity"), ("epsilon", k, "identity")]
    if not binary:
        spec.append(("sigma_f", 1, "log"))
    blocks = make_blocks(spec)
    dim = blocks[-1].stop
    z_const = -n * LOG_2PI  # two standard-normal blocks of length n

    def logp_and_grad(x):
        if not binary and abs(x[-1]) > _MAX_LOG_SCALE:
            return -math.inf, np.full(dim, np.nan)
        z_l, z_h, eps = x[:n], x[n : 2 * n], x[2 * n : 2 * n + k]
        l = stats.mu_yinit + stats.sd_yinit * z_l
        h = stats.mu_h + stats.sd_h * z_h
        e_row = eps[idx]
        f = l + e_row * h
        grad = np.empty(dim)
        if binary:
            lp, r = bernoulli_terms(y, f)
        else:
            u = x[-1]
            inv_var = math.exp(-2.0 * u)
            resid = y - f
            rss = float(resid @ resid)
            lp = -0.5 * rss * inv_var - n * (u + 0.5 * LOG_2PI)
            r = resid * inv_var
            lps, gs = _log_halfnormal_jac(u, sd_scale)
            lp += lps
            grad[-1] = rss * inv_var - n + gs
        lp += z_const - 0.5 * float(z_l @ z_l + z_h @ z_h)
        lpe, ge = _normal_prior(eps, eps_scale)
        lp += lpe
        grad[:n] = r * stats.sd_yinit - z_l
        grad[n : 2 * n] = r * e_row * stats.sd_h - z_h
        grad[2 * n : 2 * n + k] = np.bincount(idx, weights=r * h, minlength=k) + ge
        return lp, grad

    return LogDensityModel(dim, logp_and_grad, blocks)


def fit_btmle_ss(
    dataset: Dataset,
    specs: TmleSpecs | None = None,
    config: SamplerConfig | None = None,
    fluctuation_form: FluctuationForm | str = FluctuationForm.ONE_PARAM,
    *,
    nuisance: NuisancePosterior | None = None,
    row_cap: int | None = SS_ROW_CAP,
) -> BayesTmleResult:
    """Sequential Bayesian TMLE with per-row latent inputs.

    The fluctuation is sampled jointly with ``2d`` latent variables. Above
    ``row_cap`` rows the fluctuation is fitted on a seeded random subsample of
    ``row_cap`` rows (with a :class:`SubsampleWarning`); targeted predictions
    still cover every row. ``row_cap=None`` disables the cap.
    """
    _check_arms(dataset)
    specs = specs or TmleSpecs()
    config = config or SamplerConfig()
    form = FluctuationForm(fluctuation_form)
    nuisance = nuisance or fit_nuisance(dataset, specs, config)
    stats = summary_stats(nuisance, dataset, form)
    rows = np.arange(dataset.n)
    extra = {"fit_rows": dataset.n}
    if row_cap is not None and dataset.n > row_cap:
        rng = np.random.default_rng(child_seed(config.seed, _SEED_SUBSAMPLE))
        rows = np.sort(rng.choice(dataset.n, size=row_cap, replace=False))
        msg = f"latent fluctuation fitted on {row_cap} of {dataset.n} rows"
        warnings.warn(msg, SubsampleWarning, stacklevel=2)
        extra = {"fit_rows": int(row_cap), "subsample_note": msg}
    sub = SummaryStats(stats.mu_yinit[rows], stats.sd_yinit[rows], stats.mu_h[rows], stats.sd_h[rows])
    y = (dataset.outcome[rows] - nuisance.y_center) / nuisance.y_scale
    model = _latent_fluctuation_model(
        y, sub, dataset.treatment[rows], dataset.outcome_kind, form,
        specs.epsilon_prior_scale, specs.outcome.error_sd_prior_scale,
    )
    fluct = sample(model, _fluctuation_config(config), keep=("epsilon", "sigma_f"))
    return _sequential_result(BayesMethod.BTMLE_SS, dataset, nuisance, fluct, form, extra)


# -- joint network estimator ---------------------------------------------------


def _joint_model(
    x_out: np.ndarray,
    x_prop: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    kind: OutcomeKind,
    form: FluctuationForm,
    specs: TmleSpecs,
) -> LogDensityModel:
    """Joint density of outcome, propensity and fluctuation parameters.

    Each row contributes three factors: ``A ~ Bernoulli(p)``, ``Y`` against the
    initial prediction, and a duplicate of ``Y`` against the targeted
    prediction. The propensity logit is clipped before the clever covariate is
    formed, matching the probability floor used everywhere else.
    """
    # column-major designs make the tall-skinny products several times faster
    x_out, x_prop = np.asfortranarray(x_out), np.asfortranarray(x_prop)
    qy, qa = x_out.shape[1], x_prop.shape[1]
    k = 1 if form is FluctuationForm.ONE_PARAM else 2
    binary = kind is OutcomeKind.BINARY
    spec = [("theta_Y", qy, "identity"), ("theta_A", qa, "identity"), ("epsilon", k, "identity")]
    if not binary:
        spec += [("sigma_o", 1, "log"), ("sigma_f", 1, "log")]
    blocks = make_blocks(spec)
    dim = blocks[-1].stop
    n = y.shape[0]
    sd_scale = specs.outcome.error_sd_prior_scale
    a1, a0 = a, 1.0 - a

    def logp_and_grad(x):
        if not binary and max(abs(x[-2]), abs(x[-1])) > _MAX_LOG_SCALE:
            return -math.inf, np.full(dim, np.nan)
        theta_Y, theta_A = x[:qy], x[qy : qy + qa]
        eps = x[qy + qa : qy + qa + k]
        eta_Y = x_out @ theta_Y
        eta_A = x_prop @ theta_A
        inside = np.abs(eta_A) < LOGIT_BOUND
        ea = np.clip(eta_A, -LOGIT_BOUND, LOGIT_BOUND)
        e_pos = np.exp(ea)
        e_neg = 1.0 / e_pos
        if k == 1:
            h = a1 * (1.0 + e_neg) - a0 * (1.0 + e_pos)
            shift = eps[0] * h
            dshift = eps[0] * (-a1 * e_neg - a0 * e_pos)
        else:
            h1, h0 = a1 * (1.0 + e_neg), a0 * (1.0 + e_pos)
            shift = eps[0] * h0 + eps[1] * h1
            dshift = eps[0] * a0 * e_pos - eps[1] * a1 * e_neg
        dshift = dshift * inside

        lp, r_a = bernoulli_terms(a, eta_A)
        grad = np.empty(dim)
        if binary:
            in_y = np.abs(eta_Y) < LOGIT_BOUND
            f = np.clip(eta_Y, -LOGIT_BOUND, LOGIT_BOUND) + shift
            lp_o, r_o = bernoulli_terms(y, eta_Y)
            lp_f, r_f = bernoulli_terms(y, f)
            lp += lp_o + lp_f
            grad_eta_y = r_o + r_f * in_y
        else:
            u_o, u_f = x[-2], x[-1]
            iv_o, iv_f = math.exp(-2.0 * u_o), math.exp(-2.0 * u_f)
            res_o = y - eta_Y
            res_f = res_o - shift
            rss_o, rss_f = float(res_o @ res_o), float(res_f @ res_f)
            lp += -0.5 * rss_o * iv_o - n * (u_o + 0.5 * LOG_2PI)
            lp += -0.5 * rss_f * iv_f - n * (u_f + 0.5 * LOG_2PI)
            r_o, r_f = res_o * iv_o, res_f * iv_f
            grad_eta_y = r_o + r_f
            lso, gso = _log_halfnormal_jac(u_o, sd_scale)
            lsf, gsf = _log_halfnormal_jac(u_f, sd_scale)
            lp += lso + lsf
            grad[-2] = rss_o * iv_o - n + gso
            grad[-1] = rss_f * iv_f - n + gsf

        lpy, gy = _normal_prior(theta_Y, specs.outcome.prior_scale)
        lpa, ga = _normal_prior(theta_A, specs.propensity.prior_scale)
        lpe, ge = _normal_prior(eps, specs.epsilon_prior_scale)
        lp += lpy + lpa + lpe
        grad[:qy] = x_out.T @ grad_eta_y + gy
        grad[qy : qy + qa] = x_prop.T @ (r_a + r_f * dshift) + ga
        if k == 1:
            grad[qy + qa] = float(r_f @ h) + ge[0]
        else:
            grad[qy + qa] = float(r_f @ h0) + ge[0]
            grad[qy + qa + 1] = float(r_f @ h1) + ge[1]
        return lp, grad

    return LogDensityModel(dim, logp_and_grad, blocks)


def joint_log_density(dataset: Dataset, specs: TmleSpecs | None = None, fluctuation_form=FluctuationForm.ONE_PARAM) -> LogDensityModel:
    """The joint network density for ``dataset`` on the standardized outcome scale."""
    specs = specs or TmleSpecs()
    y, _, _ = _standardized_outcome(dataset)
    x_out = build_design(dataset, specs.outcome).values
    x_prop = build_design(dataset, specs.propensity).values
    return _joint_model(x_out, x_prop, dataset.treatment, y, dataset.outcome_kind, FluctuationForm(fluctuation_form), specs)


def fit_bn_tmle(
    dataset: Dataset,
    specs: TmleSpecs | None = None,
    config: SamplerConfig | None = None,
    fluctuation_form: FluctuationForm | str = FluctuationForm.ONE_PARAM,
) -> BayesTmleResult:
    """Joint Bayesian TMLE: all three models sampled together in one posterior."""
    _check_arms(dataset)
    specs = specs or TmleSpecs()
    config = config or SamplerConfig()
    form = FluctuationForm(fluctuation_form)
    _, center, scale = _standardized_outcome(dataset)
    model = joint_log_density(dataset, specs, form)
    draws = _split_epsilon(sample(model, config.with_seed(child_seed(config.seed, _SEED_JOINT))), form)
    targeter = _Targeter(
        draws["theta_Y"],
        draws["theta_A"],
        _epsilon_matrix(draws, form),
        form,
        dataset.outcome_kind,
        build_design(dataset, specs.outcome).encoding_meta,
        build_design(dataset, specs.propensity).encoding_meta,
        center,
        scale,
    )
    method = BayesMethod.BN_1P if form is FluctuationForm.ONE_PARAM else BayesMethod.BN_2P
    return _finish(method, draws, targeter, dataset, _stage_summary({"joint": dict(draws.diagnostics)}))
