"""Log densities, gradients and maximum-likelihood fits for logistic and linear GLMs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as _expit

from .data import PROB_FLOOR, DesignMatrix

__all__ = [
    "Block",
    "ConvergenceError",
    "GlmKind",
    "LogDensityModel",
    "MleFit",
    "RankDeficientError",
    "SeparationWarning",
    "clamp_probability",
    "expit",
    "fit_mle",
    "linear_log_density",
    "logistic_log_density",
    "logit",
    "offset_glm_fit",
]

LOG_2PI = math.log(2.0 * math.pi)
# log(2 / sqrt(2 pi)): normalizer of a unit half-normal
_LOG_HALFNORMAL_C = math.log(2.0) - 0.5 * LOG_2PI
LOGIT_BOUND = math.log((1.0 - PROB_FLOOR) / PROB_FLOOR)
SEPARATION_BOUND = 30.0


class RankDeficientError(ValueError):
    """Design matrix is not of full column rank."""


class ConvergenceError(RuntimeError):
    """An iterative fit did not converge."""


class SeparationWarning(UserWarning):
    """Logistic MLE diverges: the data are (quasi-)separated."""


class GlmKind(str, Enum):
    LOGISTIC = "logistic"
    LINEAR = "linear"


def expit(x):
    return _expit(x)


def clamp_probability(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def logit(p):
    p = clamp_probability(np.asarray(p, dtype=float))
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    size: int
    transform: str = "identity"  # or "log"

    @property
    def stop(self) -> int:
        return self.start + self.size


def make_blocks(spec: Sequence[tuple[str, int, str]]) -> tuple[Block, ...]:
    blocks, start = [], 0
    for name, size, transform in spec:
        blocks.append(Block(name, start, size, transform))
        start += size
    return tuple(blocks)


@dataclass(frozen=True)
class LogDensityModel:
    """Unnormalized log posterior on an unconstrained parameter vector.

    ``logp_and_grad`` is the primitive; ``log_density`` and ``gradient`` are
    conveniences over it. Blocks tagged ``"log"`` are sampled as the log of a
    positive scale, with the Jacobian already included in the density.
    """

    dim: int
    logp_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    blocks: tuple[Block, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def log_density(self, x) -> float:
        return self.logp_and_grad(np.asarray(x, dtype=float))[0]

    def gradient(self, x) -> np.ndarray:
        return self.logp_and_grad(np.asarray(x, dtype=float))[1]

    def constrain(self, x) -> dict[str, np.ndarray]:
        """Split unconstrained vector(s) into natural-scale blocks."""
        x = np.asarray(x, dtype=float)
        out = {}
        for b in self.blocks:
            part = x[..., b.start : b.stop]
            out[b.name] = np.exp(part) if b.transform == "log" else part
        return out


def _as_array(design) -> np.ndarray:
    if isinstance(design, DesignMatrix):
        return design.values
    return np.asarray(design, dtype=float)


def _normal_prior(theta: np.ndarray, scale: float) -> tuple[float, np.ndarray]:
    k = theta.shape[0]
    lp = -0.5 * float(theta @ theta) / scale**2 - k * (math.log(scale) + 0.5 * LOG_2PI)
    return lp, -theta / scale**2


# exp(2u) overflows past ~354; the sampler rejects such proposals
_MAX_LOG_SCALE = 300.0


def _log_halfnormal_jac(u: float, scale: float) -> tuple[float, float]:
    """HalfNormal(scale) log density of exp(u) plus log-Jacobian, and d/du."""
    if abs(u) > _MAX_LOG_SCALE:
        return -math.inf, math.nan
    s = math.exp(u)
    lp = _LOG_HALFNORMAL_C - math.log(scale) - 0.5 * (s / scale) ** 2 + u
    return lp, 1.0 - (s / scale) ** 2


def softplus_expit(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``log(1 + e^eta)`` and ``expit(eta)``, stable for large ``|eta|``.

    Several times faster than ``np.logaddexp`` plus ``scipy.special.expit``.
    """
    softplus = np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))
    # clipping only guards the overflow warning; expit is already 0 or 1 there
    return softplus, 1.0 / (1.0 + np.exp(-np.clip(eta, -700.0, 700.0)))


def bernoulli_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    # y*eta - log(1 + e^eta), stable for large |eta|
    return float(y @ eta - np.sum(softplus_expit(eta)[0]))


def bernoulli_terms(y: np.ndarray, eta: np.ndarray) -> tuple[float, np.ndarray]:
    """Bernoulli-logit log-likelihood and its residual ``y - expit(eta)``."""
    sp, mu = softplus_expit(eta)
    return float(y @ eta - np.sum(sp)), y - mu


def logistic_log_density(
    design,
    y,
    prior_scale: float = 1.0,
    *,
    offset=None,
    block: str = "theta",
) -> LogDensityModel:
    """Bernoulli-logit likelihood with an isotropic Normal(0, prior_scale) prior."""
    X = np.asfortranarray(_as_array(design))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but y has {y.shape[0]}")
    if not prior_scale > 0:
        raise ValueError("prior_scale must be positive")
    off = np.zeros(X.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    if off.shape != y.shape:
        raise ValueError("offset length must match y")
    q = X.shape[1]

    def logp_and_grad(theta):
        eta = off + X @ theta
        lp, resid = bernoulli_terms(y, eta)
        lpp, gp = _normal_prior(theta, prior_scale)
        return lp + lpp, X.T @ resid + gp

    return LogDensityModel(q, logp_and_grad, make_blocks([(block, q, "identity")]))


def linear_log_density(
    design,
    y,
    prior_scale: float = 1.0,
    sd_prior_scale: float = 1.0,
    *,
    offset=None,
    block: str = "theta",
    sd_block: str = "sigma_xi",
) -> LogDensityModel:
    """Gaussian linear model; parameters are ``(theta, log sigma)``.

    Priors: theta ~ Normal(0, prior_scale), sigma ~ HalfNormal(sd_prior_scale).
    """
    X = np.asfortranarray(_as_array(design))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but y has {y.shape[0]}")
    if not (prior_scale > 0 and sd_prior_scale > 0):
        raise ValueError("prior scales must be positive")
    off = np.zeros(X.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    if off.shape != y.shape:
        raise ValueError("offset length must match y")
    n, q = X.shape

    def logp_and_grad(x):
        theta, u = x[:q], x[q]
        if abs(u) > _MAX_LOG_SCALE:
            return -math.inf, np.full(q + 1, np.nan)
        resid = y - off - X @ theta
        inv_var = math.exp(-2.0 * u)
        rss = float(resid @ resid)
        lp = -0.5 * rss * inv_var - n * (u + 0.5 * LOG_2PI)
        lpp, gp = _normal_prior(theta, prior_scale)
        lps, gs = _log_halfnormal_jac(u, sd_prior_scale)
        grad = np.empty(q + 1)
        grad[:q] = inv_var * (X.T @ resid) + gp
        grad[q] = rss * inv_var - n + gs
        return lp + lpp + lps, grad

    return LogDensityModel(
        q + 1, logp_and_grad, make_blocks([(block, q, "identity"), (sd_block, 1, "log")])
    )


@dataclass(frozen=True)
class MleFit:
    theta: np.ndarray
    sigma: float | None
    iterations: int
    converged: bool
    warnings: tuple[str, ...] = ()


def _check_rank(X: np.ndarray) -> None:
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(
            f"design of shape {X.shape} is not of full column rank"
        )


def _separated(y, mu) -> bool:
    # every row fitted to within 1e-6 of its label, with both labels present
    return bool(np.ptp(y) > 0 and np.max(np.abs(y - mu)) < 1e-6)


def _newton_logistic(X, y, offset, max_iter, tol, prior_precision=0.0):
    """Damped Newton ascent on the (optionally ridge-penalized) Bernoulli log-likelihood.

    Returns (theta, iterations, converged, diverged).
    """
    k = X.shape[1]
    theta = np.zeros(k)

    def objective(t):
        return bernoulli_loglik(y, offset + X @ t) - 0.5 * prior_precision * float(t @ t)

    current = objective(theta)
    for it in range(1, max_iter + 1):
        mu = _expit(offset + X @ theta)
        grad = X.T @ (y - mu) - prior_precision * theta
        if np.max(np.abs(grad), initial=0.0) < tol:
            if prior_precision == 0.0 and _separated(y, mu):
                return theta, it - 1, False, True
            return theta, it - 1, True, False
        w = mu * (1.0 - mu)
        hess = X.T @ (X * w[:, None]) + prior_precision * np.eye(k)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        for _ in range(40):
            cand = theta + step
            value = objective(cand)
            if value >= current - 1e-12 * max(1.0, abs(current)):
                break
            step = step / 2.0
        stalled = np.max(np.abs(cand - theta), initial=0.0) < 1e-15 * (1.0 + np.max(np.abs(theta), initial=0.0))
        theta, current = cand, value
        if stalled:
            return theta, it, True, False
        if np.max(np.abs(theta), initial=0.0) > SEPARATION_BOUND:
            return theta, it, False, True
    mu = _expit(offset + X @ theta)
    grad = X.T @ (y - mu) - prior_precision * theta
    return theta, max_iter, bool(np.max(np.abs(grad), initial=0.0) < tol), False


def fit_mle(kind, design, y, *, max_iter: int = 100, tol: float = 1e-8) -> MleFit:
    """Unpenalized maximum likelihood for a logistic or linear GLM.

    Logistic fits run Newton-Raphson until the score's infinity norm drops
    below ``tol``. If a coefficient exceeds 30 in magnitude the data are
    treated as separated: a :class:`SeparationWarning` is issued and the
    current estimate returned. Linear fits are closed-form least squares with
    ``sigma`` the residual sd over ``d`` (not ``d - q``).
    """
    kind = GlmKind(kind)
    X = _as_array(design)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("design and y row counts differ")
    _check_rank(X)
    if kind is GlmKind.LINEAR:
        theta = np.linalg.lstsq(X, y, rcond=None)[0]
        resid = y - X @ theta
        return MleFit(theta, float(np.sqrt(np.mean(resid**2))), 1, True)

    theta, iters, converged, diverged = _newton_logistic(X, y, np.zeros_like(y), max_iter, tol)
    notes = []
    if diverged:
        msg = f"logistic MLE diverged (|theta| > {SEPARATION_BOUND:g}); data look separated"
        warnings.warn(msg, SeparationWarning, stacklevel=2)
        notes.append(msg)
    elif not converged:
        notes.append(f"logistic MLE did not reach tolerance {tol:g} in {max_iter} iterations")
    return MleFit(theta, None, iters, converged, tuple(notes))


def offset_glm_fit(kind, offset, covariates, y, *, max_iter: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Intercept-free GLM with a fixed offset, as used for the fluctuation step.

    ``offset`` is on the logit scale for logistic fits.
    """
    kind = GlmKind(kind)
    off = np.asarray(offset, dtype=float).ravel()
    H = np.asarray(covariates, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if H.shape[1] not in (1, 2):
        raise ValueError("fluctuation models take one or two covariates")
    if not (off.shape[0] == H.shape[0] == y.shape[0]):
        raise ValueError("offset, covariates and y must have the same length")
    if not np.all(np.isfinite(off)):
        raise ValueError("offset contains non-finite values; clamp probabilities before logit")
    if not np.all(np.isfinite(H)):
        raise ValueError("covariates contain non-finite values")
    if kind is GlmKind.LINEAR:
        return np.linalg.lstsq(H, y - off, rcond=None)[0]
    # score scales with the clever covariate; extreme propensities make H large
    scaled_tol = tol * max(1.0, float(np.max(np.abs(H), initial=0.0)))
    eps, _, converged, diverged = _newton_logistic(H, y, off, max_iter, scaled_tol)
    if not converged:
        why = "diverged" if diverged else "did not converge"
        raise ConvergenceError(f"logistic fluctuation fit {why}")
    return eps
