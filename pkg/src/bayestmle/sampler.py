"""No-U-Turn Hamiltonian Monte Carlo over a :class:`~bayestmle.glm.LogDensityModel`.

Euclidean-metric NUTS with multinomial trajectory sampling and the
generalized U-turn criterion (including the checks across merged
subtrees). Warmup adapts the step size by dual averaging and a diagonal
inverse metric over doubling windows:

    [ init buffer | window | 2*window | ... | terminal buffer ]

Only the step size is tuned in the two buffers. At the end of each window
the metric is set to the regularized sample variance of that window and
dual averaging restarts from a fresh step-size search.

Chains are independent: chain ``c`` draws from a generator seeded with
``SeedSequence(seed, spawn_key=(c,))`` and chains are merged in index order,
so identical inputs give bit-identical draws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import PosteriorDraws
from .glm import LogDensityModel

__all__ = [
    "InitializationError",
    "SamplerConfig",
    "SamplerWarning",
    "initialize",
    "sample",
    "split_rhat",
]

MAX_DELTA_H = 1000.0
DIVERGENCE_WARN_FRACTION = 0.10
RHAT_THRESHOLD = 1.05


class InitializationError(RuntimeError):
    """No finite starting point was found."""


class SamplerWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 2
    n_warmup: int = 1000
    n_draws: int = 2000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1 or self.n_draws < 1 or self.n_warmup < 0 or self.max_tree_depth < 1:
            raise ValueError("sampler counts must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    def with_seed(self, seed: int) -> "SamplerConfig":
        return SamplerConfig(
            self.n_chains, self.n_warmup, self.n_draws, self.target_accept, self.max_tree_depth, int(seed)
        )

    def to_dict(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "n_warmup": self.n_warmup,
            "n_draws": self.n_draws,
            "target_accept": self.target_accept,
            "max_tree_depth": self.max_tree_depth,
            "seed": self.seed,
        }


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain),)))


def _init_from(model: LogDensityModel, rng: np.random.Generator, retries: int = 100):
    for _ in range(retries + 1):
        x = rng.uniform(-2.0, 2.0, size=model.dim)
        logp, grad = model.logp_and_grad(x)
        if math.isfinite(logp) and np.all(np.isfinite(grad)):
            return x, logp, grad
    raise InitializationError(f"no finite log density after {retries} jittered restarts")


def initialize(model: LogDensityModel, seed: int, chain: int = 0) -> np.ndarray:
    """Starting point for ``chain``: each coordinate uniform on [-2, 2]."""
    return _chain_rng(seed, chain).uniform(-2.0, 2.0, size=model.dim)


# -- trajectory building -------------------------------------------------------


class _Tree:
    __slots__ = (
        "q_minus", "p_minus", "g_minus", "q_plus", "p_plus", "g_plus",
        "ps_minus", "ps_plus", "rho", "q_prop", "logp_prop", "g_prop",
        "log_w", "n_leapfrog", "sum_accept", "turning", "diverging",
    )


class _Integrator:
    def __init__(self, model: LogDensityModel, inv_mass: np.ndarray, rng: np.random.Generator):
        self.f = model.logp_and_grad
        self.inv_mass = inv_mass
        self.rng = rng
        self.h0 = 0.0

    def kinetic(self, p):
        return 0.5 * float(np.dot(p * self.inv_mass, p))

    def leaf(self, q, p, g, step) -> _Tree:
        p_half = p + (0.5 * step) * g
        q_new = q + step * (self.inv_mass * p_half)
        logp, g_new = self.f(q_new)
        p_new = p_half + (0.5 * step) * g_new
        t = _Tree()
        h = -logp + self.kinetic(p_new) if math.isfinite(logp) else math.inf
        if not (math.isfinite(h) and np.all(np.isfinite(g_new))):
            h = math.inf
        delta = h - self.h0
        t.diverging = not (delta <= MAX_DELTA_H)
        t.log_w = -delta if math.isfinite(h) else -math.inf
        t.sum_accept = math.exp(min(0.0, -delta)) if math.isfinite(h) else 0.0
        t.n_leapfrog = 1
        t.turning = False
        ps = self.inv_mass * p_new
        t.q_minus = t.q_plus = t.q_prop = q_new
        t.p_minus = t.p_plus = t.rho = p_new
        t.g_minus = t.g_plus = t.g_prop = g_new
        t.ps_minus = t.ps_plus = ps
        t.logp_prop = logp
        return t

    def build(self, q, p, g, direction: int, depth: int, eps: float) -> _Tree:
        if depth == 0:
            return self.leaf(q, p, g, direction * eps)
        first = self.build(q, p, g, direction, depth - 1, eps)
        if first.diverging or first.turning:
            return first
        if direction > 0:
            second = self.build(first.q_plus, first.p_plus, first.g_plus, direction, depth - 1, eps)
        else:
            second = self.build(first.q_minus, first.p_minus, first.g_minus, direction, depth - 1, eps)
        first.n_leapfrog += second.n_leapfrog
        first.sum_accept += second.sum_accept
        if second.diverging or second.turning:
            first.diverging = second.diverging
            first.turning = second.turning
            return first
        log_w = np.logaddexp(first.log_w, second.log_w)
        if second.log_w - log_w > math.log(self.rng.uniform()):
            first.q_prop, first.logp_prop, first.g_prop = second.q_prop, second.logp_prop, second.g_prop
        first.log_w = log_w
        left, right = (first, second) if direction > 0 else (second, first)
        return _merge(first, left, right)


def _persist(ps_minus, ps_plus, rho) -> bool:
    return float(np.dot(ps_minus, rho)) > 0.0 and float(np.dot(ps_plus, rho)) > 0.0


def _merge(target: _Tree, left: _Tree, right: _Tree) -> _Tree:
    """Join two time-ordered subtrees into ``target`` and run the U-turn checks."""
    rho = left.rho + right.rho
    turning = not (
        _persist(left.ps_minus, right.ps_plus, rho)
        and _persist(left.ps_minus, right.ps_minus, left.rho + right.p_minus)
        and _persist(left.ps_plus, right.ps_plus, right.rho + left.p_plus)
    )
    q_m, p_m, g_m, ps_m = left.q_minus, left.p_minus, left.g_minus, left.ps_minus
    q_p, p_p, g_p, ps_p = right.q_plus, right.p_plus, right.g_plus, right.ps_plus
    target.q_minus, target.p_minus, target.g_minus, target.ps_minus = q_m, p_m, g_m, ps_m
    target.q_plus, target.p_plus, target.g_plus, target.ps_plus = q_p, p_p, g_p, ps_p
    target.rho = rho
    target.turning = turning
    return target


def _transition(integ: _Integrator, q, logp, g, eps, max_depth):
    """One NUTS transition; returns (q, logp, g, accept_stat, n_leapfrog, depth, divergent)."""
    rng = integ.rng
    p0 = rng.standard_normal(q.shape[0]) / np.sqrt(integ.inv_mass)
    integ.h0 = -logp + integ.kinetic(p0)
    tree = _Tree()
    ps0 = integ.inv_mass * p0
    tree.q_minus = tree.q_plus = tree.q_prop = q
    tree.p_minus = tree.p_plus = tree.rho = p0
    tree.g_minus = tree.g_plus = tree.g_prop = g
    tree.ps_minus = tree.ps_plus = ps0
    tree.logp_prop = logp
    tree.log_w = 0.0
    tree.n_leapfrog = 0
    tree.sum_accept = 0.0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction > 0:
            sub = integ.build(tree.q_plus, tree.p_plus, tree.g_plus, 1, depth, eps)
        else:
            sub = integ.build(tree.q_minus, tree.p_minus, tree.g_minus, -1, depth, eps)
        tree.n_leapfrog += sub.n_leapfrog
        tree.sum_accept += sub.sum_accept
        depth += 1
        if sub.diverging:
            divergent = True
            break
        if sub.turning:
            break
        if sub.log_w - tree.log_w > math.log(rng.uniform()):
            tree.q_prop, tree.logp_prop, tree.g_prop = sub.q_prop, sub.logp_prop, sub.g_prop
        tree.log_w = np.logaddexp(tree.log_w, sub.log_w)
        left, right = (tree, sub) if direction > 0 else (sub, tree)
        _merge(tree, left, right)
        if tree.turning:
            break
    accept = tree.sum_accept / max(tree.n_leapfrog, 1)
    return tree.q_prop, tree.logp_prop, tree.g_prop, accept, tree.n_leapfrog, depth, divergent


# -- adaptation ----------------------------------------------------------------


class _DualAveraging:
    def __init__(self, eps: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.t = 0

    def update(self, accept: float) -> float:
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _find_step_size(integ: _Integrator, q, logp, g, eps: float = 1.0) -> float:
    """Double or halve ``eps`` until one leapfrog step's acceptance crosses 1/2."""
    rng = integ.rng

    def log_accept(e):
        p = rng.standard_normal(q.shape[0]) / np.sqrt(integ.inv_mass)
        integ.h0 = -logp + integ.kinetic(p)
        leaf = integ.leaf(q, p, g, e)
        return leaf.log_w if math.isfinite(leaf.log_w) else -math.inf

    la = log_accept(eps)
    direction = 1.0 if la > math.log(0.5) else -1.0
    for _ in range(100):
        new = eps * (2.0 ** direction)
        la = log_accept(new)
        if (direction > 0 and not la > math.log(0.5)) or (direction < 0 and la > math.log(0.5)):
            return new if direction < 0 else eps
        eps = new
        if eps < 1e-10 or eps > 1e7:
            break
    return eps


def _warmup_windows(n_warmup: int) -> tuple[int, list[int]]:
    """Initial buffer length and the iterations (exclusive ends) closing each metric window."""
    if n_warmup < 20:
        return n_warmup, []
    init_buf, term_buf, base = 75, 50, 25
    if init_buf + term_buf + base > n_warmup:
        init_buf = int(0.15 * n_warmup)
        term_buf = int(0.1 * n_warmup)
        base = n_warmup - init_buf - term_buf
    ends = []
    start, size = init_buf, base
    slow_end = n_warmup - term_buf
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start, size = end, 2 * size
    return init_buf, ends


def _run_chain(model: LogDensityModel, config: SamplerConfig, chain: int, columns=None):
    rng = _chain_rng(config.seed, chain)
    q, logp, g = _init_from(model, rng)
    dim = model.dim
    integ = _Integrator(model, np.ones(dim), rng)
    eps = _find_step_size(integ, q, logp, g)
    da = _DualAveraging(eps, config.target_accept)
    init_buf, window_ends = _warmup_windows(config.n_warmup)
    window = []
    for it in range(config.n_warmup):
        q, logp, g, accept, _, _, _ = _transition(integ, q, logp, g, eps, config.max_tree_depth)
        eps = da.update(accept)
        if window_ends and it >= init_buf and it < window_ends[-1]:
            window.append(q)
            if it + 1 in window_ends:
                samples = np.asarray(window)
                n = samples.shape[0]
                var = samples.var(axis=0, ddof=1) if n > 1 else np.ones(dim)
                var = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                integ.inv_mass = var
                eps = _find_step_size(integ, q, logp, g, eps)
                da = _DualAveraging(eps, config.target_accept)
                window = []
    if config.n_warmup > 0:
        eps = da.final

    columns = np.arange(dim) if columns is None else columns
    draws = np.empty((config.n_draws, len(columns)))
    accepts = np.empty(config.n_draws)
    leapfrogs = np.empty(config.n_draws, dtype=int)
    depths = np.empty(config.n_draws, dtype=int)
    divergent = np.zeros(config.n_draws, dtype=bool)
    for it in range(config.n_draws):
        q, logp, g, accepts[it], leapfrogs[it], depths[it], divergent[it] = _transition(
            integ, q, logp, g, eps, config.max_tree_depth
        )
        draws[it] = q[columns]
    stats = {
        "step_size": eps,
        "mean_accept": float(accepts.mean()),
        "n_divergent": int(divergent.sum()),
        "mean_tree_depth": float(depths.mean()),
        "mean_leapfrog": float(leapfrogs.mean()),
        "max_depth_hits": int(np.sum(depths >= config.max_tree_depth)),
    }
    return draws, stats


def split_rhat(x: np.ndarray) -> float:
    """Split-R-hat of one scalar quantity, ``x`` shaped ``(n_chains, n_draws)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within <= 0:
        return 1.0 if between <= 0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def sample(model: LogDensityModel, config: SamplerConfig | None = None, *, keep=None) -> PosteriorDraws:
    """Draw ``n_chains * n_draws`` posterior samples from ``model``.

    ``keep`` optionally restricts the returned blocks (latent-heavy models
    can drop per-row latents to save memory); diagnostics are still computed
    on the kept blocks only.
    """
    config = config or SamplerConfig()
    blocks = [b for b in model.blocks if keep is None or b.name in keep]
    if model.dim == 0:
        empty = {b.name: np.zeros((config.n_chains * config.n_draws, 0)) for b in blocks}
        return PosteriorDraws(empty, config.n_chains, config.n_draws, {"blocks": {}, "warnings": []})

    columns = np.concatenate([np.arange(b.start, b.stop) for b in blocks]) if blocks else np.zeros(0, int)
    per_chain, chain_stats = [], []
    for c in range(config.n_chains):
        draws, stats = _run_chain(model, config, c, columns)
        per_chain.append(draws)
        chain_stats.append(stats)
    stacked = np.stack(per_chain)  # (chains, draws, dim)

    out, block_diag = {}, {}
    notes = []
    offset = 0
    for b in blocks:
        unc = stacked[:, :, offset : offset + b.size]
        offset += b.size
        nat = np.exp(unc) if b.transform == "log" else unc
        out[b.name] = nat.reshape(-1, b.size)
        rhats = [split_rhat(nat[:, :, k]) for k in range(b.size)]
        block_diag[b.name] = {"rhat": float(np.nanmax(rhats)) if rhats else float("nan")}
        if rhats and np.nanmax(rhats) >= RHAT_THRESHOLD:
            notes.append(f"split-R-hat {np.nanmax(rhats):.3f} >= {RHAT_THRESHOLD} on block {b.name!r}")
    n_div = sum(s["n_divergent"] for s in chain_stats)
    frac = n_div / (config.n_chains * config.n_draws)
    if frac > DIVERGENCE_WARN_FRACTION:
        notes.append(f"{frac:.1%} of transitions diverged")
    for msg in notes:
        warnings.warn(msg, SamplerWarning, stacklevel=2)
    diagnostics = {
        "blocks": block_diag,
        "chains": chain_stats,
        "mean_accept": float(np.mean([s["mean_accept"] for s in chain_stats])),
        "n_divergent": n_div,
        "divergence_fraction": frac,
        "max_rhat": float(np.nanmax([v["rhat"] for v in block_diag.values()])) if block_diag else float("nan"),
        "warnings": notes,
    }
    return PosteriorDraws(out, config.n_chains, config.n_draws, diagnostics)
