"""Structural metrics of the agent collective.

* ``integration_phi``: total correlation of the agents' discretized latents.
* ``reflexivity_r``: share of the logit-gradient mass that flows through the
  message slots rather than the substrate view.
* ``temporal_persistence``: lag autocorrelation of latent trajectories.
* ``causal_efficacy``: KL between factual and intervened rollouts after a
  message symbol is resampled.
* ``synergy_weight``: whole-minus-best-proper-subset information about a target.

Information quantities are in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import agents as ag
from .comm import InsufficientSamples
from .info import (Discretizer, as_symbols, entropy, entropy_from_counts, joint_symbols, mi_exact,
                   mutual_information)

NA = "NA"


def principal_components(x: np.ndarray, k: int) -> np.ndarray:
    """Project rows of ``x`` (T, d) onto their top-``k`` principal axes.

    Axis signs are fixed so the largest-magnitude loading is positive, which
    keeps the projection deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    if k >= x.shape[1]:
        return centered
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    vt = vt[:k]
    signs = np.sign(vt[np.arange(k), np.argmax(np.abs(vt), axis=1)])
    signs[signs == 0] = 1.0
    return centered @ (vt * signs[:, None]).T


def total_correlation(symbols: list[np.ndarray]) -> float:
    """sum_i H(X_i) - H(X_1..X_n) for paired discrete samples."""
    if len(symbols) < 2:
        return 0.0
    return max(sum(entropy(s) for s in symbols) - entropy(joint_symbols(*symbols)), 0.0)


def integration_phi(latents, bins: int = 4, strategy: str = "quantile",
                    max_agents: int = 8, min_samples: int = 1) -> float:
    """Total correlation over agents' discretized latents.

    ``latents`` is (T, n) for scalar latents or (T, n, dims); each agent's
    latent is binned per dimension and coded jointly into one symbol. Systems
    larger than ``max_agents`` are split into consecutive groups of at most
    ``max_agents`` agents and the group totals are summed.
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    t, n = x.shape[:2]
    if t < min_samples:
        raise InsufficientSamples(f"{t} samples < {min_samples} required")
    syms = [Discretizer(bins, strategy).fit_symbols(x[:, i]) for i in range(n)]
    return sum(total_correlation(syms[g:g + max_agents]) for g in range(0, n, max_agents))


def reflexivity_r(bank: ag.AgentBank, inp: ag.AgentInput) -> np.ndarray:
    """Per-agent R = G_m / (G_m + G_s) over a batch; 0 where both vanish.

    G_m and G_s are the batch means of the L1 norms of d(mean logit)/d(message
    slots) and d(mean logit)/d(view).
    """
    d_view, d_msgs = ag.logit_input_gradients(bank, inp)
    if d_view.ndim == 2:
        d_view, d_msgs = d_view[:, None], d_msgs[:, None]
    n, b = d_view.shape[:2]
    g_s = np.abs(d_view).reshape(n, b, -1).sum(axis=2).mean(axis=1)
    g_m = np.abs(d_msgs).reshape(n, b, -1).sum(axis=2).mean(axis=1)
    total = g_m + g_s
    return np.where(total > 0, g_m / np.where(total > 0, total, 1.0), 0.0)


def temporal_persistence(trajectory, lag: int) -> float:
    """Mean over latent dimensions (and agents) of the lag-``lag`` Pearson autocorrelation.

    ``trajectory`` is (T,), (T, d) or (T, n, d). A dimension that is constant
    over the trajectory contributes 1; one whose lagged halves have zero
    variance but is not constant contributes 0.
    """
    x = np.asarray(trajectory, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    x = x.reshape(x.shape[0], -1)
    if lag < 0:
        raise ValueError("lag must be >= 0")
    if x.shape[0] <= lag:
        raise InsufficientSamples(f"trajectory of length {x.shape[0]} too short for lag {lag}")
    if lag == 0:
        return 1.0
    a, b = x[:-lag], x[lag:]
    constant = np.all(x == x[0], axis=0)
    sa, sb = a.std(axis=0), b.std(axis=0)
    cov = ((a - a.mean(axis=0)) * (b - b.mean(axis=0))).mean(axis=0)
    ok = (sa > 0) & (sb > 0)
    r = np.where(ok, cov / np.where(ok, sa * sb, 1.0), 0.0)
    vals = np.where(constant, 1.0, np.clip(r, -1.0, 1.0))
    return float(vals.mean())


def bernoulli_kl_bits(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL(Bern(p) || Bern(q)) in bits, elementwise."""
    p = np.clip(p, ag.EPS_CLAMP, 1 - ag.EPS_CLAMP)
    q = np.clip(q, ag.EPS_CLAMP, 1 - ag.EPS_CLAMP)
    return (p * np.log2(p / q) + (1 - p) * np.log2((1 - p) / (1 - q)))


def causal_efficacy(world, edge: tuple[int, int], horizon: int, *,
                    observed=None, symbol: int | None = None) -> float:
    """Interventional KL (bits) through the message layer.

    The symbol that sender ``i`` emits on ``edge`` (i, j) at the world's tick t
    is replaced by ``symbol`` (default: a uniform draw from the run's seeded
    substream for this edge and tick); receiver ``j`` reads it at t+1. Factual
    and intervened copies then run without learning, and at tick t+``horizon``
    the predictions of the ``observed`` agents (default: all) are compared by
    per-cell Bernoulli KL, summed over cells and averaged over agents. The
    substrate is identical in both copies, so only the message path carries
    the difference; at horizon 0 the symbol has not been read yet and E = 0.
    """
    from .world import intervene, rollout, tick

    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    i, j = edge
    if horizon == 0 or not world.topology.has_edge(i, j):
        return 0.0
    observed = list(range(world.topology.n)) if observed is None else list(observed)
    sent = tick(world, learn=False)
    p_fact = rollout(sent, horizon - 1)
    p_int = rollout(intervene(sent, edge, symbol), horizon - 1)
    kl = bernoulli_kl_bits(p_fact[observed], p_int[observed]).sum(axis=1)
    return float(kl.mean())


def _mi_codes(s: np.ndarray, n_s: int, x: np.ndarray, n_x: int) -> float:
    joint = np.bincount(s * n_x + x, minlength=n_s * n_x).reshape(n_s, n_x)
    h = entropy_from_counts
    return max(h(joint.sum(axis=1)) + h(joint.sum(axis=0)) - h(joint), 0.0)


class _SubsetInfo:
    """Memoized I(S; X_sub) for subsets of discrete variables."""

    def __init__(self, target, variables):
        self.s = as_symbols(target)
        self.n_s = int(self.s.max()) + 1 if self.s.size else 1
        self.cols = [as_symbols(c) for c in np.asarray(variables).T]
        self.sizes = [int(c.max()) + 1 if c.size else 1 for c in self.cols]
        self.cache: dict[tuple[int, ...], float] = {}

    def __call__(self, sub: tuple[int, ...]) -> float:
        if sub not in self.cache:
            size = int(np.prod([self.sizes[k] for k in sub], dtype=np.float64))
            if size * self.n_s <= 1 << 22:
                code = np.zeros_like(self.s)
                for k in sub:
                    code = code * self.sizes[k] + self.cols[k]
                self.cache[sub] = _mi_codes(self.s, self.n_s, code, size)
            else:
                self.cache[sub] = mutual_information(self.s, joint_symbols(*(self.cols[k] for k in sub)))
        return self.cache[sub]


def synergy_weight(target, variables, subset, min_samples: int = 1, _info=None) -> float:
    """w(subset) = max(0, I(S; X_subset) - max over proper non-empty subsets I(S; X_sub)).

    ``target`` is (T,) samples of S; ``variables`` is (T, n) discrete samples.
    """
    variables = np.asarray(variables)
    subset = tuple(sorted(subset))
    if variables.shape[0] < min_samples:
        raise InsufficientSamples(f"{variables.shape[0]} samples < {min_samples} required")
    info = _info or _SubsetInfo(target, variables)
    best = max((info(sub) for r in range(1, len(subset)) for sub in combinations(subset, r)),
               default=0.0)
    return max(0.0, info(subset) - best)


def synergy_weight_exact(pmf: dict[tuple, float], target_index: int, subset) -> float:
    """Same weight on an exact joint pmf over tuples (target at ``target_index``)."""
    subset = tuple(subset)
    whole = mi_exact(pmf, [target_index], subset)
    best = max((mi_exact(pmf, [target_index], sub)
                for r in range(1, len(subset)) for sub in combinations(subset, r)), default=0.0)
    return max(0.0, whole - best)


@dataclass
class SynergyWeights:
    weights: dict[tuple[int, ...], float]
    target: str = "S"

    def __getitem__(self, subset) -> float:
        return self.weights.get(tuple(sorted(subset)), 0.0)


def synergy_weights(target, variables, k_max: int = 3, min_size: int = 2,
                    min_samples: int = 1, target_name: str = "S") -> SynergyWeights:
    """Weights of every agent subset with ``min_size <= |subset| <= k_max``."""
    variables = np.asarray(variables)
    n = variables.shape[1]
    info = _SubsetInfo(target, variables)
    out = {}
    for size in range(min_size, k_max + 1):
        for sub in combinations(range(n), size):
            out[sub] = synergy_weight(target, variables, sub, min_samples, info)
    return SynergyWeights(out, target_name)


@dataclass
class MetricsRecord:
    tick: int
    phi: float | str = NA
    r_mean: float | str = NA
    t_persistence: dict[int, float | str] = field(default_factory=dict)
    e_efficacy: float | str = NA
    per_agent_loss: list[float] = field(default_factory=list)
    gamma_mean: float | str = NA
    gamma_max: float | str = NA
    coherence: float | str = NA

    @staticmethod
    def header(lags) -> list[str]:
        return (["tick", "phi", "r_mean"] + [f"t_lag{lag}" for lag in lags]
                + ["e_efficacy", "loss_mean", "gamma_mean", "gamma_max", "coherence",
                   "per_agent_loss"])

    def row(self, lags) -> list[str]:
        def fmt(v):
            if isinstance(v, str):
                return v
            v = float(v)
            return repr(v) if math.isfinite(v) else NA

        loss_mean = fmt(float(np.mean(self.per_agent_loss))) if self.per_agent_loss else NA
        return ([str(self.tick), fmt(self.phi), fmt(self.r_mean)]
                + [fmt(self.t_persistence.get(lag, NA)) for lag in lags]
                + [fmt(self.e_efficacy), loss_mean, fmt(self.gamma_mean), fmt(self.gamma_max),
                   fmt(self.coherence), ",".join(fmt(v) for v in self.per_agent_loss) or NA])
