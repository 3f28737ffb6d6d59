"""The learned sampling policy: inverse-variance-weighted exponential-tilt
structure, the empirical worst-arm inverse-SNR objective with exact gradients,
projected subgradient descent, and the analytic sample-complexity oracles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend, _pykernels
from .env import (BanditInstance, OutcomeFamily, latent_success_probs,
                  sample_contexts, true_arm_mean)
from .regress import VarianceModel, predict_variance_all
from .snr import SnrProblem, snr_value, solve_snr
from .scorekit import RunningStats

__all__ = [
    "PolicyMode",
    "PolicyConfig",
    "default_descent_schedule",
    "policy_from_theta",
    "policy_from_variances",
    "theta_denominator",
    "inv_snr_objective",
    "inv_snr_gradient",
    "inner_weight",
    "worst_inv_snr",
    "learn_theta",
    "theta_grid_oracle",
    "snr_complexity_bound",
    "kl_complexity_bound",
    "kl_complexity_policy",
    "TwoArmedLimits",
    "two_armed_limits",
]


class PolicyMode(str, enum.Enum):
    CONTEXTUAL = "contextual"
    NONCONTEXTUAL = "noncontextual"
    UNIFORM = "uniform"


def default_descent_schedule(t: int) -> int:
    return math.ceil(10.0 + math.log(t + 1.0))


@dataclass
class PolicyConfig:
    """Knobs of the sampling-policy learner."""

    mode: PolicyMode = PolicyMode.CONTEXTUAL
    box_radius: float = 100.0          # coordinate bound on the tilt vector
    variance_floor: float = 0.01
    variance_cap: float = 1.0          # outcomes in [0,1] bound the residuals
    descent_schedule: Callable[[int], int] = default_descent_schedule
    theta0: np.ndarray | None = None   # defaults to the zero vector
    active_tol: float = 1e-8           # relative active-set tolerance
    # Re-initializing at theta0 each step keeps the reachable tilt inside a
    # sum(1/n) ball, an implicit propensity floor; carrying theta across
    # steps lets early-noise tilts compound until sampling collapses.
    warm_start: bool = False
    # The actor samples from (1-d)*pi + d*uniform with d = explore_mix/sqrt(t):
    # a vanishing mixture that enforces the strict-positivity requirement on
    # propensities while the mean estimates are still noise. 0 disables.
    explore_mix: float = 2.0

    def mix_weight(self, t: int) -> float:
        if self.explore_mix <= 0.0:
            return 0.0
        return min(1.0, self.explore_mix / np.sqrt(t))

    def __post_init__(self):
        self.mode = PolicyMode(self.mode)
        if self.box_radius < 0:
            raise ValueError("box_radius must be non-negative")
        if not 0 < self.variance_floor <= self.variance_cap:
            raise ValueError("need 0 < variance_floor <= variance_cap")

    def initial_theta(self, num_arms: int) -> np.ndarray:
        theta = np.zeros(num_arms) if self.theta0 is None else np.asarray(self.theta0, float).copy()
        if theta.shape != (num_arms,):
            raise ValueError("theta0 must have one coordinate per arm")
        theta[-1] = 0.0
        theta[:-1] = np.clip(theta[:-1], -self.box_radius, self.box_radius)
        return theta


def policy_from_variances(variances: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Sampling probabilities proportional to sqrt(V(b)) * exp(theta(b)).

    Equivalent to the reciprocal-sum form 1 / sum_a sqrt(V(a)/V(b)) *
    exp(theta(a)-theta(b)); computed softmax-style so it is overflow-free and
    sums to one exactly. Exponent differences are clipped at +-500.
    """
    logits = 0.5 * np.log(variances) + theta
    shifted = np.clip(logits - logits.max(), -_pykernels.EXP_CLIP, 0.0)
    p = np.exp(shifted)
    return p / p.sum()


def policy_from_theta(variance_model: VarianceModel, theta: np.ndarray,
                      x: np.ndarray) -> np.ndarray:
    return policy_from_variances(predict_variance_all(variance_model, x), theta)


def theta_denominator(theta: np.ndarray, stats: RunningStats) -> np.ndarray:
    """Denominator matrix of the tilt-dependent weight problem: the diagonal
    tilt-weighted variance matrix plus the centered prediction gram."""
    diag = _pykernels.variance_diag(theta, stats.vgeo_mean)
    return stats.centered_pred_gram() + np.diag(diag)


def inv_snr_objective(theta: np.ndarray, w: np.ndarray, stats: RunningStats) -> float:
    """Squared inverse SNR of weight ``w`` under sampling tilt ``theta``:
    (w' (E(theta) + Ltilde) w) / (w . mean)^2."""
    return _pykernels.inv_snr_value(theta, w, stats.vgeo_mean,
                                    stats.centered_pred_gram(), stats.score_mean)


def inv_snr_gradient(theta: np.ndarray, w: np.ndarray, stats: RunningStats) -> np.ndarray:
    """Exact gradient of ``inv_snr_objective`` in the K-1 free coordinates."""
    return _pykernels.inv_snr_gradient(theta, w, stats.vgeo_mean, stats.score_mean)


def inner_weight(theta: np.ndarray, arm: int, stats: RunningStats,
                 warm: np.ndarray | None = None) -> np.ndarray:
    """Minimizing weight of the tilt-dependent objective for one arm
    (equivalently the SNR maximizer under the theta denominator)."""
    return solve_snr(SnrProblem(stats.score_mean, theta_denominator(theta, stats), arm),
                     warm=warm)


def _suboptimal_arms(mean: np.ndarray, targets=None) -> list[int]:
    top = float(mean.max())
    eligible = range(mean.shape[0]) if targets is None else targets
    return [a for a in eligible if mean[a] < top]


def worst_inv_snr(theta: np.ndarray, stats: RunningStats,
                  warm: dict[int, np.ndarray] | None = None,
                  targets=None) -> float:
    """The PSGD objective: the largest squared inverse SNR across the
    apparently suboptimal arms, each at its own minimizing weight."""
    subopt = _suboptimal_arms(stats.score_mean, targets)
    if not subopt:
        raise ValueError("every eligible arm attains the maximal mean estimate")
    worst = -np.inf
    for a in subopt:
        w = inner_weight(theta, a, stats, warm=None if warm is None else warm.get(a))
        if warm is not None:
            warm[a] = np.delete(w, a)
        worst = max(worst, inv_snr_objective(theta, w, stats))
    return worst


def learn_theta(stats: RunningStats, config: PolicyConfig,
                n_iters: int | None = None,
                theta0: np.ndarray | None = None,
                targets=None) -> np.ndarray:
    """Projected subgradient descent on the worst-arm squared inverse SNR.

    ``targets`` optionally restricts which arms the worst-case ranges over;
    the run loop passes the still-live confidence set, since sampling effort
    spent on arms whose test processes are frozen cannot shorten the run.
    Runs ``n_iters`` iterations (the config schedule at the current history
    length when omitted) and returns the best iterate. Degenerate situations
    (no data, no eligible suboptimal arm, zero subgradient) return the
    initial point unchanged.
    """
    k = stats.num_arms
    theta_init = config.initial_theta(k) if theta0 is None else theta0.astype(float).copy()
    theta_init[-1] = 0.0
    theta_init[:-1] = np.clip(theta_init[:-1], -config.box_radius, config.box_radius)
    if n_iters is None:
        n_iters = config.descent_schedule(stats.n + 1)
    if stats.n < 1 or n_iters <= 0 or not _suboptimal_arms(stats.score_mean, targets):
        return theta_init
    try:
        theta, _ = _backend.psgd_kernel(stats.score_mean, stats.vgeo_mean,
                                        stats.centered_pred_gram(), theta_init,
                                        config.box_radius, n_iters,
                                        active_tol=config.active_tol,
                                        targets=targets)
    except _pykernels.DegenerateVariance:
        return theta_init  # inner solve collapsed; keep the current tilt
    return theta


def theta_grid_oracle(stats: RunningStats, bound: float = 2.0,
                      resolution: float = 0.01) -> tuple[np.ndarray, float]:
    """Dense-grid minimizer of the PSGD objective; three-armed only (two free
    coordinates keep the grid tractable). Validation oracle for learn_theta."""
    if stats.num_arms != 3:
        raise ValueError("the grid oracle is restricted to three arms")
    grid = np.arange(-bound, bound + resolution / 2, resolution)
    best_theta, best_val = None, np.inf
    warm: dict[int, np.ndarray] = {}
    theta = np.zeros(3)
    for t0 in grid:
        theta[0] = t0
        for t1 in grid:
            theta[1] = t1
            val = worst_inv_snr(theta, stats, warm=warm)
            if val < best_val:
                best_val = val
                best_theta = theta.copy()
    return best_theta, best_val


def _unique_best_arm(mean: np.ndarray) -> int:
    top = mean.max()
    winners = np.flatnonzero(mean >= top)
    if winners.size != 1:
        raise ValueError("the best arm must be unique")
    return int(winners[0])


def snr_complexity_bound(mean: np.ndarray, denom) -> float:
    """Inverse squared minimal SNR across the suboptimal arms.

    ``denom`` is a single K x K limiting denominator matrix, a (K, K, K)
    stack, or a mapping arm -> matrix. The associated sample-size bound is
    2 * value * log(1/alpha).
    """
    mean = np.asarray(mean, dtype=float)
    best = _unique_best_arm(mean)

    def denom_for(a):
        if isinstance(denom, dict):
            return np.asarray(denom[a], dtype=float)
        arr = np.asarray(denom, dtype=float)
        return arr if arr.ndim == 2 else arr[a]

    worst = np.inf
    for a in range(mean.shape[0]):
        if a == best:
            continue
        problem = SnrProblem(mean, denom_for(a), a)
        worst = min(worst, snr_value(problem, solve_snr(problem)))
    return 1.0 / (worst * worst)


def _pairwise_kl(gap: float, var_best: float, var_other: float,
                 mass_best: float, mass_other: float) -> float:
    return gap * gap / (2.0 * (var_best / mass_best + var_other / mass_other))


def kl_complexity_bound(mean: np.ndarray, sigma_sq: np.ndarray) -> float:
    """Reciprocal of the max-min weighted Gaussian KL separation (the
    known-variance Gaussian sample-complexity constant)."""
    value, _ = kl_complexity_policy(mean, sigma_sq)
    return value


def kl_complexity_policy(mean: np.ndarray,
                         sigma_sq: np.ndarray) -> tuple[float, np.ndarray]:
    """As kl_complexity_bound, but also returns the maximizing allocation.

    The inner infimum over alternatives decomposes into pairwise Gaussian
    projections, so for a fixed best-arm mass the equalizing allocation is
    found by bisection; the outer one-dimensional concave problem is solved
    by golden-section search.
    """
    mean = np.asarray(mean, dtype=float)
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    if np.any(sigma_sq <= 0):
        raise ValueError("need strictly positive variances")
    best = _unique_best_arm(mean)
    others = np.array([a for a in range(mean.shape[0]) if a != best])
    gaps = mean[best] - mean[others]
    s_best = sigma_sq[best]
    s_others = sigma_sq[others]

    def equalized(p: float) -> tuple[float, np.ndarray]:
        # Find the common KL level reached when 1-p is split so every
        # suboptimal arm is equally hard; the level is monotone in the split.
        budget = 1.0 - p
        hi = float(np.min(gaps * gaps * p / (2.0 * s_best))) * (1.0 - 1e-12)
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            masses = s_others / (gaps * gaps / (2.0 * mid) - s_best / p)
            if masses.sum() > budget:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(hi, 1.0):
                break
        level = 0.5 * (lo + hi)
        masses = s_others / np.maximum(gaps * gaps / (2.0 * level) - s_best / p, 1e-300)
        return level, masses

    # golden-section on the concave level-vs-best-mass curve
    phi_ratio = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 1e-9, 1.0 - 1e-9
    x1 = hi - phi_ratio * (hi - lo)
    x2 = lo + phi_ratio * (hi - lo)
    f1, _ = equalized(x1)
    f2, _ = equalized(x2)
    for _ in range(200):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi_ratio * (hi - lo)
            f2, _ = equalized(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi_ratio * (hi - lo)
            f1, _ = equalized(x1)
        if hi - lo <= 1e-13:
            break
    p_star = 0.5 * (lo + hi)
    level, masses = equalized(p_star)
    pi = np.empty(mean.shape[0])
    pi[best] = p_star
    pi[others] = masses
    pi /= pi.sum()
    return 1.0 / level, pi


@dataclass(frozen=True)
class TwoArmedLimits:
    """Closed-form limiting policy and sample-complexity bound for two arms,
    with Monte-Carlo standard errors where an expectation was estimated."""

    policy: Callable[[np.ndarray], np.ndarray]
    complexity: float
    complexity_se: float
    improvement_detected: bool
    improvement_fraction: float


def two_armed_limits(instance: BanditInstance,
                     g: Callable[[np.ndarray], np.ndarray] | None = None,
                     v: Callable[[np.ndarray], np.ndarray] | None = None,
                     draws: int = 10**6,
                     rng: np.random.Generator | None = None) -> TwoArmedLimits:
    """Two-armed limits from ground truth (oracle context).

    ``g``/``v`` map a batch of contexts (n, d) to (n, 2) conditional means /
    variances; they default to the instance's truth and exist so heterogeneous
    conditional structures outside the built-in family can be studied.
    """
    if instance.num_arms != 2:
        raise ValueError("two_armed_limits requires exactly two arms")
    if rng is None:
        rng = np.random.default_rng(0)
    contexts = sample_contexts(instance, draws, rng)

    def true_cond_var(x):
        p = latent_success_probs(instance, x)
        out = p * (1.0 - p)
        if instance.outcome_family is OutcomeFamily.BETA_PROBIT:
            out = 0.5 * out
        return out

    g_fn = g if g is not None else (lambda x: latent_success_probs(instance, x))
    v_fn = v if v is not None else true_cond_var
    cond_mean = np.asarray(g_fn(contexts), dtype=float)
    cond_var = np.asarray(v_fn(contexts), dtype=float)

    if g is None:
        mu = np.array([true_arm_mean(instance, 0), true_arm_mean(instance, 1)])
    else:
        mu = cond_mean.mean(axis=0)
    gap = mu[0] - mu[1]
    if gap == 0.0:
        raise ValueError("the two arm means must differ")

    roots = np.sqrt(cond_var)
    dev = (cond_mean[:, 0] - mu[0]) - (cond_mean[:, 1] - mu[1])
    per_draw = (roots[:, 0] + roots[:, 1]) ** 2 + dev * dev
    complexity = 2.0 * float(per_draw.mean()) / (gap * gap)
    se = 2.0 * float(per_draw.std(ddof=1)) / np.sqrt(draws) / (gap * gap)
    signs = (cond_mean[:, 0] - mu[0]) * (cond_mean[:, 1] - mu[1])
    frac = float(np.mean(signs < 0.0))

    def limit_policy(x: np.ndarray) -> np.ndarray:
        root = np.sqrt(v_fn(np.atleast_2d(x)))
        return root / root.sum(axis=1, keepdims=True)

    return TwoArmedLimits(policy=limit_policy, complexity=complexity,
                          complexity_se=se, improvement_detected=frac > 0.0,
                          improvement_fraction=frac)
