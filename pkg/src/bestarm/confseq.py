"""Anytime-valid machinery: the Gaussian-mixture crossing boundary, per-arm
lower confidence bounds, the shrinking confidence set over arm indices, and
the full sequential best-arm-identification loop."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .env import BanditInstance, History, sample_context, sample_outcome
from .policy import PolicyConfig, PolicyMode, learn_theta, policy_from_variances
from .regress import (augment, fit_mean_model, fit_variance_model,
                      predict_mean_design, predict_variance_design)
from .scorekit import DriftTracker, RunningStats, score_from_predictions
from .snr import default_weight, snr_max_weight

__all__ = [
    "boundary",
    "lower_bound",
    "select_rho",
    "ConfidenceSet",
    "RunConfig",
    "BaiResult",
    "run_bai",
]


def boundary(t: int, x: float, alpha: float, rho: float) -> float:
    """Time-uniform crossing threshold at scale ``x``.

    sqrt(2 (rho^2 + 1/(t x^2)) / rho^2 * log(1 + sqrt(t x^2 rho^2 + 1) /
    (2 alpha))) / sqrt(t); decays like sqrt(log t / t) for fixed arguments.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    if x <= 0.0:
        raise ValueError("the scale x must be positive; a zero-variance arm is untestable")
    if not 0.0 < alpha < 1.0 or rho <= 0.0:
        raise ValueError("need alpha in (0,1) and rho > 0")
    tx2 = t * x * x
    rho2 = rho * rho
    log_term = math.log1p(math.sqrt(tx2 * rho2 + 1.0) / (2.0 * alpha))
    return math.sqrt(2.0 * (rho2 + 1.0 / tx2) / rho2 * log_term / t)


def lower_bound(drift: float, sigma: float, t: int, alpha: float, rho: float) -> float:
    """High-probability lower bound on the test-process drift; -inf while the
    variance estimate is still zero (the arm is untestable this step)."""
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return -math.inf
    return drift - sigma * boundary(t, sigma, alpha, rho)


def select_rho(alpha: float, t_star: float) -> float:
    """Boundary scale whose power is (approximately) maximized at intrinsic
    time ``t_star``: sqrt((-log(2a) + log(1 - 2 log(2a))) / t*)."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("select_rho requires alpha in (0, 0.5)")
    if t_star < 1.0:
        raise ValueError("t_star must be at least 1")
    la = math.log(2.0 * alpha)
    return math.sqrt((-la + math.log(1.0 - 2.0 * la)) / t_star)


class ConfidenceSet:
    """Monotone-shrinking set of candidate best arms.

    An arm leaves permanently the first time its lower bound crosses above
    zero at or after the burn-in step; nothing is removed earlier.
    """

    def __init__(self, num_arms: int):
        self.num_arms = num_arms
        self.live = np.ones(num_arms, dtype=bool)
        self.removal_time = np.full(num_arms, -1, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.live.sum())

    def members(self) -> list[int]:
        return [a for a in range(self.num_arms) if self.live[a]]

    def update(self, lower_bounds: dict[int, float], t: int, t0: int) -> list[int]:
        """Apply one step of eliminations; returns the arms removed now."""
        if t < t0:
            return []
        removed = []
        for a, lb in lower_bounds.items():
            if self.live[a] and lb > 0.0:
                self.live[a] = False
                self.removal_time[a] = t
                removed.append(a)
        return removed


@dataclass
class RunConfig:
    """Everything one identification run needs besides the instance."""

    alpha: float = 0.1
    rho: float = 0.06
    burn_in: int = 100
    horizon: int = 30_000
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    refit_every: int = 1          # model refresh cadence (1 = every step)
    trajectory_path: str | None = None  # per-step debug CSV

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.burn_in < 0 or self.horizon < 1:
            raise ValueError("need burn_in >= 0 and horizon >= 1")
        if self.refit_every < 1:
            raise ValueError("refit_every must be at least 1")


@dataclass(frozen=True)
class BaiResult:
    """Outcome of one run."""

    recommended: int
    tau: int
    correct: bool
    elimination_times: tuple[int | None, ...]
    hit_cap: bool
    tie_broken: bool


def _bound_for(tracker: DriftTracker, a: int, alpha: float, rho: float) -> float:
    steps = int(tracker.steps[a])
    if steps < 1:
        return -math.inf
    return lower_bound(tracker.drift_mean(a), tracker.sigma(a), steps, alpha, rho)


def run_bai(instance: BanditInstance, config: RunConfig,
            rng: np.random.Generator) -> BaiResult:
    """Run the sequential loop until the confidence set is a singleton (at or
    after burn-in) or the horizon cap is reached.

    Per step: refresh the nuisance models on the pre-step history, learn the
    sampling tilt and the per-arm test weights from pre-step statistics, then
    interact, fold the new score into the running statistics and the live test
    processes, and apply eliminations.
    """
    k = instance.num_arms
    mode = config.policy.mode
    model_dim = instance.context_dim if mode is PolicyMode.CONTEXTUAL else 0
    vfloor, vcap = config.policy.variance_floor, config.policy.variance_cap

    history = History(model_dim)
    mean_model = fit_mean_model(history, k, model_dim)
    var_model = fit_variance_model(history, mean_model, vfloor, vcap)
    stats = RunningStats(k)
    tracker = DriftTracker(k)
    conf = ConfidenceSet(k)
    theta = config.policy.initial_theta(k)
    defaults = {a: default_weight(k, a) for a in range(k)}
    weights = {a: defaults[a].copy() for a in range(k)}
    uniform = np.full(k, 1.0 / k)
    dirty: set[int] = set()
    empty_x = np.zeros(0)

    traj = None
    traj_file = None
    if config.trajectory_path is not None:
        traj_file = open(config.trajectory_path, "w", newline="")
        traj = csv.writer(traj_file)
        traj.writerow(["t", "arm", "outcome", "propensity"]
                      + [f"score_{a}" for a in range(k)]
                      + [f"lower_bound_{a}" for a in range(k)])

    recommended = -1
    tie_broken = False
    hit_cap = False
    tau = config.horizon
    try:
        for t in range(1, config.horizon + 1):
            if dirty and (t - 1) % config.refit_every == 0:
                for a in sorted(dirty):
                    mean_model = fit_mean_model(history, k, model_dim,
                                                warm=mean_model, only_arm=a)
                    var_model = fit_variance_model(history, mean_model, vfloor, vcap,
                                                   warm=var_model, only_arm=a)
                dirty.clear()

            live = conf.members()
            if mode is not PolicyMode.UNIFORM and stats.n >= 1:
                # the worst-case in the sampling objective ranges over the
                # still-live arms only; effort on frozen test processes
                # cannot shorten the run
                start = theta if config.policy.warm_start else None
                theta = learn_theta(stats, config.policy,
                                    n_iters=config.policy.descent_schedule(t),
                                    theta0=start, targets=live)

            if stats.n >= 1:
                for a in live:
                    weights[a] = snr_max_weight(stats.score_mean, stats.score_gram, a,
                                                w0=defaults[a],
                                                warm=np.delete(weights[a], a))

            x_env = sample_context(instance, rng)
            x_model = x_env if mode is PolicyMode.CONTEXTUAL else empty_x
            x_design = augment(x_model)
            vrow = predict_variance_design(var_model, x_design)
            if mode is PolicyMode.UNIFORM:
                pi = uniform
            else:
                pi = policy_from_variances(vrow, theta)
                mix = config.policy.mix_weight(t)
                if mix > 0.0:
                    pi = (1.0 - mix) * pi + mix / k
            arm = int(rng.choice(k, p=pi))
            y = sample_outcome(instance, x_env, arm, rng)

            preds = predict_mean_design(mean_model, x_design)
            phi = score_from_predictions(preds, arm, y, float(pi[arm]))
            stats.update(phi, preds, vrow)
            tracker.update(phi, stats.score_mean, {a: weights[a] for a in live})
            history.append(x_model, arm, y, float(pi[arm]))
            dirty.add(arm)

            bounds = {a: _bound_for(tracker, a, config.alpha, config.rho) for a in live}
            for a in conf.update(bounds, t, config.burn_in):
                tracker.eliminate(a, t)

            if traj is not None:
                all_bounds = [_bound_for(tracker, a, config.alpha, config.rho)
                              for a in range(k)]
                traj.writerow([t, arm, f"{y:.10g}", f"{pi[arm]:.10g}"]
                              + [f"{v:.10g}" for v in phi]
                              + [f"{v:.10g}" for v in all_bounds])

            if len(conf) <= 1 and t >= config.burn_in:
                tau = t
                members = conf.members()
                if len(members) == 1:
                    recommended = members[0]
                else:
                    # every remaining arm left simultaneously: recommend the
                    # one with the smallest (least-rejecting) lower bound
                    all_bounds = np.array([_bound_for(tracker, a, config.alpha, config.rho)
                                           for a in range(k)])
                    recommended = int(np.argmin(all_bounds))
                    tie_broken = True
                break
        else:
            hit_cap = True
            tau = config.horizon
            live = conf.members()
            live_bounds = np.array([_bound_for(tracker, a, config.alpha, config.rho)
                                    for a in live])
            recommended = live[int(np.argmin(live_bounds))]
    finally:
        if traj_file is not None:
            traj_file.close()

    elim = tuple(int(conf.removal_time[a]) if conf.removal_time[a] >= 0 else None
                 for a in range(k))
    return BaiResult(recommended=recommended, tau=tau,
                     correct=recommended == instance.best_arm,
                     elimination_times=elim, hit_cap=hit_cap, tie_broken=tie_broken)
