"""Doubly-robust score vectors and the online sufficient statistics consumed
by the weight solver, the confidence sequence, and the policy learner."""

from __future__ import annotations

import numpy as np

from .regress import MeanModel, predict_mean_all

__all__ = [
    "PositivityError",
    "compute_score",
    "score_from_predictions",
    "RunningStats",
    "DriftTracker",
    "check_weight",
]

WEIGHT_TOL = 1e-8


class PositivityError(ValueError):
    """Raised when a score is requested for a non-positive propensity."""


def compute_score(mean_model: MeanModel, x: np.ndarray, taken_arm: int, y: float,
                  propensity: float, num_arms: int) -> np.ndarray:
    """Doubly-robust score vector for one step.

    Coordinate b equals the model prediction g(x, b); the taken arm
    additionally receives the inverse-propensity-weighted residual
    (y - g(x, b)) / propensity, making every coordinate conditionally
    unbiased for the arm mean.
    """
    if num_arms != mean_model.num_arms:
        raise ValueError("num_arms does not match the mean model")
    preds = predict_mean_all(mean_model, x)
    return score_from_predictions(preds, taken_arm, y, propensity)


def score_from_predictions(preds: np.ndarray, taken_arm: int, y: float,
                           propensity: float) -> np.ndarray:
    if propensity <= 0.0:
        raise PositivityError(f"propensity must be positive, got {propensity}")
    phi = np.array(preds, dtype=float)
    phi[taken_arm] += (y - phi[taken_arm]) / propensity
    return phi


def check_weight(w: np.ndarray, arm: int, tol: float = WEIGHT_TOL):
    """Validate membership of the per-arm weight set: coordinate ``arm`` is
    -1 and the remaining coordinates form a probability vector."""
    w = np.asarray(w, dtype=float)
    rest = np.delete(w, arm)
    if (abs(w[arm] + 1.0) > tol or rest.min(initial=0.0) < -tol
            or abs(rest.sum() - 1.0) > tol):
        raise ValueError(f"weight vector violates the arm-{arm} constraint set: {w}")


class RunningStats:
    """Online moments of the score/prediction/variance streams.

    Maintains, as running averages over the steps seen so far:
      * ``score_mean``  -- mean of the score vectors,
      * ``score_gram``  -- gram of scores centered at the *running* mean of
        their own step (the centering the stopping-rule variance uses),
      * ``pred_mean`` / ``pred_gram`` -- first two moments of the per-step
        conditional-mean predictions,
      * ``vgeo_mean``   -- mean of outer(sqrt(V), sqrt(V)) over the per-step
        truncated conditional-variance predictions.
    All updates are O(K^2).
    """

    def __init__(self, num_arms: int):
        self.num_arms = num_arms
        self.n = 0
        self.score_mean = np.zeros(num_arms)
        self.score_gram = np.zeros((num_arms, num_arms))
        self.pred_mean = np.zeros(num_arms)
        self.pred_gram = np.zeros((num_arms, num_arms))
        self.vgeo_mean = np.zeros((num_arms, num_arms))

    def update(self, score: np.ndarray, preds: np.ndarray, vtrunc: np.ndarray):
        """Fold in one step; centering uses the mean *including* this step."""
        self.n += 1
        t = self.n
        self.score_mean += (score - self.score_mean) / t
        u = score - self.score_mean
        self.score_gram += (np.outer(u, u) - self.score_gram) / t
        self.pred_mean += (preds - self.pred_mean) / t
        self.pred_gram += (np.outer(preds, preds) - self.pred_gram) / t
        s = np.sqrt(vtrunc)
        self.vgeo_mean += (np.outer(s, s) - self.vgeo_mean) / t

    def arm_variances(self) -> np.ndarray:
        return self.score_gram.diagonal().copy()

    def centered_pred_gram(self) -> np.ndarray:
        """Gram of predictions centered at the running *score* mean; PSD."""
        m, h = self.score_mean, self.pred_mean
        return (self.pred_gram - np.outer(h, m) - np.outer(m, h) + np.outer(m, m))

    def weighted_variance(self, w: np.ndarray) -> float:
        """Cumulative conditional variance of a constant weight vector."""
        return float(w @ self.score_gram @ w)

    def copy(self) -> "RunningStats":
        out = RunningStats(self.num_arms)
        out.n = self.n
        out.score_mean = self.score_mean.copy()
        out.score_gram = self.score_gram.copy()
        out.pred_mean = self.pred_mean.copy()
        out.pred_gram = self.pred_gram.copy()
        out.vgeo_mean = self.vgeo_mean.copy()
        return out


class DriftTracker:
    """Per-arm test processes: running drift and variance sums of the weighted
    score combinations, plus the elimination ledger.

    The weight used at a step must be chosen before that step's score is seen;
    ``update`` is called with the stats already folded so the centering mean
    includes the current step.
    """

    def __init__(self, num_arms: int):
        self.num_arms = num_arms
        self.n = 0
        self.steps = np.zeros(num_arms, dtype=np.int64)  # freezes at elimination
        self.drift_sum = np.zeros(num_arms)
        self.var_sum = np.zeros(num_arms)
        self.eliminated = np.zeros(num_arms, dtype=bool)
        self.elimination_time = np.full(num_arms, -1, dtype=np.int64)

    def update(self, score: np.ndarray, score_mean: np.ndarray,
               weights: dict[int, np.ndarray]):
        """Advance every tracked arm by one step.

        ``weights`` maps arm -> weight vector; arms absent from the mapping
        (eliminated ones) are frozen. Weights outside the per-arm constraint
        set raise.
        """
        self.n += 1
        centered = score - score_mean
        for a, w in weights.items():
            check_weight(w, a)
            self.steps[a] += 1
            self.drift_sum[a] += float(w @ score)
            self.var_sum[a] += float(w @ centered) ** 2

    def drift_mean(self, a: int) -> float:
        return self.drift_sum[a] / self.steps[a] if self.steps[a] else 0.0

    def sigma(self, a: int) -> float:
        return np.sqrt(self.var_sum[a] / self.steps[a]) if self.steps[a] else 0.0

    def eliminate(self, a: int, t: int):
        if not self.eliminated[a]:
            self.eliminated[a] = True
            self.elimination_time[a] = t

    def live_arms(self) -> list[int]:
        return [a for a in range(self.num_arms) if not self.eliminated[a]]
