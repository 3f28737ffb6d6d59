"""Online nuisance estimation: per-arm fractional-probit conditional means and
truncated linear conditional-variance models, refit from history on demand."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .env import History

__all__ = [
    "MeanModel",
    "VarianceModel",
    "fit_mean_model",
    "predict_mean",
    "predict_mean_all",
    "fit_variance_model",
    "predict_variance",
    "predict_variance_all",
]

PRED_CLIP = 1e-6          # predictions live in [PRED_CLIP, 1 - PRED_CLIP]
MAX_NEWTON_ITER = 50
GRAD_TOL = 1e-8
RIDGE = 1e-8
LINK_CLIP = 8.0           # |linear predictor| cap inside the optimizer
PRIOR_MEAN = 0.5          # never-pulled arms
PRIOR_SQ_RESIDUAL = 0.25  # worst-case Bernoulli variance for [0,1] outcomes


@dataclass
class MeanModel:
    """Per-arm probit coefficients beta_a in R^{d+1} (intercept first).

    Arms with fewer than d+2 observations carry an intercept-only fit at the
    arm's sample mean; never-pulled arms carry the 0.5 prior.
    """

    coefs: np.ndarray               # (K, d+1)
    context_dim: int
    fit_time: int = 0
    converged: np.ndarray = field(default=None)  # per-arm flag
    fallback: np.ndarray = field(default=None)   # per-arm constant-fit flag

    def __post_init__(self):
        k = self.coefs.shape[0]
        if self.converged is None:
            self.converged = np.ones(k, dtype=bool)
        if self.fallback is None:
            self.fallback = np.zeros(k, dtype=bool)

    @property
    def num_arms(self) -> int:
        return self.coefs.shape[0]


@dataclass
class VarianceModel:
    """Per-arm linear coefficients on (1, x) predicting squared residuals;
    predictions are truncated into [floor, cap] at evaluation time."""

    coefs: np.ndarray               # (K, d+1)
    context_dim: int
    floor: float
    cap: float
    fit_time: int = 0

    def __post_init__(self):
        if not 0.0 < self.floor <= self.cap:
            raise ValueError("need 0 < floor <= cap")

    @property
    def num_arms(self) -> int:
        return self.coefs.shape[0]


def _design(contexts: np.ndarray) -> np.ndarray:
    n = contexts.shape[0]
    return np.hstack([np.ones((n, 1)), contexts])


def _constant_coef(p: float, dim: int) -> np.ndarray:
    coef = np.zeros(dim + 1)
    coef[0] = ndtri(np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP))
    return coef


def _quasi_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    """Mean Bernoulli quasi-log-likelihood of fractional responses."""
    p = np.clip(ndtr(eta), 1e-12, 1.0 - 1e-12)
    return float(y @ np.log(p) + (1.0 - y) @ np.log1p(-p)) / y.shape[0]


def _fit_probit_arm(X: np.ndarray, y: np.ndarray, beta0: np.ndarray) -> tuple[np.ndarray, bool]:
    """Fractional-probit quasi-MLE via Fisher-scoring Newton steps with
    step halving; outcomes in [0,1] are treated as fractional responses.
    The objective and its derivatives are per-observation means, so the
    gradient tolerance is sample-size free."""
    n = y.shape[0]
    beta = beta0.copy()
    ll = _quasi_loglik(np.clip(X @ beta, -LINK_CLIP, LINK_CLIP), y)
    for _ in range(MAX_NEWTON_ITER):
        eta = np.clip(X @ beta, -LINK_CLIP, LINK_CLIP)
        p = np.clip(ndtr(eta), 1e-12, 1.0 - 1e-12)
        dens = np.exp(-0.5 * eta * eta) / np.sqrt(2.0 * np.pi)
        ratio = dens / (p * (1.0 - p))
        grad = X.T @ ((y - p) * ratio) / n
        if np.linalg.norm(grad) < GRAD_TOL:
            return beta, True
        w = dens * ratio  # expected information weights
        info = (X * w[:, None]).T @ X / n
        info.flat[:: info.shape[0] + 1] += RIDGE
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            return beta, False
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_ll = _quasi_loglik(np.clip(X @ cand, -LINK_CLIP, LINK_CLIP), y)
            if cand_ll >= ll:
                break
            scale *= 0.5
        else:
            return beta, False
        beta, ll = cand, cand_ll
    return beta, False  # ran out of iterations; keep last iterate


def fit_mean_model(history: History, num_arms: int, context_dim: int,
                   warm: MeanModel | None = None,
                   only_arm: int | None = None) -> MeanModel:
    """Fit (or refit) the per-arm conditional-mean model from ``history``.

    Only observations of arm a enter beta_a, so passing ``only_arm`` after a
    single new observation reproduces a full refit at a fraction of the cost.
    Non-convergence keeps the last iterate and flags the arm; it never aborts.
    """
    if warm is not None:
        model = MeanModel(warm.coefs.copy(), context_dim, len(history),
                          warm.converged.copy(), warm.fallback.copy())
    else:
        model = MeanModel(np.tile(_constant_coef(PRIOR_MEAN, context_dim), (num_arms, 1)),
                          context_dim, len(history),
                          np.ones(num_arms, dtype=bool), np.ones(num_arms, dtype=bool))
    model.fit_time = len(history)
    arms = range(num_arms) if only_arm is None else [only_arm]
    for a in arms:
        rows = history.arm_rows(a)
        y = history.outcomes[rows]
        if rows.size < context_dim + 2:
            # constant predictor at the arm's smoothed sample mean; the unit
            # pseudo-observation at the 0.5 prior keeps a single extreme
            # outcome from pinning the prediction to the clip boundary
            smoothed = (float(y.sum()) + PRIOR_MEAN) / (rows.size + 1.0)
            model.coefs[a] = _constant_coef(smoothed, context_dim)
            model.converged[a] = True
            model.fallback[a] = True
            continue
        X = _design(history.contexts[rows])
        start = model.coefs[a] if (warm is not None and not model.fallback[a]) \
            else _constant_coef(float(np.clip(y.mean(), PRED_CLIP, 1 - PRED_CLIP)), context_dim)
        beta, ok = _fit_probit_arm(X, y, start)
        model.coefs[a] = beta
        model.converged[a] = ok
        model.fallback[a] = False
    return model


def augment(x: np.ndarray) -> np.ndarray:
    """Prepend the intercept column to one context vector."""
    out = np.empty(x.shape[0] + 1)
    out[0] = 1.0
    out[1:] = x
    return out


def predict_mean(model: MeanModel, x: np.ndarray, a: int) -> float:
    return float(predict_mean_all(model, x)[a])


def predict_mean_all(model: MeanModel, x: np.ndarray) -> np.ndarray:
    return predict_mean_design(model, augment(np.asarray(x, dtype=float)))


def predict_mean_design(model: MeanModel, x_design: np.ndarray) -> np.ndarray:
    """Phi(beta_a . (1, x)) for every arm, clipped into (0, 1)."""
    return np.clip(ndtr(model.coefs @ x_design), PRED_CLIP, 1.0 - PRED_CLIP)


def fit_variance_model(history: History, mean_model: MeanModel,
                       floor: float, cap: float,
                       warm: VarianceModel | None = None,
                       only_arm: int | None = None) -> VarianceModel:
    """Per-arm OLS of squared mean-model residuals on (1, x).

    Arms with fewer than d+2 observations fall back to the arm's mean squared
    residual; never-pulled arms use the 0.25 prior. Truncation into
    [floor, cap] happens at prediction time.
    """
    d = mean_model.context_dim
    num_arms = mean_model.num_arms
    if warm is not None:
        model = VarianceModel(warm.coefs.copy(), d, floor, cap, len(history))
    else:
        coefs = np.zeros((num_arms, d + 1))
        coefs[:, 0] = PRIOR_SQ_RESIDUAL
        model = VarianceModel(coefs, d, floor, cap, len(history))
    model.fit_time = len(history)
    arms = range(num_arms) if only_arm is None else [only_arm]
    for a in arms:
        rows = history.arm_rows(a)
        coef = np.zeros(d + 1)
        if rows.size == 0:
            coef[0] = PRIOR_SQ_RESIDUAL
            model.coefs[a] = coef
            continue
        X = _design(history.contexts[rows])
        preds = np.clip(ndtr(X @ mean_model.coefs[a]), PRED_CLIP, 1.0 - PRED_CLIP)
        sq_resid = (history.outcomes[rows] - preds) ** 2
        if rows.size < d + 2:
            # smoothed mean squared residual (unit pseudo-observation at the
            # worst-case prior) so one near-zero residual cannot collapse the
            # variance estimate to the floor
            coef[0] = (float(sq_resid.sum()) + PRIOR_SQ_RESIDUAL) / (rows.size + 1.0)
            model.coefs[a] = coef
            continue
        gram = X.T @ X
        gram.flat[:: gram.shape[0] + 1] += RIDGE  # guards singular designs
        model.coefs[a] = np.linalg.solve(gram, X.T @ sq_resid)
    return model


def predict_variance(model: VarianceModel, x: np.ndarray, a: int) -> float:
    return float(predict_variance_all(model, x)[a])


def predict_variance_all(model: VarianceModel, x: np.ndarray) -> np.ndarray:
    return predict_variance_design(model, augment(np.asarray(x, dtype=float)))


def predict_variance_design(model: VarianceModel, x_design: np.ndarray) -> np.ndarray:
    return np.clip(model.coefs @ x_design, model.floor, model.cap)
