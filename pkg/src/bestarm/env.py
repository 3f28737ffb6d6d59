"""Synthetic bandit environments: probit-link Bernoulli/Beta outcomes over
Gaussian contexts, with closed-form ground truth for oracles and tests."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "OutcomeFamily",
    "BanditInstance",
    "Observation",
    "History",
    "sample_context",
    "sample_contexts",
    "latent_success_probs",
    "true_conditional_mean",
    "true_conditional_variance",
    "true_arm_mean",
    "true_arm_variance",
    "sample_outcome",
    "sample_outcomes",
]


class OutcomeFamily(str, enum.Enum):
    BERNOULLI_PROBIT = "bernoulli-probit"
    BETA_PROBIT = "beta-probit"
    NONCONTEXTUAL_BERNOULLI = "noncontextual-bernoulli"


@dataclass(frozen=True)
class BanditInstance:
    """Immutable description of a synthetic environment.

    Outcomes are drawn with success/location parameter Phi(c(a) + sum_i x(i)):
    Bernoulli(p) for the Bernoulli families, Beta(p, 1-p) for the Beta family
    (mean p, variance p(1-p)/2). Context coordinates are i.i.d. normal with
    standard deviation ``context_scale``.
    """

    num_arms: int
    context_dim: int
    link_constants: tuple[float, ...]
    outcome_family: OutcomeFamily = OutcomeFamily.BERNOULLI_PROBIT
    context_scale: float = 1.0
    beta_margin: float = 1e-6  # keeps both Beta shape parameters positive

    def __post_init__(self):
        object.__setattr__(self, "link_constants", tuple(float(c) for c in self.link_constants))
        object.__setattr__(self, "outcome_family", OutcomeFamily(self.outcome_family))
        if self.num_arms < 2:
            raise ValueError("need at least two arms")
        if len(self.link_constants) != self.num_arms:
            raise ValueError("link_constants must have one entry per arm")
        if self.context_dim < 0:
            raise ValueError("context_dim must be non-negative")
        if self.outcome_family is OutcomeFamily.NONCONTEXTUAL_BERNOULLI and self.context_dim != 0:
            raise ValueError("noncontextual-bernoulli requires context_dim == 0")
        if not 0.0 < self.beta_margin < 0.5:
            raise ValueError("beta_margin must lie in (0, 0.5)")

    @property
    def best_arm(self) -> int:
        return int(np.argmax([true_arm_mean(self, a) for a in range(self.num_arms)]))


@dataclass(frozen=True)
class Observation:
    """One interaction record: context, arm pulled, outcome, and the
    probability the actor assigned to that arm (must be positive)."""

    context: np.ndarray
    arm: int
    outcome: float
    propensity: float

    def __post_init__(self):
        if self.propensity <= 0.0:
            raise ValueError("propensity must be positive")
        if not 0.0 <= self.outcome <= 1.0:
            raise ValueError("outcome must lie in [0, 1]")


class History:
    """Append-only interaction log backed by growable arrays."""

    def __init__(self, context_dim: int, capacity: int = 256):
        self.context_dim = context_dim
        self._n = 0
        self._x = np.empty((capacity, context_dim))
        self._a = np.empty(capacity, dtype=np.int64)
        self._y = np.empty(capacity)
        self._p = np.empty(capacity)

    def __len__(self) -> int:
        return self._n

    def _grow(self):
        cap = max(256, 2 * self._x.shape[0])
        for name in ("_x", "_a", "_y", "_p"):
            arr = getattr(self, name)
            new = np.empty((cap,) + arr.shape[1:], dtype=arr.dtype)
            new[: self._n] = arr[: self._n]
            setattr(self, name, new)

    def append(self, context: np.ndarray, arm: int, outcome: float, propensity: float):
        if propensity <= 0.0:
            raise ValueError("propensity must be positive")
        if self._n == self._x.shape[0]:
            self._grow()
        self._x[self._n] = context
        self._a[self._n] = arm
        self._y[self._n] = outcome
        self._p[self._n] = propensity
        self._n += 1

    @property
    def contexts(self) -> np.ndarray:
        return self._x[: self._n]

    @property
    def arms(self) -> np.ndarray:
        return self._a[: self._n]

    @property
    def outcomes(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def propensities(self) -> np.ndarray:
        return self._p[: self._n]

    def arm_rows(self, a: int) -> np.ndarray:
        return np.flatnonzero(self._a[: self._n] == a)

    def observation(self, i: int) -> Observation:
        return Observation(self._x[i].copy(), int(self._a[i]), float(self._y[i]), float(self._p[i]))


def sample_context(instance: BanditInstance, rng: np.random.Generator) -> np.ndarray:
    """Draw one context: ``context_dim`` i.i.d. N(0, scale^2) coordinates."""
    return sample_contexts(instance, 1, rng)[0]


def sample_contexts(instance: BanditInstance, n: int, rng: np.random.Generator) -> np.ndarray:
    return instance.context_scale * rng.standard_normal((n, instance.context_dim))


def latent_success_probs(instance: BanditInstance, contexts: np.ndarray) -> np.ndarray:
    """Phi(c(a) + sum_i x(i)) for each row of ``contexts`` and each arm."""
    contexts = np.atleast_2d(contexts)
    shift = contexts.sum(axis=1, keepdims=True)
    return ndtr(shift + np.asarray(instance.link_constants))


def true_conditional_mean(instance: BanditInstance, x: np.ndarray, a: int) -> float:
    """E[Y | A=a, X=x]; both families share the probit link (Beta(p,1-p) has mean p)."""
    _check_arm(instance, a)
    return float(ndtr(instance.link_constants[a] + float(np.sum(x))))


def true_conditional_variance(instance: BanditInstance, x: np.ndarray, a: int) -> float:
    """Var[Y | A=a, X=x]: p(1-p) for Bernoulli outcomes, p(1-p)/2 for Beta."""
    _check_arm(instance, a)
    p = true_conditional_mean(instance, x, a)
    v = p * (1.0 - p)
    if instance.outcome_family is OutcomeFamily.BETA_PROBIT:
        v *= 0.5
    return v


def _latent_std(instance: BanditInstance) -> float:
    return instance.context_scale * np.sqrt(instance.context_dim)


def true_arm_mean(instance: BanditInstance, a: int) -> float:
    """Marginal arm mean E_X[Phi(c(a) + sum X(i))].

    Uses the Gaussian convolution identity E[Phi(c + Z)] = Phi(c / sqrt(1 + s^2))
    for Z ~ N(0, s^2), so the value is exact rather than quadrature-based.
    """
    _check_arm(instance, a)
    s2 = _latent_std(instance) ** 2
    return float(ndtr(instance.link_constants[a] / np.sqrt(1.0 + s2)))


_HERMITE_NODES = 96


def true_arm_variance(instance: BanditInstance, a: int) -> float:
    """Marginal arm variance E_X[v(X,a)] + Var_X(g(X,a)).

    For Bernoulli outcomes this collapses to mu(1-mu). The Beta family needs
    E[p^2], computed with Gauss-Hermite quadrature over the latent Gaussian.
    """
    _check_arm(instance, a)
    mu = true_arm_mean(instance, a)
    if instance.outcome_family is not OutcomeFamily.BETA_PROBIT:
        return mu * (1.0 - mu)
    s = _latent_std(instance)
    nodes, weights = np.polynomial.hermite_e.hermegauss(_HERMITE_NODES)
    weights = weights / np.sqrt(2.0 * np.pi)
    p = ndtr(instance.link_constants[a] + s * nodes)
    ep2 = float(weights @ (p * p))
    # E[p(1-p)/2] + (E[p^2] - mu^2)
    return 0.5 * (mu - ep2) + (ep2 - mu * mu)


def sample_outcome(instance: BanditInstance, x: np.ndarray, a: int,
                   rng: np.random.Generator) -> float:
    return float(sample_outcomes(instance, np.atleast_2d(x), a, rng)[0])


def sample_outcomes(instance: BanditInstance, contexts: np.ndarray, a: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw one outcome per context row for arm ``a`` (vectorized)."""
    _check_arm(instance, a)
    p = latent_success_probs(instance, contexts)[:, a]
    if instance.outcome_family is OutcomeFamily.BETA_PROBIT:
        p = np.clip(p, instance.beta_margin, 1.0 - instance.beta_margin)
        return rng.beta(p, 1.0 - p)
    return (rng.random(p.shape) < p).astype(float)


def _check_arm(instance: BanditInstance, a: int):
    if not 0 <= a < instance.num_arms:
        raise IndexError(f"arm {a} out of range for {instance.num_arms} arms")
