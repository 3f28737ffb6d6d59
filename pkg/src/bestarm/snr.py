"""Signal-to-noise-ratio maximization over arm-pinned weight vectors, the
exhaustive grid oracle used to validate it, and the Gaussian KL projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from ._pykernels import DEGENERATE_QUAD, DegenerateVariance
from .scorekit import check_weight

__all__ = [
    "SnrProblem",
    "DegenerateVariance",
    "InfeasibleSnrError",
    "default_weight",
    "snr_value",
    "solve_snr",
    "snr_max_weight",
    "grid_oracle_snr",
    "kl_projection_value",
]

GRID_MAX_ARMS = 5


class InfeasibleSnrError(ValueError):
    """No positive-SNR direction exists (the pinned arm already looks best)
    or a variance precondition is violated."""


class SnrSolverError(RuntimeError):
    """The solver returned an infeasible or negative-mean direction."""


@dataclass
class SnrProblem:
    """One weight-selection problem: mean estimates, a PSD denominator
    matrix, and the arm whose coordinate is pinned to -1."""

    mean: np.ndarray
    denom: np.ndarray
    arm: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.denom = np.asarray(self.denom, dtype=float)
        k = self.mean.shape[0]
        if self.denom.shape != (k, k):
            raise ValueError("denominator matrix must be K x K")
        if not 0 <= self.arm < k:
            raise IndexError("arm out of range")

    @property
    def num_arms(self) -> int:
        return self.mean.shape[0]


def default_weight(num_arms: int, arm: int) -> np.ndarray:
    """-1 at the pinned arm, uniform mass elsewhere."""
    w = np.full(num_arms, 1.0 / (num_arms - 1))
    w[arm] = -1.0
    return w


def snr_value(problem: SnrProblem, w: np.ndarray) -> float:
    """(w . mean) / sqrt(w' denom w); raises DegenerateVariance when the
    quadratic form falls below 1e-14 (caller falls back to the default)."""
    check_weight(w, problem.arm)
    q = float(w @ problem.denom @ w)
    if q <= DEGENERATE_QUAD:
        raise DegenerateVariance("denominator quadratic form vanished")
    return float(w @ problem.mean) / np.sqrt(q)


def solve_snr(problem: SnrProblem, warm: np.ndarray | None = None,
              tol: float = 1e-9, max_outer: int = 200) -> np.ndarray:
    """Maximize the SNR over the pinned-arm weight set.

    Requires the pinned arm to look strictly suboptimal and every denominator
    diagonal entry to be positive (otherwise the caller must use the default
    weight). Solved via Dinkelbach iteration on the simplex-parameterized
    fractional program; the positive-weighted-mean constraint is implied at
    the optimum and asserted after the fact.
    """
    mu = problem.mean
    if mu[problem.arm] >= mu.max():
        raise InfeasibleSnrError("pinned arm already has the largest mean")
    if problem.denom.diagonal().min() <= 0.0:
        raise InfeasibleSnrError("denominator has a non-positive diagonal entry")
    w, _, _ = _backend.snr_kernel(mu, problem.denom, problem.arm,
                                  gamma0=warm, tol=tol, max_outer=max_outer)
    check_weight(w, problem.arm)
    if float(w @ mu) < -1e-10:
        raise SnrSolverError("solver returned a negative-mean direction")
    return w


def snr_max_weight(score_mean: np.ndarray, gram: np.ndarray, arm: int,
                   w0: np.ndarray | None = None,
                   warm: np.ndarray | None = None) -> np.ndarray:
    """Per-step weight selection with the degenerate-case guards.

    Falls back to ``w0`` when the arm currently looks optimal, any per-arm
    variance estimate is non-positive, or the solve degenerates.
    """
    k = score_mean.shape[0]
    if w0 is None:
        w0 = default_weight(k, arm)
    if score_mean[arm] >= score_mean.max() or gram.diagonal().min() <= 0.0:
        return w0
    try:
        return solve_snr(SnrProblem(score_mean, gram, arm), warm=warm)
    except (DegenerateVariance, SnrSolverError):
        return w0


def _compositions(total: int, parts: int) -> np.ndarray:
    """All length-``parts`` non-negative integer vectors summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        left = np.arange(total + 1, dtype=np.int64)
        return np.stack([left, total - left], axis=1)
    blocks = []
    for first in range(total + 1):
        rest = _compositions(total - first, parts - 1)
        block = np.empty((rest.shape[0], parts), dtype=np.int64)
        block[:, 0] = first
        block[:, 1:] = rest
        blocks.append(block)
    return np.vstack(blocks)


def _grid_best(problem: SnrProblem, points: np.ndarray) -> tuple[np.ndarray, float]:
    k = problem.num_arms
    rest = np.delete(np.arange(k), problem.arm)
    w = np.empty((points.shape[0], k))
    w[:, rest] = points
    w[:, problem.arm] = -1.0
    num = w @ problem.mean
    quad = np.einsum("ij,jk,ik->i", w, problem.denom, w)
    vals = np.where(quad > DEGENERATE_QUAD, num / np.sqrt(np.maximum(quad, 1e-300)), -np.inf)
    i = int(np.argmax(vals))
    return w[i], float(vals[i])


def grid_oracle_snr(problem: SnrProblem, resolution: float,
                    refine: int = 0) -> np.ndarray:
    """Exhaustive simplex-grid search; the validation oracle for solve_snr.

    ``refine`` extra stages re-enumerate a shrinking box around the incumbent
    at 8x finer spacing each time (still pure enumeration). Refuses more than
    5 arms; the grid is combinatorial.
    """
    k = problem.num_arms
    if k > GRID_MAX_ARMS:
        raise ValueError(f"grid oracle supports at most {GRID_MAX_ARMS} arms")
    if k == 2:
        return default_weight(2, problem.arm)
    n = max(1, int(round(1.0 / resolution)))
    pts = _compositions(n, k - 1).astype(float) / n
    best_w, best_v = _grid_best(problem, pts)
    rest = np.delete(np.arange(k), problem.arm)
    spacing = 1.0 / n
    for _ in range(refine):
        center = best_w[rest]
        radius, spacing = 3.0 * spacing, spacing / 8.0
        m = max(1, int(round(1.0 / spacing)))
        lo = np.maximum(np.floor((center - radius) * m).astype(np.int64), 0)
        hi = np.minimum(np.ceil((center + radius) * m).astype(np.int64), m)
        local = _bounded_compositions(m, lo, hi)
        if local.shape[0] == 0:
            continue
        w, v = _grid_best(problem, local.astype(float) / m)
        if v > best_v:
            best_w, best_v = w, v
    return best_w


def _bounded_compositions(total: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    parts = lo.shape[0]

    def rec(i: int, remaining: int):
        if i == parts - 1:
            if lo[i] <= remaining <= hi[i]:
                return np.array([[remaining]], dtype=np.int64)
            return np.empty((0, 1), dtype=np.int64)
        out = []
        first_lo = max(int(lo[i]), remaining - int(hi[i + 1:].sum()))
        first_hi = min(int(hi[i]), remaining - int(lo[i + 1:].sum()))
        for first in range(first_lo, first_hi + 1):
            rest = rec(i + 1, remaining - first)
            if rest.shape[0]:
                out.append(np.hstack([np.full((rest.shape[0], 1), first, dtype=np.int64), rest]))
        if not out:
            return np.empty((0, parts - i), dtype=np.int64)
        return np.vstack(out)

    return rec(0, total)


def _project_leader(z: np.ndarray, arm: int) -> np.ndarray:
    """Euclidean projection onto {v: v[arm] >= v[b] for all b}: pool the
    violating coordinates with the leader (descending-merge argument)."""
    others = np.delete(np.arange(z.shape[0]), arm)
    vals = z[others]
    if vals.size == 0 or z[arm] >= vals.max():
        return z.copy()
    pooled, count = z[arm], 1
    mean = pooled
    for v in np.sort(vals)[::-1]:
        if v > mean:
            pooled += v
            count += 1
            mean = pooled / count
        else:
            break
    out = np.minimum(z, mean)
    out[arm] = mean
    return out


def kl_projection_value(mu: np.ndarray, sigma_sq: np.ndarray, pi: np.ndarray,
                        arm: int, tol: float = 1e-10,
                        max_iter: int = 100_000) -> float:
    """Smallest weighted Gaussian KL divergence from ``mu`` to any mean
    vector under which ``arm`` is best.

    Minimizes sum_b pi_b (mu_b - m_b)^2 / (2 sigma_b^2) over {m: m[arm] >=
    m[b]} by projected gradient descent (exact Euclidean projection onto the
    leader cone each step). Zero when ``arm`` already attains the maximum.
    """
    mu, sig, pi = (np.asarray(v, dtype=float) for v in (mu, sigma_sq, pi))
    value, _ = _kl_projection(mu, sig, pi, arm, tol, max_iter)
    return value


def _kl_projection(mu, sigma_sq, pi, arm, tol=1e-10, max_iter=100_000):
    if np.any(pi <= 0.0) or np.any(sigma_sq <= 0.0):
        raise ValueError("need strictly positive sampling weights and variances")
    if mu[arm] >= mu.max():
        return 0.0, mu.copy()
    q = pi / sigma_sq
    step = 1.0 / q.max()

    def objective(m):
        return 0.5 * float(q @ (mu - m) ** 2)

    m = _project_leader(mu, arm)
    val = objective(m)
    for _ in range(max_iter):
        m_new = _project_leader(m - step * q * (m - mu), arm)
        val_new = objective(m_new)
        moved = float(np.max(np.abs(m_new - m)))
        m, val = m_new, val_new
        if moved < tol * (1.0 + float(np.max(np.abs(mu)))):
            break
    return val, m
