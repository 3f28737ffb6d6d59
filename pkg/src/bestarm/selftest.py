"""Fast invariant suites behind `bestarm selftest`: each check prints one
PASS/FAIL line and the runner returns a nonzero exit code on any failure."""

from __future__ import annotations

import numpy as np

from ._backend import backend_name
from ._pykernels import snr_dinkelbach
from .confseq import boundary, select_rho
from .policy import inv_snr_gradient, inv_snr_objective, inner_weight
from .scorekit import RunningStats
from .snr import (SnrProblem, default_weight, grid_oracle_snr,
                  kl_projection_value, snr_value, solve_snr)


def _random_stats(rng: np.random.Generator, k: int, steps: int = 40) -> RunningStats:
    stats = RunningStats(k)
    for _ in range(steps):
        stats.update(rng.normal(0.5, 0.3, k), rng.uniform(0.2, 0.8, k),
                     rng.uniform(0.05, 0.9, k))
    return stats


def check_boundary() -> bool:
    ok = abs(boundary(1, 1.0, 0.5, 1.0) - 1.8776) < 1e-3
    ok &= abs(boundary(1, 1.0, 0.1, 1.0) - 2.8902) < 1e-3
    vals = [boundary(t, 0.5, 0.1, 0.06) for t in (100, 10_000, 1_000_000)]
    ok &= vals[0] > vals[1] > vals[2]
    ok &= abs(select_rho(0.1, 1) - 1.7461) < 1e-3
    ok &= abs(select_rho(0.1, 4.0) - 0.5 * select_rho(0.1, 1.0)) < 1e-12
    return bool(ok)


def check_kl_identity(cases: int = 10) -> bool:
    rng = np.random.default_rng(11)
    for _ in range(cases):
        k = int(rng.integers(2, 5))
        mu = rng.uniform(0.0, 1.0, k)
        if np.unique(mu).size < k:
            continue
        sig = rng.uniform(0.1, 1.0, k)
        pi = rng.uniform(0.1, 1.0, k)
        pi /= pi.sum()
        arm = int(rng.integers(0, k))
        if mu[arm] >= mu.max():
            continue
        problem = SnrProblem(mu, np.diag(sig / pi), arm)
        ratio = snr_value(problem, solve_snr(problem))
        kl = kl_projection_value(mu, sig, pi, arm)
        if abs(0.5 * ratio * ratio - kl) > 1e-6:
            return False
    return True


def check_solver_vs_grid(cases: int = 8) -> bool:
    rng = np.random.default_rng(5)
    for _ in range(cases):
        k = int(rng.integers(3, 5))
        mu = rng.uniform(0.0, 1.0, k)
        arm = int(np.argmin(mu))
        root = rng.normal(size=(k, k))
        denom = root @ root.T + 0.05 * np.eye(k)
        problem = SnrProblem(mu, denom, arm)
        solved = snr_value(problem, solve_snr(problem))
        gridded = snr_value(problem, grid_oracle_snr(problem, 0.01, refine=1))
        if solved < gridded - 1e-3 * abs(gridded):
            return False
    return True


def check_gradient(cases: int = 10) -> bool:
    rng = np.random.default_rng(3)
    h = 1e-6
    for _ in range(cases):
        k = int(rng.integers(2, 5))
        stats = _random_stats(rng, k)
        theta = np.append(rng.uniform(-1.5, 1.5, k - 1), 0.0)
        arm = int(np.argmin(stats.score_mean))
        w = default_weight(k, arm)
        grad = inv_snr_gradient(theta, w, stats)
        for c in range(k - 1):
            probe = theta.copy()
            probe[c] += h
            up = inv_snr_objective(probe, w, stats)
            probe[c] -= 2 * h
            down = inv_snr_objective(probe, w, stats)
            fd = (up - down) / (2 * h)
            if abs(fd - grad[c]) > 1e-5 * max(1.0, abs(fd)):
                return False
    return True


def check_stats_incremental() -> bool:
    rng = np.random.default_rng(9)
    k = 4
    stats = RunningStats(k)
    scores, preds, vs = [], [], []
    for _ in range(60):
        s, p, v = rng.normal(size=k), rng.uniform(0.1, 0.9, k), rng.uniform(0.05, 1.0, k)
        scores.append(s)
        preds.append(p)
        vs.append(v)
        stats.update(s, p, v)
    scores = np.array(scores)
    means = np.cumsum(scores, axis=0) / np.arange(1, 61)[:, None]
    centered = scores - means
    gram = sum(np.outer(u, u) for u in centered) / 60
    ok = np.allclose(gram, stats.score_gram, atol=1e-10)
    sbar = sum(np.outer(np.sqrt(v), np.sqrt(v)) for v in vs) / 60
    ok &= np.allclose(sbar, stats.vgeo_mean, atol=1e-10)
    return bool(ok)


def check_dinkelbach_monotone() -> bool:
    rng = np.random.default_rng(21)
    for _ in range(5):
        k = 4
        mu = rng.uniform(0.0, 1.0, k)
        arm = int(np.argmin(mu))
        root = rng.normal(size=(k, k))
        denom = root @ root.T + 0.1 * np.eye(k)
        trace: list[float] = []
        snr_dinkelbach(mu, denom, arm, trace=trace)
        if any(b < a - 1e-10 for a, b in zip(trace, trace[1:])):
            return False
    return True


def check_inner_weight_feasible() -> bool:
    rng = np.random.default_rng(13)
    for _ in range(5):
        k = int(rng.integers(3, 6))
        stats = _random_stats(rng, k)
        theta = np.append(rng.uniform(-0.5, 0.5, k - 1), 0.0)
        arm = int(np.argmin(stats.score_mean))
        w = inner_weight(theta, arm, stats)
        rest = np.delete(w, arm)
        if abs(w[arm] + 1) > 1e-8 or rest.min() < -1e-8 or abs(rest.sum() - 1) > 1e-8:
            return False
    return True


CHECKS = [
    ("boundary and rho-selection hand values", check_boundary),
    ("KL-projection / max-SNR identity", check_kl_identity),
    ("solver matches the grid oracle", check_solver_vs_grid),
    ("objective gradient matches finite differences", check_gradient),
    ("incremental statistics match batch recomputation", check_stats_incremental),
    ("ratio iteration is monotone", check_dinkelbach_monotone),
    ("inner weights stay feasible", check_inner_weight_feasible),
]


def run_all() -> int:
    print(f"backend: {backend_name()}")
    failures = 0
    for name, fn in CHECKS:
        ok = False
        try:
            ok = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            print(f"FAIL {name} (raised {type(exc).__name__}: {exc})")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    return 1 if failures else 0
