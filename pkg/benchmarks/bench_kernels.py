#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-Python fallback.

Times the two hot kernels (the ratio-maximizing weight solve and the full
projected-subgradient loop) plus one short end-to-end identification run on
each backend, and prints the speedups.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import subprocess
import sys
import time

import numpy as np

from bestarm import _pykernels

try:
    from bestarm import _core
except ImportError:
    _core = None


def time_fn(fn, reps):
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps


def bench_snr(reps):
    rng = np.random.default_rng(0)
    cases = []
    for _ in range(20):
        k = int(rng.integers(3, 6))
        mu = rng.uniform(0, 1, k)
        arm = int(np.argmin(mu))
        root = rng.normal(size=(k, k))
        cases.append((mu, root @ root.T + 0.05 * np.eye(k), arm))

    def run_py():
        for mu, d, a in cases:
            _pykernels.snr_dinkelbach(mu, d, a)

    def run_c():
        for mu, d, a in cases:
            _core.snr_dinkelbach(mu, d, a, None, 1e-9, 200)

    py = time_fn(run_py, max(1, reps // 20)) / len(cases)
    c = time_fn(run_c, reps) / len(cases) if _core else None
    return py, c


def bench_psgd(reps):
    rng = np.random.default_rng(1)
    k = 4
    mu = np.array([0.5, 0.45, 0.43, 0.4])
    s = rng.uniform(0.1, 0.3, k)
    vgeo = np.outer(np.sqrt(s), np.sqrt(s)) + 0.02 * np.eye(k)
    root = 0.05 * rng.normal(size=(k, k))
    ltilde = root @ root.T
    theta0 = np.zeros(k)

    def run_py():
        _pykernels.psgd_minimize(mu, vgeo, ltilde, theta0, 100.0, 20)

    def run_c():
        _core.psgd_minimize(mu, vgeo, ltilde, theta0, 100.0, 20, 1e-8, 1e-9, 200)

    py = time_fn(run_py, max(1, reps // 50))
    c = time_fn(run_c, reps) if _core else None
    return py, c


def bench_run(horizon):
    """One short end-to-end run per backend (separate processes: the backend
    is fixed at import time)."""
    code = (
        "import time, numpy as np\n"
        "from bestarm import RunConfig, PolicyConfig, run_bai\n"
        "from bestarm.harness import PRESETS\n"
        f"cfg = RunConfig(horizon={horizon}, policy=PolicyConfig(mode='contextual'))\n"
        "t0 = time.perf_counter()\n"
        "run_bai(PRESETS['mu1-bernoulli'], cfg, np.random.default_rng(0))\n"
        "print(time.perf_counter() - t0)\n")
    out = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and _core is None:
            out[backend] = None
            continue
        proc = subprocess.run([sys.executable, "-c", code],
                              env={"BESTARM_BACKEND": backend, "PATH": "/usr/bin:/bin"},
                              capture_output=True, text=True)
        out[backend] = float(proc.stdout.strip()) if proc.returncode == 0 else None
    return out


def fmt(seconds):
    if seconds is None:
        return "      (n/a)"
    if seconds < 1e-3:
        return f"{seconds * 1e6:9.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:9.2f} ms"
    return f"{seconds:9.2f} s "


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="fewer repetitions")
    args = parser.parse_args()
    reps = 50 if args.quick else 500
    horizon = 200 if args.quick else 1000

    if _core is None:
        print("compiled core not built; only the python kernels will run")

    print(f"{'kernel':<28}{'python':>14}{'compiled':>14}{'speedup':>10}")
    py, c = bench_snr(reps)
    line = f"{'ratio-weight solve':<28}{fmt(py):>14}{fmt(c):>14}"
    if c:
        line += f"{py / c:9.0f}x"
    print(line)
    py, c = bench_psgd(reps)
    line = f"{'subgradient loop (N=20)':<28}{fmt(py):>14}{fmt(c):>14}"
    if c:
        line += f"{py / c:9.0f}x"
    print(line)
    runs = bench_run(horizon)
    line = f"{f'run loop ({horizon} steps)':<28}{fmt(runs['python']):>14}{fmt(runs['compiled']):>14}"
    if runs["compiled"] and runs["python"]:
        line += f"{runs['python'] / runs['compiled']:9.1f}x"
    print(line)


if __name__ == "__main__":
    main()
