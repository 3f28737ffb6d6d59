"""Command-line front end: `run` (replicated experiments), `oracle`
(analytic complexity constants for an instance), `selftest` (fast invariant
checks)."""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import selftest as selftest_mod
from ._backend import backend_name
from .env import true_arm_mean, true_arm_variance
from .harness import (PRESETS, ExperimentConfig, compare_variants,
                      instance_from_options, parse_config_file, run_experiment)
from .policy import kl_complexity_policy, snr_complexity_bound, two_armed_limits


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bestarm",
        description="Sequential best-arm identification with anytime-valid "
                    "confidence sequences and a learned sampling policy.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replicated experiment")
    run.add_argument("--preset", choices=sorted(PRESETS), help="built-in instance")
    run.add_argument("--config", help="flat key=value config file (flags override)")
    run.add_argument("--alpha", type=float)
    run.add_argument("--rho", help="boundary scale, or auto:<t_star>")
    run.add_argument("--t0", type=int, help="burn-in steps")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--variants", help="comma list: contextual,noncontext,uniform")
    run.add_argument("--cap", type=int, help="horizon cap")
    run.add_argument("--refit-every", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory for runs.csv / summary.csv")

    oracle = sub.add_parser("oracle", help="print analytic complexity constants")
    oracle.add_argument("--preset", choices=sorted(PRESETS), required=True)
    oracle.add_argument("--alpha", type=float, default=0.1)

    sub.add_parser("selftest", help="run the fast invariant suites")
    return parser


_DEFAULTS = {"alpha": 0.1, "rho": "0.06", "t0": 100, "reps": 100, "seed": 1,
             "cap": 30_000, "variants": "contextual", "refit_every": 1}


def _merged_options(args) -> dict:
    options: dict = dict(_DEFAULTS)
    if args.config:
        options.update(parse_config_file(args.config))
    if args.preset:
        options["preset"] = args.preset
    for flag, key in [("alpha", "alpha"), ("rho", "rho"), ("t0", "t0"),
                      ("reps", "reps"), ("seed", "seed"), ("variants", "variants"),
                      ("cap", "cap"), ("refit_every", "refit_every"),
                      ("workers", "workers"), ("out", "out")]:
        value = getattr(args, flag, None)
        if value is not None:
            options[key] = value
    return options


def _cmd_run(args) -> int:
    options = _merged_options(args)
    instance = instance_from_options({k: str(v) for k, v in options.items()
                                      if k in ("preset", "family", "k", "d", "c", "scale")})
    rho_opt = str(options["rho"])
    t_star = None
    rho = 0.06
    if rho_opt.startswith("auto:"):
        t_star = float(rho_opt.split(":", 1)[1])
    else:
        rho = float(rho_opt)
    variants = tuple(v.strip() for v in str(options["variants"]).split(",") if v.strip())
    config = ExperimentConfig(
        instance=instance,
        variants=variants,
        replications=int(options["reps"]),
        base_seed=int(options["seed"]),
        alpha=float(options["alpha"]),
        rho=rho,
        t_star=t_star,
        burn_in=int(options["t0"]),
        horizon=int(options["cap"]),
        refit_every=int(options["refit_every"]),
        out_dir=options.get("out"),
        workers=int(options["workers"]) if options.get("workers") else None,
    )
    print(f"backend: {backend_name()}; rho = {config.resolved_rho():.6g}")
    summary = run_experiment(config)
    print("variant,replications,mean_tau,std_tau,error_rate,cap_hits,wall_seconds")
    for v in summary.variants:
        print(f"{v.variant},{v.replications},{v.mean_tau:.10g},{v.std_tau:.10g},"
              f"{v.error_rate:.10g},{v.cap_hits},{v.wall_seconds:.10g}")
    if len(summary.variants) >= 2:
        print(compare_variants(summary))
    if config.out_dir:
        print(f"wrote {config.out_dir}/runs.csv and {config.out_dir}/summary.csv")
    return 0


def _cmd_oracle(args) -> int:
    instance = PRESETS[args.preset]
    k = instance.num_arms
    means = np.array([true_arm_mean(instance, a) for a in range(k)])
    variances = np.array([true_arm_variance(instance, a) for a in range(k)])
    print(f"instance: {args.preset} ({instance.outcome_family.value}, "
          f"{k} arms, context dim {instance.context_dim})")
    print("arm means:     ", " ".join(f"{m:.6f}" for m in means))
    print("arm variances: ", " ".join(f"{v:.6f}" for v in variances))

    kl_bound, allocation = kl_complexity_policy(means, variances)
    print(f"max-min KL complexity constant: {kl_bound:.6g}")
    print("optimal non-contextual allocation:", " ".join(f"{p:.4f}" for p in allocation))
    denom = np.diag(variances / allocation)
    snr_bound = snr_complexity_bound(means, denom)
    print(f"inverse min squared SNR at that allocation: {snr_bound:.6g}")
    print(f"sample-size bound 2 * const * log(1/alpha) at alpha={args.alpha}: "
          f"{2.0 * snr_bound * math.log(1.0 / args.alpha):.6g}")

    if k == 2:
        limits = two_armed_limits(instance, rng=np.random.default_rng(7))
        print(f"two-armed closed-form complexity: {limits.complexity:.6g} "
              f"(mc se {limits.complexity_se:.2g})")
        print(f"context heterogeneity improvement detected: {limits.improvement_detected}")
    return 0


def _cmd_selftest(_args) -> int:
    return selftest_mod.run_all()


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "oracle":
        return _cmd_oracle(args)
    if args.command == "selftest":
        return _cmd_selftest(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
