"""Replicated Monte-Carlo experiments: instance presets, worker-pool fan-out
with per-replication seeds, CSV emission, and variant comparison."""

from __future__ import annotations

import concurrent.futures
import os
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .confseq import BaiResult, RunConfig, run_bai, select_rho
from .env import BanditInstance, OutcomeFamily
from .policy import PolicyConfig, PolicyMode

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "ReplicationRow",
    "VariantSummary",
    "ExperimentSummary",
    "run_experiment",
    "compare_variants",
    "parse_config_file",
    "instance_from_options",
]

# Link constants of the built-in synthetic studies (4-dim standard-normal
# contexts; the corresponding arm means are roughly [.5,.45,.43,.4] and
# [.3,.21,.2,.19,.18]).
_C1 = (0.0, -0.28, -0.39, -0.57)
_C2 = (-1.17, -1.80, -1.88, -1.96, -2.05)

PRESETS: dict[str, BanditInstance] = {
    "mu1-bernoulli": BanditInstance(4, 4, _C1, OutcomeFamily.BERNOULLI_PROBIT),
    "mu1-beta": BanditInstance(4, 4, _C1, OutcomeFamily.BETA_PROBIT),
    "mu2-bernoulli": BanditInstance(5, 4, _C2, OutcomeFamily.BERNOULLI_PROBIT),
    "mu2-beta": BanditInstance(5, 4, _C2, OutcomeFamily.BETA_PROBIT),
}

VARIANT_MODES = {
    "contextual": PolicyMode.CONTEXTUAL,
    "noncontext": PolicyMode.NONCONTEXTUAL,
    "noncontextual": PolicyMode.NONCONTEXTUAL,  # alias
    "uniform": PolicyMode.UNIFORM,
}

FLOAT_FMT = "%.10g"


@dataclass
class ExperimentConfig:
    instance: BanditInstance
    variants: tuple[str, ...] = ("contextual",)
    replications: int = 100
    base_seed: int = 1
    alpha: float = 0.1
    rho: float = 0.06
    t_star: float | None = None   # when set, rho is derived via select_rho
    burn_in: int = 100
    horizon: int = 30_000
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    refit_every: int = 1
    out_dir: str | None = None
    workers: int | None = None    # defaults to the CPU count

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        bad = [v for v in self.variants if v not in VARIANT_MODES]
        if bad:
            raise ValueError(f"unknown variants {bad}; pick from {sorted(VARIANT_MODES)}")

    def resolved_rho(self) -> float:
        if self.t_star is not None:
            return select_rho(self.alpha, self.t_star)
        return self.rho

    def run_config(self, variant: str) -> RunConfig:
        policy = replace(self.policy, mode=VARIANT_MODES[variant])
        return RunConfig(alpha=self.alpha, rho=self.resolved_rho(),
                         burn_in=self.burn_in, horizon=self.horizon,
                         policy=policy, refit_every=self.refit_every)


@dataclass(frozen=True)
class ReplicationRow:
    variant: str
    rep: int
    seed: int
    recommended: int
    correct: bool
    tau: int
    hit_cap: bool
    tie_broken: bool
    wall_ms: float


@dataclass(frozen=True)
class VariantSummary:
    variant: str
    replications: int
    mean_tau: float
    std_tau: float
    error_rate: float
    cap_hits: int
    wall_seconds: float


@dataclass(frozen=True)
class ExperimentSummary:
    rows: tuple[ReplicationRow, ...]
    variants: tuple[VariantSummary, ...]

    def variant(self, name: str) -> VariantSummary:
        for v in self.variants:
            if v.variant == name:
                return v
        raise KeyError(name)


def _run_one(args) -> ReplicationRow:
    instance, run_cfg, variant, rep, seed = args
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    result: BaiResult = run_bai(instance, run_cfg, rng)
    wall = (time.perf_counter() - start) * 1000.0
    return ReplicationRow(variant=variant, rep=rep, seed=seed,
                          recommended=result.recommended, correct=result.correct,
                          tau=result.tau, hit_cap=result.hit_cap,
                          tie_broken=result.tie_broken, wall_ms=wall)


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Run every (variant, replication) pair and aggregate.

    Replication r of every variant uses seed base_seed + r, so runs are
    reproducible and variants face matched randomness. Output CSVs (when
    ``out_dir`` is set) are written atomically after all runs finish.
    """
    if config.out_dir is not None:
        _ensure_writable(config.out_dir)

    tasks = [(config.instance, config.run_config(variant), variant, rep,
              config.base_seed + rep)
             for variant in config.variants
             for rep in range(config.replications)]

    workers = config.workers or os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, tasks, chunksize=1))
    else:
        rows = [_run_one(t) for t in tasks]
    rows.sort(key=lambda r: (config.variants.index(r.variant), r.rep))

    summaries = []
    for variant in config.variants:
        vrows = [r for r in rows if r.variant == variant]
        taus = np.array([r.tau for r in vrows], dtype=float)
        summaries.append(VariantSummary(
            variant=variant,
            replications=len(vrows),
            mean_tau=float(taus.mean()),
            std_tau=float(taus.std(ddof=1)) if len(vrows) > 1 else 0.0,
            error_rate=float(np.mean([not r.correct for r in vrows])),
            cap_hits=sum(r.hit_cap for r in vrows),
            wall_seconds=sum(r.wall_ms for r in vrows) / 1000.0,
        ))
    summary = ExperimentSummary(rows=tuple(rows), variants=tuple(summaries))

    if config.out_dir is not None:
        _write_csvs(config.out_dir, summary)
    return summary


def _ensure_writable(out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w") as fh:
            fh.write("ok")
    finally:
        if os.path.exists(probe):
            os.remove(probe)


def _atomic_write(path: str, lines: list[str]):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _write_csvs(out_dir: str, summary: ExperimentSummary):
    rows = ["variant,rep,seed,recommended,correct,tau,hit_cap,tie_broken,wall_ms"]
    for r in summary.rows:
        rows.append(",".join([
            r.variant, str(r.rep), str(r.seed), str(r.recommended),
            str(int(r.correct)), str(r.tau), str(int(r.hit_cap)),
            str(int(r.tie_broken)), FLOAT_FMT % r.wall_ms,
        ]))
    _atomic_write(os.path.join(out_dir, "runs.csv"), rows)

    head = "variant,replications,mean_tau,std_tau,error_rate,cap_hits,wall_seconds"
    lines = [head]
    for v in summary.variants:
        lines.append(",".join([
            v.variant, str(v.replications), FLOAT_FMT % v.mean_tau,
            FLOAT_FMT % v.std_tau, FLOAT_FMT % v.error_rate,
            str(v.cap_hits), FLOAT_FMT % v.wall_seconds,
        ]))
    _atomic_write(os.path.join(out_dir, "summary.csv"), lines)


def compare_variants(summary: ExperimentSummary) -> str:
    """Mean-stopping-time ratio table with standard errors, plus ordering
    flags (contextual < noncontextual < uniform when all are present)."""
    if len(summary.variants) < 2:
        raise ValueError("need at least two variants to compare")
    by_name = {v.variant: v for v in summary.variants}
    lines = ["variant_a,variant_b,mean_tau_a,mean_tau_b,ratio,se_a,se_b"]
    names = [v.variant for v in summary.variants]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            va, vb = by_name[a], by_name[b]
            se_a = va.std_tau / np.sqrt(max(va.replications, 1))
            se_b = vb.std_tau / np.sqrt(max(vb.replications, 1))
            ratio = va.mean_tau / vb.mean_tau if vb.mean_tau else np.inf
            lines.append(",".join([a, b, FLOAT_FMT % va.mean_tau,
                                   FLOAT_FMT % vb.mean_tau, FLOAT_FMT % ratio,
                                   FLOAT_FMT % se_a, FLOAT_FMT % se_b]))
    mode_rank = {PolicyMode.CONTEXTUAL: 0, PolicyMode.NONCONTEXTUAL: 1,
                 PolicyMode.UNIFORM: 2}
    order = sorted(by_name, key=lambda n: mode_rank[VARIANT_MODES[n]])
    for fast, slow in zip(order, order[1:]):
        flag = by_name[fast].mean_tau < by_name[slow].mean_tau
        lines.append(f"# ordering {fast} < {slow}: {'yes' if flag else 'no'}")
    return "\n".join(lines)


_FAMILY_ALIASES = {f.value: f for f in OutcomeFamily}


def instance_from_options(options: dict[str, str]) -> BanditInstance:
    """Build an instance from flat config options (family, k, d, c, scale)."""
    if "preset" in options:
        name = options["preset"]
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
        return PRESETS[name]
    family = _FAMILY_ALIASES[options.get("family", "bernoulli-probit")]
    c = tuple(float(v) for v in options["c"].split(","))
    k = int(options.get("k", len(c)))
    d = int(options.get("d", 0))
    scale = float(options.get("scale", 1.0))
    return BanditInstance(k, d, c, family, context_scale=scale)


def parse_config_file(path: str) -> dict[str, str]:
    """Flat key = value text; '#' starts a comment. Values stay strings and
    are interpreted by the consumer (CLI flags override them)."""
    options: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            options[key.strip().lower()] = value.strip()
    return options
