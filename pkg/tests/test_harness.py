import csv
import os

import numpy as np
import pytest

from bestarm.env import BanditInstance, OutcomeFamily, true_arm_mean
from bestarm.harness import (PRESETS, ExperimentConfig, compare_variants,
                             instance_from_options, parse_config_file,
                             run_experiment)


def small_config(**overrides):
    base = dict(
        instance=BanditInstance(2, 0, (1.2, -1.2),
                                OutcomeFamily.NONCONTEXTUAL_BERNOULLI),
        variants=("noncontextual",),
        replications=3,
        base_seed=5,
        horizon=2_000,
        workers=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_preset_ground_truth_means():
    mu1 = [true_arm_mean(PRESETS["mu1-bernoulli"], a) for a in range(4)]
    assert np.allclose(mu1, [0.5, 0.45, 0.43, 0.4], atol=0.005)
    mu2 = [true_arm_mean(PRESETS["mu2-bernoulli"], a) for a in range(5)]
    assert np.allclose(mu2, [0.3, 0.21, 0.2, 0.19, 0.18], atol=0.005)
    assert PRESETS["mu1-beta"].outcome_family is OutcomeFamily.BETA_PROBIT
    assert PRESETS["mu1-bernoulli"].best_arm == 0


def test_single_replication_summary_equals_run(tmp_path):
    config = small_config(replications=1, out_dir=str(tmp_path))
    summary = run_experiment(config)
    assert len(summary.rows) == 1
    row = summary.rows[0]
    variant = summary.variant("noncontextual")
    assert variant.mean_tau == row.tau
    assert variant.std_tau == 0.0
    assert variant.error_rate == float(not row.correct)


def strip_wall(csv_text):
    """Drop the wall-clock columns (the only nondeterministic fields)."""
    out = []
    for line in csv_text.strip().splitlines():
        cells = line.split(",")
        out.append(",".join(c for i, c in enumerate(cells)
                            if "wall" not in csv_text.splitlines()[0].split(",")[i]))
    return "\n".join(out)


def test_experiment_determinism_byte_identical_modulo_timing(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_experiment(small_config(out_dir=str(out_a)))
    run_experiment(small_config(out_dir=str(out_b)))
    for name in ("runs.csv", "summary.csv"):
        a = strip_wall((out_a / name).read_text())
        b = strip_wall((out_b / name).read_text())
        assert a == b


def stat_fields(rows):
    return [(r.variant, r.rep, r.seed, r.recommended, r.correct, r.tau,
             r.hit_cap, r.tie_broken) for r in rows]


def test_parallel_matches_serial():
    serial = run_experiment(small_config(workers=1))
    parallel = run_experiment(small_config(workers=2))
    assert stat_fields(serial.rows) == stat_fields(parallel.rows)


def test_runs_csv_schema_and_summary_consistency(tmp_path):
    config = small_config(variants=("noncontextual", "uniform"),
                          out_dir=str(tmp_path))
    summary = run_experiment(config)
    with open(tmp_path / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    k = config.instance.num_arms
    for row in rows:
        assert 0 <= int(row["recommended"]) < k
        assert int(row["tau"]) >= config.burn_in or row["hit_cap"] == "1"
        assert row["variant"] in ("noncontextual", "uniform")
    # summary statistics recomputed from the per-replication rows must match
    for variant in ("noncontextual", "uniform"):
        taus = [int(r["tau"]) for r in rows if r["variant"] == variant]
        v = summary.variant(variant)
        assert v.mean_tau == pytest.approx(np.mean(taus))
        assert v.std_tau == pytest.approx(np.std(taus, ddof=1))
        errors = [1 - int(r["correct"]) for r in rows if r["variant"] == variant]
        assert v.error_rate == pytest.approx(np.mean(errors))
    with open(tmp_path / "summary.csv", newline="") as fh:
        sum_rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in sum_rows] == ["noncontextual", "uniform"]
    for r, v in zip(sum_rows, summary.variants):
        assert float(r["mean_tau"]) == pytest.approx(v.mean_tau, rel=1e-9)


def test_matched_seeds_across_variants():
    summary = run_experiment(small_config(variants=("noncontextual", "uniform")))
    seeds = {}
    for row in summary.rows:
        seeds.setdefault(row.variant, []).append(row.seed)
    assert seeds["noncontextual"] == seeds["uniform"] == [5, 6, 7]


def test_unwritable_output_aborts_before_running(tmp_path):
    target = tmp_path / "blocked"
    target.write_text("i am a file, not a directory")
    with pytest.raises(OSError):
        run_experiment(small_config(out_dir=str(target)))


def test_compare_variants_report():
    summary = run_experiment(small_config(variants=("noncontextual", "uniform"),
                                          replications=2))
    report = compare_variants(summary)
    lines = report.splitlines()
    assert lines[0].startswith("variant_a,variant_b")
    assert any(ln.startswith("# ordering noncontextual < uniform") for ln in lines)
    # identical variants give ratio 1
    twin = run_experiment(small_config(variants=("uniform",)))
    from bestarm.harness import ExperimentSummary
    doubled = ExperimentSummary(rows=twin.rows, variants=twin.variants * 2)
    line = compare_variants(doubled).splitlines()[1]
    assert float(line.split(",")[4]) == pytest.approx(1.0)


def test_rho_auto_selection():
    config = small_config(t_star=847.0)
    assert config.resolved_rho() == pytest.approx(0.06, abs=1e-3)
    assert small_config(rho=0.11).resolved_rho() == 0.11


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(replications=0)
    with pytest.raises(ValueError):
        small_config(variants=("bogus",))


def test_parse_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# experiment definition\n"
        "preset = mu1-bernoulli\n"
        "alpha = 0.1   # error tolerance\n"
        "reps = 7\n"
        "\n"
        "variants = contextual,uniform\n")
    options = parse_config_file(str(path))
    assert options == {"preset": "mu1-bernoulli", "alpha": "0.1", "reps": "7",
                       "variants": "contextual,uniform"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("this line has no equals sign\n")
    with pytest.raises(ValueError):
        parse_config_file(str(bad))


def test_directional_mu2_uniform_vs_learned():
    # the learned non-contextual allocation should not be slower than
    # uniform sampling on the easier five-arm Bernoulli preset
    config = ExperimentConfig(instance=PRESETS["mu2-bernoulli"],
                              variants=("noncontext", "uniform"),
                              replications=100, base_seed=1, workers=2)
    summary = run_experiment(config)
    learned = summary.variant("noncontext")
    uniform = summary.variant("uniform")
    assert uniform.mean_tau >= learned.mean_tau
    assert learned.error_rate <= 0.1
    assert uniform.error_rate <= 0.1


def test_instance_from_options_custom():
    inst = instance_from_options({"family": "beta-probit", "d": "2",
                                  "c": "0.5,-0.5", "scale": "0.7"})
    assert inst.num_arms == 2
    assert inst.context_dim == 2
    assert inst.outcome_family is OutcomeFamily.BETA_PROBIT
    assert inst.context_scale == 0.7
    assert instance_from_options({"preset": "mu2-beta"}) is PRESETS["mu2-beta"]
    with pytest.raises(ValueError):
        instance_from_options({"preset": "nope"})
