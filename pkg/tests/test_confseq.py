import math

import numpy as np
import pytest

from bestarm.confseq import (BaiResult, ConfidenceSet, RunConfig, boundary,
                             lower_bound, run_bai, select_rho)
from bestarm.env import BanditInstance, OutcomeFamily
from bestarm.policy import PolicyConfig


def boundary_reference(t, x, alpha, rho):
    """Independent spreadsheet-style evaluation of the crossing threshold."""
    inner = 2.0 * (rho**2 + 1.0 / (t * x * x)) / rho**2 \
        * math.log(1.0 + math.sqrt(t * x * x * rho * rho + 1.0) / (2.0 * alpha))
    return math.sqrt(inner) / math.sqrt(t)


def test_boundary_hand_values():
    # sqrt(4 ln(1 + sqrt(2))) and sqrt(4 ln(1 + sqrt(2)/0.2))
    assert boundary(1, 1.0, 0.5, 1.0) == pytest.approx(
        math.sqrt(4.0 * math.log(1.0 + math.sqrt(2.0))), abs=1e-12)
    assert boundary(1, 1.0, 0.5, 1.0) == pytest.approx(1.8776, abs=1e-3)
    assert boundary(1, 1.0, 0.1, 1.0) == pytest.approx(2.8902, abs=1e-3)


def test_boundary_matches_reference_fuzz():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = int(rng.integers(1, 10**6))
        x = float(rng.uniform(0.01, 5.0))
        alpha = float(rng.uniform(0.01, 0.5))
        rho = float(rng.uniform(0.01, 2.0))
        assert boundary(t, x, alpha, rho) == pytest.approx(
            boundary_reference(t, x, alpha, rho), rel=1e-12)


def test_boundary_decays_in_time():
    vals = [boundary(t, 0.5, 0.1, 0.06) for t in (100, 10_000, 1_000_000)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 0.01


def test_boundary_alpha_monotonicity():
    lo = boundary(500, 0.7, 0.05, 0.06)
    hi = boundary(500, 0.7, 0.2, 0.06)
    assert lo > hi


def test_boundary_rejects_bad_scale():
    with pytest.raises(ValueError):
        boundary(10, 0.0, 0.1, 0.06)
    with pytest.raises(ValueError):
        boundary(0, 1.0, 0.1, 0.06)


def test_lower_bound_negative_at_zero_drift():
    assert lower_bound(0.0, 0.5, 100, 0.1, 0.06) < 0.0


def test_lower_bound_sentinel_on_zero_sigma():
    assert lower_bound(0.3, 0.0, 100, 0.1, 0.06) == -math.inf


def test_lower_bound_formula_composition():
    drift, sigma, t = 0.1, 0.5, 10_000
    expected = drift - sigma * boundary_reference(t, sigma, 0.1, 0.06)
    assert lower_bound(drift, sigma, t, 0.1, 0.06) == pytest.approx(expected, rel=1e-12)


def test_select_rho_hand_value():
    assert select_rho(0.1, 1.0) == pytest.approx(1.7461, abs=1e-4)
    # quadrupling the target time halves the scale
    assert select_rho(0.1, 4.0) == pytest.approx(select_rho(0.1, 1.0) / 2.0, rel=1e-12)


def test_select_rho_inverse_consistency():
    # rho = 0.06 corresponds to an intrinsic time near 847
    t_star = (select_rho(0.1, 1.0) / 0.06) ** 2
    assert t_star == pytest.approx(847.0, abs=1.0)
    assert select_rho(0.1, t_star) == pytest.approx(0.06, rel=1e-9)


def test_select_rho_refuses_large_alpha():
    with pytest.raises(ValueError):
        select_rho(0.5, 100.0)


def test_confidence_set_monotone_elimination():
    cs = ConfidenceSet(3)
    assert cs.update({0: 0.5, 1: -0.2, 2: -0.2}, t=50, t0=100) == []
    assert len(cs) == 3  # burn-in: nothing removed before t0
    assert cs.update({0: 0.5, 1: -0.2, 2: -0.2}, t=100, t0=100) == [0]
    assert cs.members() == [1, 2]
    # once removed, a later negative bound cannot resurrect the arm
    cs.update({1: -1.0, 2: -1.0}, t=101, t0=100)
    assert cs.members() == [1, 2]
    assert cs.removal_time[0] == 100


def test_confidence_set_no_removal_on_nonpositive_bounds():
    cs = ConfidenceSet(2)
    cs.update({0: 0.0, 1: -5.0}, t=200, t0=100)
    assert len(cs) == 2


def make_easy_instance():
    return BanditInstance(2, 0, (3.0, -3.0), OutcomeFamily.NONCONTEXTUAL_BERNOULLI)


def test_run_bai_big_gap_two_arms():
    cfg = RunConfig(policy=PolicyConfig(mode="noncontextual"))
    result = run_bai(make_easy_instance(), cfg, np.random.default_rng(1))
    assert result.correct
    assert result.recommended == 0
    assert result.tau >= cfg.burn_in
    assert not result.hit_cap
    assert result.elimination_times[1] is not None


def test_run_bai_determinism():
    cfg = RunConfig(policy=PolicyConfig(mode="noncontextual"))
    a = run_bai(make_easy_instance(), cfg, np.random.default_rng(7))
    b = run_bai(make_easy_instance(), cfg, np.random.default_rng(7))
    assert a == b


def test_run_bai_horizon_cap_honored():
    cfg = RunConfig(horizon=150, policy=PolicyConfig(mode="noncontextual"))
    hard = BanditInstance(2, 0, (0.02, 0.0), OutcomeFamily.NONCONTEXTUAL_BERNOULLI)
    result = run_bai(hard, cfg, np.random.default_rng(3))
    assert result.hit_cap
    assert result.tau == 150
    assert result.recommended in (0, 1)


def test_run_bai_burn_in_floor():
    # stopping can never happen before the burn-in even with a huge gap
    cfg = RunConfig(burn_in=120, policy=PolicyConfig(mode="noncontextual"))
    result = run_bai(make_easy_instance(), cfg, np.random.default_rng(5))
    assert result.tau >= 120


def test_run_bai_cap_below_burn_in():
    cfg = RunConfig(burn_in=500, horizon=60, policy=PolicyConfig(mode="noncontextual"))
    result = run_bai(make_easy_instance(), cfg, np.random.default_rng(2))
    assert result.hit_cap and result.tau == 60


def test_run_bai_uniform_variant():
    cfg = RunConfig(policy=PolicyConfig(mode="uniform"))
    result = run_bai(make_easy_instance(), cfg, np.random.default_rng(11))
    assert result.correct


def test_run_bai_contextual_smoke():
    inst = BanditInstance(2, 2, (1.5, -1.5), OutcomeFamily.BERNOULLI_PROBIT)
    cfg = RunConfig(policy=PolicyConfig(mode="contextual"))
    result = run_bai(inst, cfg, np.random.default_rng(4))
    assert result.correct
    assert result.tau >= cfg.burn_in


def test_run_bai_trajectory_dump(tmp_path):
    path = tmp_path / "trace.csv"
    cfg = RunConfig(horizon=130, policy=PolicyConfig(mode="noncontextual"),
                    trajectory_path=str(path))
    run_bai(make_easy_instance(), cfg, np.random.default_rng(6))
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["t", "arm", "outcome", "propensity"]
    assert "score_0" in header and "lower_bound_1" in header
    assert len(lines) >= 101  # one row per executed step
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert 0.0 < float(first[3]) <= 1.0


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(alpha=1.5)
    with pytest.raises(ValueError):
        RunConfig(rho=0.0)
    with pytest.raises(ValueError):
        RunConfig(refit_every=0)


def test_models_fit_strictly_before_use():
    # measurability probe: the model scored at step t must have been fit on
    # exactly the first t-1 observations (refit cadence 1)
    import bestarm.confseq as confseq_mod
    from bestarm.regress import predict_mean_design

    seen = []
    real = confseq_mod.predict_mean_design

    def spy(model, xd):
        seen.append(model.fit_time)
        return real(model, xd)

    cfg = RunConfig(horizon=140, policy=PolicyConfig(mode="noncontextual"))
    original = confseq_mod.predict_mean_design
    confseq_mod.predict_mean_design = spy
    try:
        run_bai(make_easy_instance(), cfg, np.random.default_rng(8))
    finally:
        confseq_mod.predict_mean_design = original
    assert seen == list(range(len(seen)))


def test_batched_refit_cadence_lags_history():
    import bestarm.confseq as confseq_mod

    seen = []
    real = confseq_mod.predict_mean_design

    def spy(model, xd):
        seen.append(model.fit_time)
        return real(model, xd)

    cfg = RunConfig(horizon=120, refit_every=10,
                    policy=PolicyConfig(mode="noncontextual"))
    confseq_mod.predict_mean_design = spy
    try:
        run_bai(make_easy_instance(), cfg, np.random.default_rng(8))
    finally:
        confseq_mod.predict_mean_design = real
    # the model can lag behind but never peeks at the current step
    assert all(fit_time < t for t, fit_time in enumerate(seen, start=1))
    assert any(fit_time < t - 1 for t, fit_time in enumerate(seen, start=1))


def test_error_control_small_scale():
    # easy instance, 40 replications: errors should be far below alpha
    inst = BanditInstance(2, 0, (0.7, -0.7), OutcomeFamily.NONCONTEXTUAL_BERNOULLI)
    cfg = RunConfig(policy=PolicyConfig(mode="noncontextual"))
    wrong = 0
    for seed in range(40):
        result = run_bai(inst, cfg, np.random.default_rng(1000 + seed))
        wrong += not result.correct
    assert wrong / 40 <= 0.1
