import numpy as np
import pytest

from bestarm.env import History
from bestarm.regress import fit_mean_model
from bestarm.scorekit import (DriftTracker, PositivityError, RunningStats,
                              check_weight, compute_score,
                              score_from_predictions)


def test_score_identity_ipw_collapse():
    # flat-zero predictions, propensity one: the taken arm carries the outcome
    phi = score_from_predictions(np.zeros(3), taken_arm=1, y=0.7, propensity=1.0)
    assert np.allclose(phi, [0.0, 0.7, 0.0])


def test_score_hand_substitution():
    # 0.4 + (1 - 0.4)/0.5 = 1.6
    phi = score_from_predictions(np.array([0.4, 0.2]), 0, 1.0, 0.5)
    assert phi[0] == pytest.approx(1.6)
    assert phi[1] == pytest.approx(0.2)


def test_score_requires_positive_propensity():
    with pytest.raises(PositivityError):
        score_from_predictions(np.zeros(2), 0, 1.0, 0.0)
    with pytest.raises(PositivityError):
        score_from_predictions(np.zeros(2), 0, 1.0, -0.2)


def test_compute_score_uses_model_predictions():
    hist = History(0)
    model = fit_mean_model(hist, 2, 0)  # flat 0.5 prior
    phi = compute_score(model, np.zeros(0), 0, 1.0, 0.25, 2)
    assert phi[0] == pytest.approx(0.5 + 0.5 / 0.25)
    assert phi[1] == pytest.approx(0.5)


def test_score_conditionally_unbiased_monte_carlo():
    # fixing (predictions, policy, x) and averaging over (A, Y) draws, every
    # coordinate is centered on the true conditional mean
    rng = np.random.default_rng(12)
    preds = np.array([0.3, 0.6, 0.5])          # deliberately wrong model
    truth = np.array([0.55, 0.4, 0.7])
    policy = np.array([0.5, 0.3, 0.2])
    n = 100_000
    arms = rng.choice(3, size=n, p=policy)
    outcomes = (rng.random(n) < truth[arms]).astype(float)
    total = np.zeros(3)
    for a in range(3):
        mask = arms == a
        phi_taken = preds[a] + (outcomes[mask] - preds[a]) / policy[a]
        total[a] = phi_taken.sum() + preds[a] * (n - mask.sum())
    means = total / n
    se = np.sqrt(truth * (1 - truth) / (policy * n)) / policy  # dominant IPW term
    assert np.all(np.abs(means - truth) < 3 * se + 1e-3)


def test_score_boundedness_with_propensity_floor():
    rng = np.random.default_rng(2)
    kappa = 8.0
    for _ in range(200):
        preds = rng.uniform(1e-6, 1 - 1e-6, 4)
        prop = rng.uniform(1.0 / kappa, 1.0)
        phi = score_from_predictions(preds, int(rng.integers(4)), rng.uniform(0, 1), prop)
        assert np.all(np.abs(phi) <= 1.0 + kappa)


def test_running_stats_first_update():
    stats = RunningStats(2)
    v = np.array([0.3, 0.8])
    stats.update(v, np.full(2, 0.5), np.full(2, 0.25))
    assert np.allclose(stats.score_mean, v)
    assert np.allclose(stats.score_gram, 0.0)


def test_running_stats_two_updates_hand_arithmetic():
    stats = RunningStats(2)
    stats.update(np.array([1.0, 0.0]), np.zeros(2), np.ones(2))
    stats.update(np.array([0.0, 1.0]), np.zeros(2), np.ones(2))
    assert np.allclose(stats.score_mean, [0.5, 0.5])
    expected = np.array([[0.125, -0.125], [-0.125, 0.125]])
    assert np.allclose(stats.score_gram, expected, atol=1e-15)


def batch_recompute(scores, preds, vs):
    """From-scratch recomputation oracle for the incremental statistics."""
    t = len(scores)
    scores, preds, vs = map(np.asarray, (scores, preds, vs))
    means = np.cumsum(scores, axis=0) / np.arange(1, t + 1)[:, None]
    centered = scores - means
    gram = sum(np.outer(u, u) for u in centered) / t
    pred_gram = sum(np.outer(h, h) for h in preds) / t
    vgeo = sum(np.outer(np.sqrt(v), np.sqrt(v)) for v in vs) / t
    return means[-1], gram, preds.mean(axis=0), pred_gram, vgeo


def test_incremental_matches_batch_recomputation():
    rng = np.random.default_rng(7)
    k = 4
    stats = RunningStats(k)
    scores, preds, vs = [], [], []
    for _ in range(100):
        s = rng.normal(0.4, 1.0, k)
        p = rng.uniform(0.1, 0.9, k)
        v = rng.uniform(0.01, 1.0, k)
        scores.append(s), preds.append(p), vs.append(v)
        stats.update(s, p, v)
    mean, gram, pred_mean, pred_gram, vgeo = batch_recompute(scores, preds, vs)
    assert np.allclose(stats.score_mean, mean, atol=1e-10)
    assert np.allclose(stats.score_gram, gram, atol=1e-10)
    assert np.allclose(stats.pred_mean, pred_mean, atol=1e-10)
    assert np.allclose(stats.pred_gram, pred_gram, atol=1e-10)
    assert np.allclose(stats.vgeo_mean, vgeo, atol=1e-10)


def test_constant_weight_variance_identity():
    # w' gram w equals the directly summed cumulative conditional variance
    rng = np.random.default_rng(19)
    k = 3
    stats = RunningStats(k)
    scores = []
    for _ in range(50):
        s = rng.normal(size=k)
        scores.append(s)
        stats.update(s, np.full(k, 0.5), np.ones(k))
    w = np.array([-1.0, 0.4, 0.6])
    means = np.cumsum(scores, axis=0) / np.arange(1, 51)[:, None]
    direct = np.mean([(w @ (s - m)) ** 2 for s, m in zip(scores, means)])
    assert stats.weighted_variance(w) == pytest.approx(direct, abs=1e-10)


def test_grams_stay_positive_semidefinite():
    rng = np.random.default_rng(3)
    stats = RunningStats(5)
    for _ in range(200):
        stats.update(rng.normal(size=5), rng.uniform(0, 1, 5), rng.uniform(0.01, 1, 5))
        for mat in (stats.score_gram, stats.pred_gram, stats.centered_pred_gram()):
            assert np.linalg.eigvalsh(mat).min() >= -1e-9


def test_check_weight_accepts_and_rejects():
    check_weight(np.array([-1.0, 0.25, 0.75]), 0)
    with pytest.raises(ValueError):
        check_weight(np.array([-0.5, 0.25, 0.75]), 0)  # pinned coordinate wrong
    with pytest.raises(ValueError):
        check_weight(np.array([-1.0, -0.2, 1.2]), 0)   # negative mass
    with pytest.raises(ValueError):
        check_weight(np.array([-1.0, 0.3, 0.3]), 0)    # does not sum to one


def test_drift_tracker_two_arm_forced_weight():
    tracker = DriftTracker(2)
    stats = RunningStats(2)
    phi = np.array([0.2, 0.9])
    stats.update(phi, np.full(2, 0.5), np.ones(2))
    w = {0: np.array([-1.0, 1.0]), 1: np.array([1.0, -1.0])}
    tracker.update(phi, stats.score_mean, w)
    assert tracker.drift_sum[0] == pytest.approx(phi[1] - phi[0])
    assert tracker.drift_sum[1] == pytest.approx(phi[0] - phi[1])


def test_drift_tracker_zero_variance_when_scores_equal_mean():
    tracker = DriftTracker(2)
    phi = np.array([0.4, 0.6])
    tracker.update(phi, phi, {0: np.array([-1.0, 1.0])})
    assert tracker.var_sum[0] == 0.0
    assert tracker.sigma(0) == 0.0


def test_drift_tracker_matches_brute_force_trajectory():
    rng = np.random.default_rng(31)
    k = 3
    stats = RunningStats(k)
    tracker = DriftTracker(k)
    drift = np.zeros(k)
    var = np.zeros(k)
    for _ in range(50):
        phi = rng.normal(0.5, 0.8, k)
        weights = {}
        for a in range(k):
            rest = rng.uniform(0.1, 1.0, k - 1)
            w = np.insert(rest / rest.sum(), a, -1.0)
            weights[a] = w
        stats.update(phi, np.full(k, 0.5), np.ones(k))
        tracker.update(phi, stats.score_mean, weights)
        for a in range(k):
            drift[a] += weights[a] @ phi
            var[a] += (weights[a] @ (phi - stats.score_mean)) ** 2
    assert np.allclose(tracker.drift_sum, drift, atol=1e-10)
    assert np.allclose(tracker.var_sum, var, atol=1e-10)


def test_drift_tracker_rejects_bad_weight():
    tracker = DriftTracker(2)
    with pytest.raises(ValueError):
        tracker.update(np.zeros(2), np.zeros(2), {0: np.array([-1.0, 0.9])})


def test_drift_tracker_freezes_missing_arms():
    tracker = DriftTracker(2)
    w = {0: np.array([-1.0, 1.0]), 1: np.array([1.0, -1.0])}
    tracker.update(np.array([0.1, 0.2]), np.zeros(2), w)
    tracker.eliminate(1, 1)
    tracker.update(np.array([0.3, 0.1]), np.zeros(2), {0: w[0]})
    assert tracker.steps[0] == 2 and tracker.steps[1] == 1
    assert tracker.elimination_time[1] == 1
    assert tracker.live_arms() == [0]
