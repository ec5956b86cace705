import json

import numpy as np
import pytest

from stormpg.estimators import (
    DegenerateSupportError,
    Trajectory,
    TrajectoryBatch,
    batch_estimate,
    dump_trajectories,
    enumerate_trajectories,
    gpomdp,
    gpomdp_batch,
    importance_weight,
    importance_weights,
    pgt,
    reinforce,
    sample_batch,
    sample_trajectory,
)
from stormpg.oracle.exact import exact_truncated_gradient
from stormpg.policy import score

# Hand calculation: bandit r=(1,0), gamma=0.5, uniform policy, trajectory a0=0, a1=1 (H=2).
# Rewards (1, 0). GPOMDP = score(a0)*(1 + 0.5*0) + score(a1)*(0.5*0) = (0.5, -0.5).
BANDIT_GPOMDP = np.array([[0.5, -0.5]])
# REINFORCE = (score(a0)+score(a1)) * 1 = (0.5-0.5, -0.5+0.5) = 0.
BANDIT_REINFORCE = np.array([[0.0, 0.0]])


def _bandit_traj():
    return Trajectory(np.array([0, 0]), np.array([0, 1]), np.array([1.0, 0.0]), 0)


def test_bandit_hand_values():
    theta = np.zeros((1, 2))
    np.testing.assert_allclose(gpomdp(_bandit_traj(), theta, 0.5).grad, BANDIT_GPOMDP, atol=1e-15)
    np.testing.assert_allclose(reinforce(_bandit_traj(), theta, 0.5).grad, BANDIT_REINFORCE, atol=1e-15)


def test_single_step_reduces_to_score_times_reward(two_state, rng):
    theta = rng.normal(size=(2, 2))
    traj = Trajectory(np.array([1]), np.array([0]), np.array([two_state.reward[1, 0]]), 0)
    expected = score(theta, 1, 0) * two_state.reward[1, 0]
    for est in (gpomdp(traj, theta, 0.9), pgt(traj, theta, 0.9), reinforce(traj, theta, 0.9)):
        np.testing.assert_allclose(est.grad, expected, atol=1e-15)


def test_zero_reward_gives_zero(zero_reward, rng):
    batch = sample_batch(zero_reward, rng.normal(size=(3, 2)), zero_reward.rho, 10, 20, 0, 1)
    assert np.all(gpomdp_batch(batch, np.zeros((3, 2)), 0.8) == 0)


def test_pgt_bit_identical_to_gpomdp(benchmark, rng):
    theta = rng.normal(size=(5, 3))
    batch = sample_batch(benchmark, theta, benchmark.mu, 31, 200, 0, 1)
    for i in range(len(batch)):
        assert np.array_equal(pgt(batch[i], theta, 0.8).grad, gpomdp(batch[i], theta, 0.8).grad)


def test_constant_baseline_keeps_unbiasedness(two_state, rng):
    theta = rng.normal(size=(2, 2))
    batch, prob = enumerate_trajectories(two_state, theta, two_state.rho, 3)
    g = gpomdp_batch(batch, theta, 0.9, baselines=np.array([0.3, -0.2, 0.7]))
    np.testing.assert_allclose(
        np.tensordot(prob, g, axes=1), exact_truncated_gradient(two_state, theta, two_state.rho, 3), atol=1e-12
    )
    with pytest.raises(ValueError):
        gpomdp_batch(batch, theta, 0.9, baselines=np.zeros(2))


def test_batch_mean_properties(two_state, rng):
    theta = rng.normal(size=(2, 2))
    t = sample_trajectory(two_state, theta, two_state.rho, 5, rng)
    single = gpomdp(t, theta, 0.9).grad
    np.testing.assert_allclose(batch_estimate([t, t, t], theta, 0.9).grad, single, atol=1e-15)
    est = batch_estimate([t], theta, 0.9)
    assert est.batch_size == 1 and est.horizon == 5 and est.estimator_kind == "gpomdp"


def test_batch_variance_scales_with_inverse_batch(two_state):
    theta = np.zeros((2, 2))
    var = {}
    for B in (4, 16):
        means = [batch_estimate(sample_batch(two_state, theta, two_state.rho, 4, B, seed, 1), theta, 0.9).grad[0, 0]
                 for seed in range(400)]
        var[B] = np.var(means)
    assert var[4] / var[16] == pytest.approx(4.0, rel=0.35)


def test_sampling_deterministic_and_substream_independent(benchmark):
    theta = np.zeros((5, 3))
    a = sample_batch(benchmark, theta, benchmark.mu, 10, 8, 42, 3)
    b = sample_batch(benchmark, theta, benchmark.mu, 10, 4, 42, 3)
    np.testing.assert_array_equal(a.states[:4], b.states)
    c = sample_batch(benchmark, theta, benchmark.mu, 10, 8, 42, 4)
    assert not np.array_equal(a.states, c.states)


def test_sampled_frequencies_match_policy(two_state):
    theta = np.array([[np.log(0.3), np.log(0.7)], [0.0, 0.0]])
    batch = sample_batch(two_state, theta, np.array([1.0, 0.0]), 1, 20000, 9, 1)
    assert np.mean(batch.actions[:, 0] == 1) == pytest.approx(0.7, abs=0.015)


def test_rewards_and_terminal_states_consistent(benchmark):
    batch = sample_batch(benchmark, np.zeros((5, 3)), benchmark.mu, 6, 30, 1, 1)
    np.testing.assert_array_equal(batch.rewards, benchmark.reward[batch.states, batch.actions])
    assert np.all((batch.terminal_states >= 0) & (batch.terminal_states < 5))


def test_weights(two_state, rng):
    theta = rng.normal(size=(2, 2))
    t = sample_trajectory(two_state, theta, two_state.rho, 5, rng)
    assert importance_weight(t, theta, theta) == 1.0
    other = theta + rng.normal(size=theta.shape)
    w = importance_weight(t, other, theta)
    lp_old = sum(np.log(np.exp(other[s, a]) / np.exp(other[s]).sum()) for s, a in zip(t.states, t.actions))
    lp_new = sum(np.log(np.exp(theta[s, a]) / np.exp(theta[s]).sum()) for s, a in zip(t.states, t.actions))
    assert w == pytest.approx(np.exp(lp_old - lp_new), rel=1e-12)
    assert importance_weight(t, other, theta, clip=(0.5, 0.6)) == min(max(w, 0.5), 0.6)


def test_weights_long_horizon_no_underflow(benchmark):
    theta = np.zeros((5, 3))
    batch = sample_batch(benchmark, theta, benchmark.mu, 200, 10, 0, 1)
    w = importance_weights(batch, theta + 0.05, theta)
    assert np.all(np.isfinite(w)) and np.all(w > 0)


def test_degenerate_support_raises():
    theta_new = np.array([[0.0, -np.inf]])
    t = Trajectory(np.array([0]), np.array([1]), np.array([0.0]), 0)
    with pytest.raises(DegenerateSupportError):
        importance_weight(t, np.zeros((1, 2)), theta_new)


def test_enumeration_probabilities_sum_to_one(two_state, rng):
    batch, prob = enumerate_trajectories(two_state, rng.normal(size=(2, 2)), two_state.rho, 4)
    assert prob.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(batch) == prob.size


def test_enumeration_guard(benchmark):
    with pytest.raises(ValueError):
        enumerate_trajectories(benchmark, np.zeros((5, 3)), benchmark.rho, 8)


def test_dump_trajectories(tmp_path, two_state):
    batch = sample_batch(two_state, np.zeros((2, 2)), two_state.rho, 3, 2, 0, 1)
    p = tmp_path / "t.jsonl"
    dump_trajectories(batch, p)
    lines = [json.loads(x) for x in p.read_text().splitlines()]
    assert len(lines) == 2 and len(lines[0]["steps"]) == 3 and "terminal_state" in lines[0]


def test_batch_from_trajectories_roundtrip(two_state):
    batch = sample_batch(two_state, np.zeros((2, 2)), two_state.rho, 3, 4, 0, 1)
    again = TrajectoryBatch.from_trajectories([batch[i] for i in range(4)])
    np.testing.assert_array_equal(again.states, batch.states)
