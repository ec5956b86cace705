import json

import numpy as np
import pytest

from stormpg.mdp import (
    MdpValidationError,
    TabularMdp,
    discounted_visitation,
    exact_return,
    load_mdp,
    mdp_from_dict,
    mismatch_coefficient,
    optimal_policy,
    policy_evaluation,
    save_mdp,
    truncated_return,
    validate_mdp,
)
from stormpg.policy import action_probs

from .conftest import make_random

# Power-series sum of gamma^k P_pi^k r_pi (3000 terms) at the uniform policy.
TWO_STATE_UNIFORM_J = 3.823442136498516
# Brute force over all 3^5 deterministic policies.
BENCHMARK_J_STAR = 1.4647862139871723


def test_two_state_uniform_return_matches_series(two_state):
    pi = np.full((2, 2), 0.5)
    assert exact_return(two_state, pi, two_state.rho) == pytest.approx(TWO_STATE_UNIFORM_J, abs=1e-12)


def test_benchmark_optimum_matches_brute_force(benchmark):
    pi_star, j_star = optimal_policy(benchmark)
    assert j_star == pytest.approx(BENCHMARK_J_STAR, abs=1e-10)
    assert np.all(pi_star.sum(axis=1) == 1)
    assert set(np.unique(pi_star)) <= {0.0, 1.0}


def test_bellman_consistency(two_state, rng):
    pi = action_probs(rng.normal(size=(2, 2)))
    vb = policy_evaluation(two_state, pi)
    expected_q = two_state.reward + two_state.gamma * two_state.transition @ vb.v
    np.testing.assert_allclose(vb.q, expected_q, atol=1e-12)
    np.testing.assert_allclose((pi * vb.adv).sum(axis=1), 0.0, atol=1e-12)


def test_visitation_is_distribution(benchmark, rng):
    pi = action_probs(rng.normal(size=(5, 3)))
    vis = discounted_visitation(benchmark, pi, benchmark.rho)
    assert vis.state_dist.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(vis.state_dist >= 0)
    np.testing.assert_allclose(vis.state_action_dist.sum(axis=1), vis.state_dist, atol=1e-14)


def test_truncated_return_converges(two_state):
    pi = np.full((2, 2), 0.5)
    full = exact_return(two_state, pi, two_state.rho)
    assert truncated_return(two_state, pi, two_state.rho, 400) == pytest.approx(full, abs=1e-12)
    with pytest.raises(ValueError):
        truncated_return(two_state, pi, two_state.rho, 0)


def test_zero_reward_return_is_zero(zero_reward):
    pi = np.full((3, 2), 0.5)
    assert exact_return(zero_reward, pi, zero_reward.rho) == 0.0


def test_mismatch_at_least_one_when_mu_equals_rho():
    m = make_random(3)
    m = TabularMdp(m.transition, m.reward, m.gamma, m.mu, m.mu)
    pi_star, _ = optimal_policy(m)
    assert mismatch_coefficient(m, pi_star) >= 1.0 - 1e-12


def test_validation_names_transition_row(two_state):
    d = two_state.to_dict()
    d["transition"][1][0] = [0.7, 0.5]
    with pytest.raises(MdpValidationError, match=r"transition.*s=1, a=0"):
        mdp_from_dict(d)


@pytest.mark.parametrize(
    "field,value,pattern",
    [
        ("reward", [[0.0, 1.5], [0.0, 0.0]], "reward"),
        ("gamma", 1.0, "gamma"),
        ("rho", [0.5, 0.6], "rho"),
        ("mu", [-0.1, 1.1], "mu"),
    ],
)
def test_validation_errors_name_field(two_state, field, value, pattern):
    d = two_state.to_dict()
    d[field] = value
    with pytest.raises(MdpValidationError, match=pattern):
        mdp_from_dict(d)


def test_missing_field(two_state):
    d = two_state.to_dict()
    del d["gamma"]
    with pytest.raises(MdpValidationError, match="gamma"):
        mdp_from_dict(d)


def test_positive_mu_requirement(two_state):
    m = TabularMdp(two_state.transition, two_state.reward, two_state.gamma, two_state.rho, np.array([1.0, 0.0]))
    validate_mdp(m)
    with pytest.raises(MdpValidationError, match="mu"):
        validate_mdp(m, require_positive_mu=True)


def test_high_gamma_warns(two_state):
    m = TabularMdp(two_state.transition, two_state.reward, 0.9995, two_state.rho, two_state.mu)
    with pytest.warns(RuntimeWarning):
        validate_mdp(m)


def test_save_load_roundtrip(tmp_path, benchmark):
    p = tmp_path / "m.json"
    save_mdp(benchmark, p)
    m2 = load_mdp(p)
    np.testing.assert_array_equal(m2.transition, benchmark.transition)
    assert json.loads(p.read_text())["n_states"] == 5
