import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from stormpg.estimators import enumerate_trajectories, importance_weights, per_trajectory, sample_batch
from stormpg.mdp import random_mdp
from stormpg.optimizer import derive_constants, schedule
from stormpg.oracle import checks
from stormpg.policy import M_G, action_probs

seeds = st.integers(0, 2**31 - 1)
gammas = st.floats(0.3, 0.97)


def _mdp(seed, S, A, gamma):
    return random_mdp(S, A, gamma, np.random.default_rng(seed))


@settings(max_examples=30, deadline=None)
@given(seed=seeds, S=st.integers(1, 4), A=st.integers(2, 4), scale=st.floats(0.0, 20.0))
def test_policy_is_distribution(seed, S, A, scale):
    theta = scale * np.random.default_rng(seed).normal(size=(S, A))
    pi = action_probs(theta)
    assert np.all(pi >= 0)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, gamma=gammas, H=st.integers(1, 40))
def test_estimator_norm_bound(seed, gamma, H):
    m = _mdp(seed, 3, 3, gamma)
    theta = 2 * np.random.default_rng(seed + 1).normal(size=(3, 3))
    batch = sample_batch(m, theta, m.rho, H, 20, seed, 1)
    g = per_trajectory(batch, theta, gamma)
    assert np.max(np.linalg.norm(g.reshape(20, -1), axis=1)) <= M_G / (1 - gamma) ** 2


@settings(max_examples=25, deadline=None)
@given(seed=seeds, gamma=gammas, H=st.integers(1, 60))
def test_truncation_bias_bound(seed, gamma, H):
    m = _mdp(seed, 3, 2, gamma)
    theta = np.random.default_rng(seed).normal(size=(3, 2))
    assert checks.truncation_bias_check(m, theta, H).holds


@settings(max_examples=20, deadline=None)
@given(seed=seeds, step=st.floats(0.0, 1.0))
def test_weight_mean_one(seed, step):
    m = _mdp(seed, 2, 2, 0.8)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2))
    b = a + step * rng.normal(size=(2, 2))
    batch, prob = enumerate_trajectories(m, b, m.rho, 3)
    assert abs(prob @ importance_weights(batch, a, b) - 1.0) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(gamma=st.floats(0.05, 0.995), H=st.integers(1, 500), W=st.floats(0.0, 10.0),
       lam=st.floats(0.0, 5.0), k=st.floats(0.01, 10.0), t=st.integers(1, 10**6))
def test_theory_bundle_invariants(gamma, H, W, lam, k, t):
    b = derive_constants(2.0, 1.0, gamma, H, W, lam, k)
    eta, beta = schedule(t, b)
    assert 0 < eta <= (1 + 1e-12) / (2 * b.l_lambda)
    assert 0 < beta <= 1 + 1e-12
    assert schedule(t + 1, b)[0] <= eta
