import numpy as np
import pytest

from stormpg.oracle.exact import finite_diff_gradient
from stormpg.policy import (
    M_G,
    action_probs,
    fisher_information,
    log_barrier,
    log_probs,
    sample_action,
    score,
    score_matrix,
)


def test_probs_stable_for_large_logits():
    theta = np.array([[1000.0, 0.0, -1000.0]])
    pi = action_probs(theta)
    assert np.all(np.isfinite(pi))
    assert pi[0, 0] == pytest.approx(1.0)
    assert np.all(np.isfinite(log_probs(theta)))


def test_score_matches_log_prob_derivative(rng):
    theta = rng.normal(size=(3, 4))
    for s, a in [(0, 0), (2, 3), (1, 2)]:
        fd = finite_diff_gradient(lambda th: log_probs(th)[s, a], theta)
        np.testing.assert_allclose(score(theta, s, a), fd, atol=1e-8)


def test_score_norm_bound(rng):
    for _ in range(50):
        theta = 3 * rng.normal(size=(2, 5))
        for a in range(5):
            assert np.linalg.norm(score(theta, 0, a)) <= np.sqrt(M_G) + 1e-12


def test_score_matrix_rows(rng):
    theta = rng.normal(size=(2, 3))
    mat = score_matrix(theta)
    np.testing.assert_allclose(mat[1 * 3 + 2], score(theta, 1, 2).reshape(-1))


def test_barrier_zero_at_uniform_and_gradient():
    theta = np.zeros((3, 4))
    value, grad = log_barrier(theta, 0.3)
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)
    theta = np.random.default_rng(2).normal(size=(3, 4))
    fd = finite_diff_gradient(lambda th: log_barrier(th, 0.3)[0], theta)
    np.testing.assert_allclose(log_barrier(theta, 0.3)[1], fd, atol=1e-8)
    assert log_barrier(theta, 0.3)[0] < 0


def test_sample_action_frequencies():
    theta = np.log(np.array([[0.2, 0.5, 0.3]]))
    rng = np.random.default_rng(0)
    counts = np.bincount([sample_action(theta, 0, rng) for _ in range(20000)], minlength=3)
    np.testing.assert_allclose(counts / 20000, [0.2, 0.5, 0.3], atol=0.015)


def test_fisher_singular_but_restricted_positive(two_state, rng):
    rep = fisher_information(two_state, rng.normal(size=(2, 2)), two_state.rho)
    assert abs(rep.mu_f) < 1e-12
    assert rep.mu_f_restricted > 1e-6
    np.testing.assert_allclose(rep.fisher, rep.fisher.T, atol=1e-15)
    assert rep.condition_number >= 1.0
