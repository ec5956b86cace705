"""Soft-max tabular policies: probabilities, scores, log-barrier and Fisher information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .mdp import TabularMdp, discounted_visitation, exact_return

M_G = 2.0
M_H = 1.0


@dataclass(frozen=True)
class FisherReport:
    """Fisher information plus its spectrum.

    ``mu_f`` is the plain smallest eigenvalue, which is always ~0 for soft-max
    because each state block annihilates the constant direction.
    ``mu_f_restricted`` is the smallest eigenvalue on the orthogonal complement
    of those directions; ``condition_number`` uses the restricted value.
    """

    fisher: np.ndarray
    mu_f: float
    mu_f_restricted: float
    condition_number: float


def init_theta(n_states: int, n_actions: int) -> np.ndarray:
    return np.zeros((n_states, n_actions))


def log_probs(theta: np.ndarray) -> np.ndarray:
    """``log pi(a|s) = theta[s, a] - logsumexp(theta[s, :])``."""
    theta = np.asarray(theta, dtype=np.float64)
    m = theta.max(axis=-1, keepdims=True)
    return theta - (m + np.log(np.exp(theta - m).sum(axis=-1, keepdims=True)))


def action_probs(theta: np.ndarray, s: int | None = None) -> np.ndarray:
    """Max-shifted soft-max over actions; all states when ``s`` is None."""
    theta = np.asarray(theta, dtype=np.float64)
    if s is not None:
        theta = theta[s]
    z = np.exp(theta - theta.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def score(theta: np.ndarray, s: int, a: int) -> np.ndarray:
    """Gradient of ``log pi(a|s)``; only row ``s`` is nonzero and equals ``e_a - pi(.|s)``."""
    g = np.zeros_like(theta, dtype=np.float64)
    g[s] = -action_probs(theta, s)
    g[s, a] += 1.0
    return g


def score_matrix(theta: np.ndarray) -> np.ndarray:
    """All scores stacked as ``(S*A, S*A)``; row ``s*A + a`` is ``vec(score(theta, s, a))``."""
    S, A = theta.shape
    pi = action_probs(theta)
    out = np.zeros((S, A, S, A))
    for s in range(S):
        out[s, :, s, :] = np.eye(A) - pi[s][None, :]
    return out.reshape(S * A, S * A)


def sample_action(theta: np.ndarray, s: int, rng: np.random.Generator) -> int:
    """Inverse-CDF draw in action-index order from one uniform of ``rng``."""
    cdf = np.cumsum(action_probs(theta, s))
    u = rng.random() * cdf[-1]
    return int(np.count_nonzero(cdf <= u))


def log_barrier(theta: np.ndarray, lam: float):
    """Value and gradient of ``lam/(|A||S|) * sum_{s,a} log pi(a|s) + lam*log|A|``.

    The gradient uses ``sum_a score(s, a) = 1 - |A| pi(.|s)`` in each block.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    S, A = theta.shape
    if lam == 0:
        return 0.0, np.zeros((S, A))
    scale = lam / (S * A)
    value = scale * float(log_probs(theta).sum()) + lam * np.log(A)
    grad = scale * (1.0 - A * action_probs(theta))
    return value, grad


def regularized_objective(mdp: TabularMdp, theta: np.ndarray, lam: float, init: np.ndarray) -> float:
    return exact_return(mdp, action_probs(theta), init) + log_barrier(theta, lam)[0]


def _restricted_basis(S: int, A: int) -> np.ndarray:
    """Orthonormal basis of the complement of the per-state constant directions."""
    block = linalg.null_space(np.ones((1, A)))
    return linalg.block_diag(*([block] * S))


def fisher_information(mdp: TabularMdp, theta: np.ndarray, init: np.ndarray) -> FisherReport:
    """``F = sum_{s,a} v(s,a) score score^T`` under the state-action occupancy of ``init``."""
    S, A = theta.shape
    pi = action_probs(theta)
    v = discounted_visitation(mdp, pi, init).state_action_dist.reshape(-1)
    scores = score_matrix(theta)
    F = (scores * v[:, None]).T @ scores
    F = 0.5 * (F + F.T)
    eig = linalg.eigvalsh(F)
    if A > 1:
        basis = _restricted_basis(S, A)
        eig_r = linalg.eigvalsh(basis.T @ F @ basis)
        mu_r = float(eig_r[0])
    else:
        mu_r = 0.0
    cond = float(eig[-1] / mu_r) if mu_r > 0 else float("inf")
    return FisherReport(fisher=F, mu_f=float(eig[0]), mu_f_restricted=mu_r, condition_number=cond)
