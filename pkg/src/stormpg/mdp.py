"""Finite discounted MDPs and their exact dynamic-programming quantities."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

PROB_TOL = 1e-12
VI_TOL = 1e-12


class MdpValidationError(ValueError):
    """Raised when an MDP violates one of its structural invariants."""


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with transition tensor ``transition[s, a, s']``.

    ``rho`` is the performance measure, ``mu`` the (exploratory) optimization
    measure used to draw initial states during training.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    rho: np.ndarray
    mu: np.ndarray

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def dim(self) -> int:
        return self.n_states * self.n_actions

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "gamma": self.gamma,
            "rho": self.rho.tolist(),
            "mu": self.mu.tolist(),
        }


@dataclass(frozen=True)
class ValueBundle:
    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray


@dataclass(frozen=True)
class VisitationBundle:
    state_dist: np.ndarray
    state_action_dist: np.ndarray


def _check_simplex(p, name, tol=PROB_TOL):
    if np.any(~np.isfinite(p)):
        raise MdpValidationError(f"{name}: non-finite entries")
    if np.any(p < 0):
        raise MdpValidationError(f"{name}: negative probability at index {int(np.argmin(p))}")
    if abs(p.sum() - 1.0) > tol:
        raise MdpValidationError(f"{name}: sums to {float(p.sum())!r}, not 1")


def validate_mdp(mdp: TabularMdp, require_positive_mu: bool = False) -> TabularMdp:
    """Check every invariant and return a copy with probabilities renormalized once.

    Raises :class:`MdpValidationError` naming the offending field (and the
    ``(s, a)`` row for transition errors).
    """
    P = np.asarray(mdp.transition, dtype=np.float64)
    r = np.asarray(mdp.reward, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
        raise MdpValidationError(f"transition: expected shape (S, A, S), got {P.shape}")
    S, A = P.shape[:2]
    if r.shape != (S, A):
        raise MdpValidationError(f"reward: expected shape {(S, A)}, got {r.shape}")
    if not np.all(np.isfinite(P)):
        raise MdpValidationError("transition: non-finite entries")
    neg = np.argwhere(P < 0)
    if len(neg):
        s, a, sp = neg[0]
        raise MdpValidationError(f"transition: negative entry at (s={int(s)}, a={int(a)}, s'={int(sp)})")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if len(bad):
        s, a = bad[0]
        raise MdpValidationError(f"transition: row-sum {float(sums[s, a])!r} != 1 at (s={int(s)}, a={int(a)})")
    if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        s, a = np.argwhere(~((r >= 0) & (r <= 1)))[0]
        raise MdpValidationError(f"reward: r[{int(s)}][{int(a)}] = {float(r[s, a])!r} outside [0, 1]")
    gamma = float(mdp.gamma)
    if not 0.0 < gamma < 1.0:
        raise MdpValidationError(f"gamma: {gamma!r} not in (0, 1)")
    if gamma > 0.999:
        warnings.warn(f"gamma={gamma} > 0.999: (I - gamma P) is poorly conditioned", RuntimeWarning)
    rho = np.asarray(mdp.rho, dtype=np.float64)
    mu = np.asarray(mdp.mu, dtype=np.float64)
    for name, p in (("rho", rho), ("mu", mu)):
        if p.shape != (S,):
            raise MdpValidationError(f"{name}: expected length {S}, got shape {p.shape}")
        _check_simplex(p, name)
    if require_positive_mu and np.any(mu <= 0):
        raise MdpValidationError(
            f"mu: must be strictly positive for soft-max runs (mu[{int(np.argmin(mu))}] = 0)"
        )
    return TabularMdp(
        transition=P / sums[:, :, None],
        reward=r.copy(),
        gamma=gamma,
        rho=rho / rho.sum(),
        mu=mu / mu.sum(),
    )


def mdp_from_dict(data: dict) -> TabularMdp:
    for key in ("transition", "reward", "gamma", "rho", "mu"):
        if key not in data:
            raise MdpValidationError(f"{key}: missing field")
    mdp = TabularMdp(
        transition=np.asarray(data["transition"], dtype=np.float64),
        reward=np.asarray(data["reward"], dtype=np.float64),
        gamma=float(data["gamma"]),
        rho=np.asarray(data["rho"], dtype=np.float64),
        mu=np.asarray(data["mu"], dtype=np.float64),
    )
    for key, n in (("n_states", mdp.transition.shape[0]), ("n_actions", mdp.transition.shape[1])):
        if key in data and int(data[key]) != n:
            raise MdpValidationError(f"{key}: declared {data[key]} but arrays imply {n}")
    return validate_mdp(mdp)


def load_mdp(path) -> TabularMdp:
    """Load and validate an MDP JSON file."""
    with open(path) as f:
        return mdp_from_dict(json.load(f))


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=2) + "\n")


def bundled_mdp(name: str) -> TabularMdp:
    """Load one of the MDPs shipped in ``stormpg/data`` (``two_state``, ``benchmark``)."""
    return load_mdp(Path(__file__).parent / "data" / f"{name}.json")


def random_mdp(n_states, n_actions, gamma, rng, positive_mu=True) -> TabularMdp:
    """Dirichlet transitions, uniform rewards in [0, 1]; handy for property tests."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    mu = rng.dirichlet(np.ones(n_states)) if positive_mu else rho
    mu = 0.5 * mu + 0.5 / n_states
    return validate_mdp(TabularMdp(P, r, float(gamma), rho, mu))


# ---------------------------------------------------------------------------
# Policy-induced quantities


def policy_matrices(mdp: TabularMdp, pi: np.ndarray):
    """Return ``(P_pi, r_pi)`` for a stochastic policy table ``pi[s, a]``."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    return P_pi, r_pi


def policy_evaluation(mdp: TabularMdp, pi: np.ndarray) -> ValueBundle:
    P_pi, r_pi = policy_matrices(mdp, pi)
    M = np.eye(mdp.n_states) - mdp.gamma * P_pi
    try:
        v = linalg.solve(M, r_pi)
    except linalg.LinAlgError as exc:  # pragma: no cover - impossible for gamma < 1
        raise linalg.LinAlgError(f"singular Bellman system: {exc}") from exc
    q = mdp.reward + mdp.gamma * mdp.transition @ v
    return ValueBundle(v=v, q=q, adv=q - v[:, None])


def discounted_visitation(mdp: TabularMdp, pi: np.ndarray, init: np.ndarray) -> VisitationBundle:
    """Discounted occupancy ``d = (1 - gamma) init^T (I - gamma P_pi)^{-1}``."""
    P_pi, _ = policy_matrices(mdp, pi)
    M = np.eye(mdp.n_states) - mdp.gamma * P_pi
    d = (1.0 - mdp.gamma) * linalg.solve(M.T, np.asarray(init, dtype=np.float64))
    d = np.clip(d, 0.0, None)
    return VisitationBundle(state_dist=d, state_action_dist=d[:, None] * pi)


def exact_return(mdp: TabularMdp, pi: np.ndarray, init: np.ndarray) -> float:
    return float(np.dot(init, policy_evaluation(mdp, pi).v))


def truncated_values(mdp: TabularMdp, pi: np.ndarray, H: int) -> np.ndarray:
    """``H``-step value function via backward recursion from ``V_0 = 0``."""
    P_pi, r_pi = policy_matrices(mdp, pi)
    v = np.zeros(mdp.n_states)
    for _ in range(H):
        v = r_pi + mdp.gamma * P_pi @ v
    return v


def truncated_return(mdp: TabularMdp, pi: np.ndarray, init: np.ndarray, H: int) -> float:
    if H < 1:
        raise ValueError(f"horizon must be >= 1, got {H}")
    return float(np.dot(init, truncated_values(mdp, pi, H)))


def optimal_policy(mdp: TabularMdp):
    """Value iteration to sup-norm change <= 1e-12, then the greedy policy.

    Ties go to the lowest action index. Returns ``(pi_star, J_star)`` with
    ``J_star`` measured under ``mdp.rho``.
    """
    v = np.zeros(mdp.n_states)
    while True:
        q = mdp.reward + mdp.gamma * mdp.transition @ v
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta <= VI_TOL:
            break
    q = mdp.reward + mdp.gamma * mdp.transition @ v
    greedy = np.argmax(q, axis=1)
    pi = np.zeros((mdp.n_states, mdp.n_actions))
    pi[np.arange(mdp.n_states), greedy] = 1.0
    return pi, exact_return(mdp, pi, mdp.rho)


def mismatch_coefficient(mdp: TabularMdp, pi_star: np.ndarray) -> float:
    """``max_s d_rho^{pi*}(s) / mu(s)``."""
    if np.any(mdp.mu <= 0):
        raise MdpValidationError("mu: must be strictly positive to form the mismatch coefficient")
    d = discounted_visitation(mdp, pi_star, mdp.rho).state_dist
    return float(np.max(d / mdp.mu))
