"""Exact gradients, importance-weight moments and finite-difference utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import TabularMdp, discounted_visitation, policy_evaluation, policy_matrices
from ..policy import action_probs, log_barrier, log_probs


@dataclass(frozen=True)
class ExactGradients:
    grad_j: np.ndarray
    grad_j_h: np.ndarray | None
    grad_l: np.ndarray | None


def exact_policy_gradient(mdp: TabularMdp, theta, init) -> np.ndarray:
    """Policy-gradient theorem: ``d_init(s) pi(a|s) A(s, a) / (1 - gamma)``."""
    pi = action_probs(theta)
    adv = policy_evaluation(mdp, pi).adv
    d = discounted_visitation(mdp, pi, init).state_dist
    return d[:, None] * pi * adv / (1.0 - mdp.gamma)


def _truncated_gradient_dp(mdp, theta, init, H):
    pi = action_probs(theta)
    P_pi, _ = policy_matrices(mdp, pi)
    S, A = pi.shape
    # n-step Q and V tables for n = 0..H
    qs = [np.zeros((S, A))]
    vs = [np.zeros(S)]
    for _ in range(H):
        q = mdp.reward + mdp.gamma * mdp.transition @ vs[-1]
        qs.append(q)
        vs.append((pi * q).sum(axis=1))
    grad = np.zeros((S, A))
    d = np.asarray(init, dtype=np.float64)
    disc = 1.0
    for h in range(H):
        n = H - h
        grad += disc * d[:, None] * pi * (qs[n] - vs[n][:, None])
        d = d @ P_pi
        disc *= mdp.gamma
    return grad


def _truncated_gradient_enum(mdp, theta, init, H):
    # Likelihood-ratio identity summed over every trajectory prefix.
    from ..estimators import enumerate_trajectories

    batch, prob = enumerate_trajectories(mdp, theta, init, H)
    pi = action_probs(theta)
    S, A = pi.shape
    ret = (batch.rewards * mdp.gamma ** np.arange(H)).sum(axis=1)
    grad = np.zeros((S, A))
    for h in range(H):
        s, a = batch.states[:, h], batch.actions[:, h]
        w = prob * ret
        np.add.at(grad, (s, a), w)
        np.add.at(grad, s, -w[:, None] * pi[s])
    return grad


def exact_truncated_gradient(mdp: TabularMdp, theta, init, H: int, method: str = "dp") -> np.ndarray:
    """Exact gradient of the ``H``-step return.

    ``method`` is ``"dp"`` (finite-horizon recursion), ``"enumerate"``
    (sum over all trajectories) or ``"both"``, which cross-checks the two to
    1e-9 and returns the DP value.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if H == 0:
        return np.zeros_like(theta)
    if method == "dp":
        return _truncated_gradient_dp(mdp, theta, init, H)
    if method == "enumerate":
        return _truncated_gradient_enum(mdp, theta, init, H)
    if method == "both":
        g_dp = _truncated_gradient_dp(mdp, theta, init, H)
        g_en = _truncated_gradient_enum(mdp, theta, init, H)
        err = float(np.max(np.abs(g_dp - g_en)))
        if err > 1e-9:
            raise AssertionError(f"DP and enumeration disagree by {err:.3e}")
        return g_dp
    raise ValueError(f"unknown method {method!r}")


def exact_regularized_gradient(mdp: TabularMdp, theta, lam: float, init, H: int | None = None) -> np.ndarray:
    """Gradient of ``J + log-barrier``; ``H`` selects the truncated return."""
    g = exact_policy_gradient(mdp, theta, init) if H is None else exact_truncated_gradient(mdp, theta, init, H)
    return g + log_barrier(theta, lam)[1]


def exact_gradients(mdp, theta, init, lam=0.0, H=None) -> ExactGradients:
    gj = exact_policy_gradient(mdp, theta, init)
    gh = None if H is None else exact_truncated_gradient(mdp, theta, init, H)
    return ExactGradients(grad_j=gj, grad_j_h=gh, grad_l=gj + log_barrier(theta, lam)[1])


def weight_moment(mdp: TabularMdp, theta_old, theta_new, init, H: int, power: int = 2) -> float:
    """``E_{tau ~ theta_new}[w(tau | theta_old, theta_new)^power]`` by forward recursion.

    With ``power=1`` the result is 1 up to round-off.
    """
    if H == 0:
        return 1.0
    lp_old, lp_new = log_probs(theta_old), log_probs(theta_new)
    log_factor = power * lp_old - (power - 1) * lp_new
    # rescale every step so near-deterministic policies do not overflow
    shift = float(log_factor.max())
    factor = np.exp(log_factor - shift)
    alpha = np.asarray(init, dtype=np.float64)
    log_scale = 0.0
    for h in range(H):
        flow = alpha[:, None] * factor
        log_scale += shift
        if h == H - 1:
            break
        alpha = np.einsum("sa,sat->t", flow, mdp.transition)
        top = alpha.max()
        alpha = alpha / top
        log_scale += np.log(top)
    total = float(flow.sum())
    with np.errstate(over="ignore"):
        return float(np.exp(log_scale + np.log(total))) if total > 0 else 0.0


def weight_variance(mdp, theta_old, theta_new, init, H) -> float:
    """Exact ``Var[w]`` for trajectories drawn under ``theta_new``."""
    return weight_moment(mdp, theta_old, theta_new, init, H, 2) - 1.0


def default_fd_step(theta) -> float:
    return np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + float(np.max(np.abs(theta))))


def finite_diff_gradient(f, theta, step: float | None = None) -> np.ndarray:
    """Componentwise central differences of a scalar field ``f``."""
    theta = np.asarray(theta, dtype=np.float64)
    h = default_fd_step(theta) if step is None else step
    if h <= 0:
        raise ValueError("step must be positive")
    grad = np.zeros(theta.size)
    flat = theta.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        grad[i] = (f((flat + e).reshape(theta.shape)) - f((flat - e).reshape(theta.shape))) / (2 * h)
    return grad.reshape(theta.shape)


def finite_diff_hessian(grad_fn, theta, step: float = 1e-5) -> np.ndarray:
    """Symmetrized Jacobian of ``grad_fn`` by central differences, shape ``(d, d)``."""
    theta = np.asarray(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    d = flat.size
    hess = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        gp = grad_fn((flat + e).reshape(theta.shape)).reshape(-1)
        gm = grad_fn((flat - e).reshape(theta.shape)).reshape(-1)
        hess[:, i] = (gp - gm) / (2 * step)
    return 0.5 * (hess + hess.T)
