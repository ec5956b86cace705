"""Trajectory sampling, truncated REINFORCE / PGT / GPOMDP estimators and importance weights."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .mdp import TabularMdp
from .policy import action_probs, log_probs


class DegenerateSupportError(ValueError):
    """An action in the trajectory has zero probability under the target policy."""


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal_state: int

    @property
    def horizon(self) -> int:
        return len(self.states)

    @property
    def steps(self):
        return [(int(s), int(a), float(r)) for s, a, r in zip(self.states, self.actions, self.rewards)]


@dataclass(frozen=True)
class TrajectoryBatch:
    """``B`` trajectories of equal horizon stored as ``(B, H)`` arrays."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal_states: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i], self.rewards[i], int(self.terminal_states[i]))

    @classmethod
    def from_trajectories(cls, trajs) -> "TrajectoryBatch":
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty batch")
        if isinstance(trajs[0], TrajectoryBatch) and len(trajs) == 1:
            return trajs[0]
        return cls(
            states=np.stack([t.states for t in trajs]).astype(np.int64),
            actions=np.stack([t.actions for t in trajs]).astype(np.int64),
            rewards=np.stack([t.rewards for t in trajs]).astype(np.float64),
            terminal_states=np.array([t.terminal_state for t in trajs], dtype=np.int64),
        )


@dataclass(frozen=True)
class GradEstimate:
    grad: np.ndarray
    estimator_kind: str
    batch_size: int
    horizon: int


def _as_batch(trajs) -> TrajectoryBatch:
    if isinstance(trajs, TrajectoryBatch):
        return trajs
    if isinstance(trajs, Trajectory):
        return TrajectoryBatch.from_trajectories([trajs])
    return TrajectoryBatch.from_trajectories(trajs)


# ---------------------------------------------------------------------------
# Sampling


def substream(seed: int, t: int, i: int) -> np.random.Generator:
    """Independent generator for trajectory ``i`` of iteration ``t`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t, i)))


def _cdfs(mdp: TabularMdp, theta, init):
    return (
        np.cumsum(np.asarray(init, dtype=np.float64)),
        np.cumsum(action_probs(theta), axis=1),
        np.cumsum(mdp.transition, axis=2),
    )


def sample_from_uniforms(mdp, theta, init, uniforms, backend=None) -> TrajectoryBatch:
    """Inverse-CDF rollout driven by ``uniforms[i] = (u_s0, u_a0, u_s1, u_a1, ...)``."""
    kern = backend or kernels.BACKEND
    init_cdf, pi_cdf, trans_cdf = _cdfs(mdp, theta, init)
    s, a, r, term = kern.sample_batch(np.ascontiguousarray(uniforms), init_cdf, pi_cdf, trans_cdf, mdp.reward)
    return TrajectoryBatch(s, a, r, term)


def sample_trajectory(mdp, theta, init, H: int, rng: np.random.Generator, backend=None) -> Trajectory:
    if H < 1:
        raise ValueError(f"horizon must be >= 1, got {H}")
    u = rng.random((1, 2 * H + 1))
    return sample_from_uniforms(mdp, theta, init, u, backend)[0]


def sample_batch(mdp, theta, init, H: int, B: int, seed: int, t: int, backend=None) -> TrajectoryBatch:
    """``B`` rollouts, trajectory ``i`` drawn from ``substream(seed, t, i)``.

    The result does not depend on how the uniforms are produced in parallel,
    only on ``(seed, t, i)``.
    """
    if H < 1:
        raise ValueError(f"horizon must be >= 1, got {H}")
    u = np.empty((B, 2 * H + 1))
    for i in range(B):
        u[i] = substream(seed, t, i).random(2 * H + 1)
    return sample_from_uniforms(mdp, theta, init, u, backend)


def dump_trajectories(batch, path) -> None:
    """Write one JSON object per trajectory with fields ``steps`` and ``terminal_state``."""
    batch = _as_batch(batch)
    with open(path, "w") as f:
        for i in range(len(batch)):
            tr = batch[i]
            f.write(json.dumps({"steps": tr.steps, "terminal_state": tr.terminal_state}) + "\n")


# ---------------------------------------------------------------------------
# Estimators (per trajectory, batched)


def _discounts(gamma, H):
    return gamma ** np.arange(H, dtype=np.float64)


def gpomdp_batch(batch, theta, gamma, baselines=None, backend=None) -> np.ndarray:
    """Per-trajectory truncated GPOMDP estimates, shape ``(B, S, A)``.

    Evaluated as ``sum_j score_j * sum_{h>=j} (gamma^h r_h - b_h)``, the
    reordering of the double sum that PGT shares.
    """
    batch = _as_batch(batch)
    H = batch.horizon
    b = np.zeros(H) if baselines is None else np.asarray(baselines, dtype=np.float64)
    if b.shape != (H,):
        raise ValueError(f"baseline length {b.shape} does not match horizon {H}")
    kern = backend or kernels.BACKEND
    return kern.gpomdp_batch(batch.states, batch.actions, batch.rewards, action_probs(theta), _discounts(gamma, H), b)


def reinforce_batch(batch, theta, gamma, b=0.0, backend=None) -> np.ndarray:
    batch = _as_batch(batch)
    kern = backend or kernels.BACKEND
    return kern.reinforce_batch(
        batch.states, batch.actions, batch.rewards, action_probs(theta), _discounts(gamma, batch.horizon), float(b)
    )


def gpomdp(traj: Trajectory, theta, gamma, baselines=None) -> GradEstimate:
    g = gpomdp_batch(traj, theta, gamma, baselines)[0]
    return GradEstimate(g, "gpomdp", 1, traj.horizon)


def pgt(traj: Trajectory, theta, gamma) -> GradEstimate:
    g = gpomdp_batch(traj, theta, gamma, None)[0]
    return GradEstimate(g, "pgt", 1, traj.horizon)


def reinforce(traj: Trajectory, theta, gamma, b=0.0) -> GradEstimate:
    g = reinforce_batch(traj, theta, gamma, b)[0]
    return GradEstimate(g, "reinforce", 1, traj.horizon)


def per_trajectory(batch, theta, gamma, kind="gpomdp", baselines=None, b=0.0) -> np.ndarray:
    if kind in ("gpomdp", "pgt"):
        return gpomdp_batch(batch, theta, gamma, None if kind == "pgt" else baselines)
    if kind == "reinforce":
        return reinforce_batch(batch, theta, gamma, b)
    raise ValueError(f"unknown estimator kind {kind!r}")


def batch_estimate(trajs, theta, gamma, kind="gpomdp", baselines=None, b=0.0) -> GradEstimate:
    """Arithmetic mean of per-trajectory estimates in trajectory-index order."""
    batch = _as_batch(trajs)
    if len(batch) == 0:
        raise ValueError("empty batch")
    g = kernels.mean_rows(per_trajectory(batch, theta, gamma, kind, baselines, b))
    return GradEstimate(g, kind, len(batch), batch.horizon)


# ---------------------------------------------------------------------------
# Importance weights


def log_importance_weights(batch, theta_old, theta_new, backend=None) -> np.ndarray:
    """``log w = sum_h log pi_old(a_h|s_h) - log pi_new(a_h|s_h)`` per trajectory."""
    batch = _as_batch(batch)
    lp_new = log_probs(theta_new)
    if not np.all(np.isfinite(lp_new[batch.states, batch.actions])):
        raise DegenerateSupportError("trajectory action has zero probability under theta_new")
    kern = backend or kernels.BACKEND
    return kern.log_weights(batch.states, batch.actions, log_probs(theta_old), lp_new)


def importance_weights(batch, theta_old, theta_new, clip=None) -> np.ndarray:
    w = np.exp(log_importance_weights(batch, theta_old, theta_new))
    if clip is not None:
        lo, hi = clip
        w = np.clip(w, lo, hi)
    return w


def importance_weight(traj: Trajectory, theta_old, theta_new, clip=None) -> float:
    """Likelihood ratio ``p(traj | theta_old) / p(traj | theta_new)``, clipped after the product."""
    return float(importance_weights(traj, theta_old, theta_new, clip)[0])


# ---------------------------------------------------------------------------
# Exhaustive enumeration (oracle support)

ENUM_LIMIT = 10**6


def enumerate_trajectories(mdp: TabularMdp, theta, init, H: int):
    """Every ``(s_0, a_0, ..., s_{H-1}, a_{H-1})`` with its probability.

    The terminal state is marginalized out, so ``terminal_states`` is -1.
    Returns ``(batch, probs)``; raises if ``(|S||A|)^H`` exceeds the limit.
    """
    S, A = mdp.n_states, mdp.n_actions
    if (S * A) ** H > ENUM_LIMIT:
        raise ValueError(f"enumeration of (|S||A|)^H = {(S * A) ** H} outcomes exceeds {ENUM_LIMIT}")
    pi = action_probs(theta)
    pairs = list(product(range(S), range(A)))
    seqs = np.array(list(product(range(S * A), repeat=H)), dtype=np.int64).reshape(-1, H)
    states = np.array([p[0] for p in pairs])[seqs]
    actions = np.array([p[1] for p in pairs])[seqs]
    prob = np.asarray(init)[states[:, 0]] * pi[states[:, 0], actions[:, 0]]
    for h in range(1, H):
        prob = prob * mdp.transition[states[:, h - 1], actions[:, h - 1], states[:, h]] * pi[states[:, h], actions[:, h]]
    keep = prob > 0
    batch = TrajectoryBatch(
        states[keep], actions[keep], mdp.reward[states[keep], actions[keep]], -np.ones(int(keep.sum()), dtype=np.int64)
    )
    return batch, prob[keep]
