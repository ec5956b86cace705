"""Hot inner loops: batch trajectory sampling, per-trajectory estimators, log importance weights.

Each kernel exists twice: a numba ``@njit`` loop and a numpy version that is
vectorized over the batch but walks the horizon in the same order. Both
perform the same floating-point operations in the same sequence, so they
agree bit-for-bit.

The backend is fixed at import: numba when importable, unless the
environment variable ``STORMPG_DISABLE_NUMBA`` is set to a non-empty value
other than ``0``. Use :func:`get_backend` to get either set explicitly.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_flag = os.environ.get("STORMPG_DISABLE_NUMBA", "")
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0")


# ---------------------------------------------------------------------------
# numpy path


def _np_draw(cdf_rows, u):
    # cdf_rows: (B, K); index = #{k : cdf[k] <= u * total}
    scaled = u * cdf_rows[:, -1]
    return np.count_nonzero(cdf_rows <= scaled[:, None], axis=1)


def np_sample_batch(uniforms, init_cdf, pi_cdf, trans_cdf, reward):
    B, n = uniforms.shape
    H = (n - 1) // 2
    states = np.empty((B, H), dtype=np.int64)
    actions = np.empty((B, H), dtype=np.int64)
    rewards = np.empty((B, H), dtype=np.float64)
    s = _np_draw(np.broadcast_to(init_cdf, (B, init_cdf.shape[0])), uniforms[:, 0])
    for h in range(H):
        a = _np_draw(pi_cdf[s], uniforms[:, 1 + 2 * h])
        states[:, h] = s
        actions[:, h] = a
        rewards[:, h] = reward[s, a]
        s = _np_draw(trans_cdf[s, a], uniforms[:, 2 + 2 * h])
    return states, actions, rewards, s.astype(np.int64)


def np_suffix_scores(states, actions, weights, probs):
    """``g = sum_j score(s_j, a_j) * sum_{h>=j} weights[h]`` per trajectory."""
    B, H = states.shape
    S, A = probs.shape
    suffix = np.zeros((B, H))
    acc = np.zeros(B)
    for j in range(H - 1, -1, -1):
        acc = acc + weights[:, j]
        suffix[:, j] = acc
    grads = np.zeros((B, S, A))
    rows = np.arange(B)
    eye = np.eye(A)
    for j in range(H):
        s = states[:, j]
        grads[rows, s, :] += suffix[:, j, None] * (eye[actions[:, j]] - probs[s])
    return grads


def np_gpomdp_batch(states, actions, rewards, probs, discounts, baselines):
    weights = discounts[None, :] * rewards - baselines[None, :]
    return np_suffix_scores(states, actions, weights, probs)


def np_reinforce_batch(states, actions, rewards, probs, discounts, b):
    B, H = states.shape
    S, A = probs.shape
    total = np.zeros((B, S, A))
    ret = np.zeros(B)
    rows = np.arange(B)
    eye = np.eye(A)
    for h in range(H):
        s = states[:, h]
        total[rows, s, :] += eye[actions[:, h]] - probs[s]
        ret = ret + discounts[h] * rewards[:, h]
    return total * (ret - b)[:, None, None]


def np_log_weights(states, actions, logp_old, logp_new):
    B, H = states.shape
    out = np.zeros(B)
    for h in range(H):
        s, a = states[:, h], actions[:, h]
        out = out + (logp_old[s, a] - logp_new[s, a])
    return out


def np_mean_rows(x):
    """Mean over axis 0 with a fixed left-to-right reduction order."""
    acc = np.zeros(x.shape[1:])
    for i in range(x.shape[0]):
        acc = acc + x[i]
    return acc / x.shape[0]


numpy_backend = SimpleNamespace(
    name="numpy",
    sample_batch=np_sample_batch,
    gpomdp_batch=np_gpomdp_batch,
    reinforce_batch=np_reinforce_batch,
    log_weights=np_log_weights,
)


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_draw(cdf, u):
        scaled = u * cdf[cdf.shape[0] - 1]
        k = 0
        for i in range(cdf.shape[0]):
            if cdf[i] <= scaled:
                k += 1
        return k

    @njit(cache=True)
    def nb_sample_batch(uniforms, init_cdf, pi_cdf, trans_cdf, reward):
        B, n = uniforms.shape
        H = (n - 1) // 2
        states = np.empty((B, H), dtype=np.int64)
        actions = np.empty((B, H), dtype=np.int64)
        rewards = np.empty((B, H), dtype=np.float64)
        terminal = np.empty(B, dtype=np.int64)
        for i in range(B):
            s = _nb_draw(init_cdf, uniforms[i, 0])
            for h in range(H):
                a = _nb_draw(pi_cdf[s], uniforms[i, 1 + 2 * h])
                states[i, h] = s
                actions[i, h] = a
                rewards[i, h] = reward[s, a]
                s = _nb_draw(trans_cdf[s, a], uniforms[i, 2 + 2 * h])
            terminal[i] = s
        return states, actions, rewards, terminal

    @njit(cache=True)
    def nb_suffix_scores(states, actions, weights, probs):
        B, H = states.shape
        S, A = probs.shape
        grads = np.zeros((B, S, A))
        suffix = np.zeros(H)
        for i in range(B):
            acc = 0.0
            for j in range(H - 1, -1, -1):
                acc = acc + weights[i, j]
                suffix[j] = acc
            for j in range(H):
                s = states[i, j]
                a = actions[i, j]
                for k in range(A):
                    e = 1.0 if k == a else 0.0
                    grads[i, s, k] += suffix[j] * (e - probs[s, k])
        return grads

    @njit(cache=True)
    def nb_gpomdp_batch(states, actions, rewards, probs, discounts, baselines):
        B, H = states.shape
        weights = np.empty((B, H))
        for i in range(B):
            for h in range(H):
                weights[i, h] = discounts[h] * rewards[i, h] - baselines[h]
        return nb_suffix_scores(states, actions, weights, probs)

    @njit(cache=True)
    def nb_reinforce_batch(states, actions, rewards, probs, discounts, b):
        B, H = states.shape
        S, A = probs.shape
        out = np.zeros((B, S, A))
        for i in range(B):
            ret = 0.0
            for h in range(H):
                s = states[i, h]
                a = actions[i, h]
                for k in range(A):
                    e = 1.0 if k == a else 0.0
                    out[i, s, k] += e - probs[s, k]
                ret = ret + discounts[h] * rewards[i, h]
            scale = ret - b
            for s in range(S):
                for k in range(A):
                    out[i, s, k] = out[i, s, k] * scale
        return out

    @njit(cache=True)
    def nb_log_weights(states, actions, logp_old, logp_new):
        B, H = states.shape
        out = np.zeros(B)
        for i in range(B):
            acc = 0.0
            for h in range(H):
                s = states[i, h]
                a = actions[i, h]
                acc = acc + (logp_old[s, a] - logp_new[s, a])
            out[i] = acc
        return out

    numba_backend = SimpleNamespace(
        name="numba",
        sample_batch=nb_sample_batch,
        gpomdp_batch=nb_gpomdp_batch,
        reinforce_batch=nb_reinforce_batch,
        log_weights=nb_log_weights,
    )
else:  # pragma: no cover
    numba_backend = None


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Return the kernel set ``"numba"`` or ``"numpy"``; default follows the env flag."""
    if name is None:
        name = "numba" if USE_NUMBA else "numpy"
    if name == "numba":
        if numba_backend is None:
            raise RuntimeError("numba is not installed")
        return numba_backend
    if name == "numpy":
        return numpy_backend
    raise ValueError(f"unknown backend {name!r}")


BACKEND = get_backend()
mean_rows = np_mean_rows
