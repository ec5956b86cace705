"""Bound checks: every inequality that can be evaluated exactly on a small MDP.

Each check returns a :class:`BoundReport`. Reports carrying a ``formula`` name
can be re-derived from :mod:`stormpg.oracle.formulas` by :func:`double_entry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..estimators import enumerate_trajectories, gpomdp_batch, importance_weights, per_trajectory
from ..mdp import (
    TabularMdp,
    discounted_visitation,
    exact_return,
    mismatch_coefficient,
    optimal_policy,
    policy_evaluation,
    truncated_return,
)
from ..policy import M_G, M_H, action_probs, fisher_information, log_barrier, regularized_objective
from . import formulas
from .exact import (
    exact_policy_gradient,
    exact_regularized_gradient,
    exact_truncated_gradient,
    finite_diff_hessian,
    weight_variance,
)

PINV_CUTOFF = 1e-10


@dataclass
class BoundReport:
    check_name: str
    lhs: float
    rhs: float
    constituents: dict = field(default_factory=dict)
    instance_id: str = ""
    applicable: bool = True
    soft: bool = False
    formula: str | None = None

    @property
    def holds(self) -> bool:
        return bool(self.lhs <= self.rhs + 1e-9 * max(1.0, abs(self.rhs)))

    @property
    def slack(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def failed(self) -> bool:
        """A hard failure: applicable, not soft, and violated."""
        return self.applicable and not self.soft and not self.holds

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "instance_id": self.instance_id,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "holds": self.holds if self.applicable else None,
            "slack": self.slack,
            "constituents": {k: _jsonable(v) for k, v in self.constituents.items()},
            "applicable": self.applicable,
            "soft": self.soft,
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def double_entry(report: BoundReport, tol: float = 1e-12) -> bool:
    """Recompute ``report.rhs`` from its printed formula and compare."""
    if report.formula is None:
        return True
    values = {k: v for k, v in report.constituents.items() if isinstance(v, (int, float, np.floating, np.integer))}
    return formulas.agrees(formulas.evaluate(report.formula, values), float(report.rhs), tol)


# ---------------------------------------------------------------------------
# Estimator, truncation and weight checks


def truncation_bias_check(mdp: TabularMdp, theta, H: int, init=None, instance_id="") -> BoundReport:
    init = mdp.rho if init is None else init
    lhs = float(np.linalg.norm(exact_truncated_gradient(mdp, theta, init, H) - exact_policy_gradient(mdp, theta, init)))
    g = mdp.gamma
    rhs = M_G * ((H + 1) / (1 - g) + g / (1 - g) ** 2) * g**H
    return BoundReport(
        "truncation_bias", lhs, rhs, {"M_g": M_G, "H": H, "gamma": g}, instance_id, formula="truncation_bias_rhs"
    )


def unbiasedness_check(mdp, theta, H, kind="gpomdp", init=None, instance_id="") -> BoundReport:
    """Enumeration expectation of an estimator vs the exact truncated gradient (DP)."""
    init = mdp.rho if init is None else init
    batch, prob = enumerate_trajectories(mdp, theta, init, H)
    g = per_trajectory(batch, theta, mdp.gamma, kind)
    expectation = np.tensordot(prob, g, axes=1)
    err = float(np.max(np.abs(expectation - exact_truncated_gradient(mdp, theta, init, H))))
    return BoundReport(f"unbiasedness_{kind}", err, 1e-9, {"H": H, "n_trajectories": len(prob)}, instance_id)


def importance_identity_check(mdp, theta_old, theta_new, H, init=None, instance_id="") -> BoundReport:
    """``E_{theta_new}[w] = 1`` by enumeration; lhs is ``|E[w] - 1|``."""
    init = mdp.rho if init is None else init
    batch, prob = enumerate_trajectories(mdp, theta_new, init, H)
    w = importance_weights(batch, theta_old, theta_new)
    mean = float(prob @ w)
    second = float(prob @ w**2)
    return BoundReport(
        "weight_mean", abs(mean - 1.0), 1e-10, {"E_w": mean, "var_w": second - mean**2}, instance_id
    )


def importance_correction_check(mdp, theta_prev, theta, H, init=None, instance_id="") -> BoundReport:
    """``E_{theta}[g(.|theta) - w g(.|theta_prev)] = grad J^H(theta) - grad J^H(theta_prev)``."""
    init = mdp.rho if init is None else init
    batch, prob = enumerate_trajectories(mdp, theta, init, H)
    w = importance_weights(batch, theta_prev, theta)
    diff = gpomdp_batch(batch, theta, mdp.gamma) - w[:, None, None] * gpomdp_batch(batch, theta_prev, mdp.gamma)
    lhs_vec = np.tensordot(prob, diff, axes=1)
    target = exact_truncated_gradient(mdp, theta, init, H) - exact_truncated_gradient(mdp, theta_prev, init, H)
    err = float(np.max(np.abs(lhs_vec - target)))
    return BoundReport("importance_correction", err, 1e-9, {"H": H}, instance_id)


def weight_variance_check(mdp, theta_old, theta_new, H, W, init=None, method="enumerate", instance_id="") -> BoundReport:
    """``Var[w(tau | theta_old, theta_new)] <= C_w^2 ||theta_new - theta_old||^2``."""
    init = mdp.mu if init is None else init
    if method == "enumerate":
        batch, prob = enumerate_trajectories(mdp, theta_new, init, H)
        w = importance_weights(batch, theta_old, theta_new)
        var = float(prob @ w**2 - (prob @ w) ** 2)
    else:
        var = weight_variance(mdp, theta_old, theta_new, init, H)
    step_sq = float(np.sum((np.asarray(theta_new) - np.asarray(theta_old)) ** 2))
    rhs = H * (2 * H * M_G**2 + M_H) * (W + 1) * step_sq
    return BoundReport(
        "weight_variance",
        var,
        rhs,
        {"H": H, "M_g": M_G, "M_h": M_H, "W": float(W), "step_sq": step_sq},
        instance_id,
        formula="weight_var_rhs",
    )


def momentum_contraction_check(mdp, theta_prev, theta, u_prev, beta, H, init=None, instance_id="") -> BoundReport:
    """Enumerated ``E[e_t] = (1 - beta) e_{t-1}`` for one momentum step with ``B = 1``.

    ``u_prev`` is fixed, so ``E[e_{t-1}] = u_prev - grad J^H(theta_prev)``.
    """
    from ..optimizer import storm_direction

    init = mdp.rho if init is None else init
    batch, prob = enumerate_trajectories(mdp, theta, init, H)
    us = np.stack([storm_direction(u_prev, batch[i], theta, theta_prev, beta, mdp.gamma) for i in range(len(batch))])
    e_t = np.tensordot(prob, us, axes=1) - exact_truncated_gradient(mdp, theta, init, H)
    e_prev = u_prev - exact_truncated_gradient(mdp, theta_prev, init, H)
    err = float(np.max(np.abs(e_t - (1 - beta) * e_prev)))
    return BoundReport("momentum_contraction", err, 1e-9, {"beta": beta, "H": H}, instance_id)


# ---------------------------------------------------------------------------
# Compatible function approximation and the Fisher gradient-domination bound


@dataclass(frozen=True)
class CompatReport:
    u_star: np.ndarray
    eps_bias: float
    fisher_cond: float
    fit_residual: float
    mu_f_restricted: float


def compat_residual(mdp: TabularMdp, theta, u, weights) -> float:
    """``sum_{s,a} weights(s,a) (A(s,a) - (1-gamma) u^T score(s,a))^2``."""
    pi = action_probs(theta)
    adv = policy_evaluation(mdp, pi).adv
    u = np.asarray(u).reshape(pi.shape)
    fit = u - (pi * u).sum(axis=1, keepdims=True)
    return float(np.sum(weights * (adv - (1 - mdp.gamma) * fit) ** 2))


def _pinv_solve(F, g):
    eig, vec = np.linalg.eigh(F)
    keep = eig > PINV_CUTOFF
    return vec[:, keep] @ ((vec[:, keep].T @ g) / eig[keep])


def compatible_error(mdp: TabularMdp, theta, pi_star, init=None, fisher=None) -> CompatReport:
    """Minimum-norm compatible fit ``u* = F^+ grad J`` and its error under ``v_rho^{pi*}``."""
    init = mdp.rho if init is None else init
    theta = np.asarray(theta, dtype=np.float64)
    rep = fisher if fisher is not None else fisher_information(mdp, theta, init)
    grad = exact_policy_gradient(mdp, theta, init).reshape(-1)
    u_star = _pinv_solve(rep.fisher, grad).reshape(theta.shape)
    v_star = discounted_visitation(mdp, pi_star, init).state_action_dist
    v_theta = discounted_visitation(mdp, action_probs(theta), init).state_action_dist
    return CompatReport(
        u_star=u_star,
        eps_bias=compat_residual(mdp, theta, u_star, v_star),
        fisher_cond=rep.condition_number,
        fit_residual=compat_residual(mdp, theta, u_star, v_theta),
        mu_f_restricted=rep.mu_f_restricted,
    )


def lemma4_check(mdp, theta, pi_star, j_star=None, mu_threshold=1e-10, instance_id="") -> BoundReport:
    """``J* - J(theta) <= sqrt(eps_bias)/(1-gamma) + M_g/mu_F ||grad J||`` with restricted ``mu_F``."""
    j_star = exact_return(mdp, pi_star, mdp.rho) if j_star is None else j_star
    fisher = fisher_information(mdp, theta, mdp.rho)
    compat = compatible_error(mdp, theta, pi_star, mdp.rho, fisher)
    grad_norm = float(np.linalg.norm(exact_policy_gradient(mdp, theta, mdp.rho)))
    mu_f = fisher.mu_f_restricted
    lhs = j_star - exact_return(mdp, action_probs(theta), mdp.rho)
    applicable = mu_f > mu_threshold
    rhs = np.sqrt(compat.eps_bias) / (1 - mdp.gamma) + (M_G / mu_f * grad_norm if applicable else np.inf)
    return BoundReport(
        "fisher_gd",
        lhs,
        float(rhs),
        {"eps_bias": compat.eps_bias, "mu_f": mu_f, "grad_norm": grad_norm, "M_g": M_G, "gamma": mdp.gamma},
        instance_id,
        applicable=applicable,
        formula="fisher_gd_rhs" if applicable else None,
    )


# ---------------------------------------------------------------------------
# Soft-max gradient domination


def stationarity_threshold(mdp: TabularMdp, lam: float) -> float:
    return lam / (2 * mdp.n_states * mdp.n_actions)


def ascend_to_stationarity(mdp: TabularMdp, lam: float, theta0=None, tol=None, max_rounds=20):
    """Exact-gradient ascent (L-BFGS) on ``L_{lam,mu}`` until ``||grad|| <= tol``.

    ``tol`` defaults to a tenth of the stationarity threshold ``lam/(2|S||A|)``.
    Returns ``(theta, grad_norm)``.
    """
    S, A = mdp.n_states, mdp.n_actions
    tol = 0.1 * stationarity_threshold(mdp, lam) if tol is None else tol
    x = np.zeros(S * A) if theta0 is None else np.asarray(theta0, dtype=np.float64).reshape(-1)

    def neg(x):
        th = x.reshape(S, A)
        return -regularized_objective(mdp, th, lam, mdp.mu), -exact_regularized_gradient(mdp, th, lam, mdp.mu).reshape(-1)

    norm = np.inf
    for _ in range(max_rounds):
        res = optimize.minimize(
            neg, x, jac=True, method="L-BFGS-B",
            options={"gtol": tol / np.sqrt(S * A), "ftol": 0.0, "maxiter": 20000},
        )
        x = res.x
        norm = float(np.linalg.norm(res.jac))
        if norm <= tol:
            break
    return x.reshape(S, A), norm


def lemma1_check(mdp: TabularMdp, theta, lam: float, pi_star=None, instance_id="") -> BoundReport:
    """Soft-max gradient domination; not applicable unless ``||grad L_{lam,mu}|| <= lam/(2|S||A|)``."""
    if pi_star is None:
        pi_star, j_star = optimal_policy(mdp)
    else:
        j_star = exact_return(mdp, pi_star, mdp.rho)
    grad_norm = float(np.linalg.norm(exact_regularized_gradient(mdp, theta, lam, mdp.mu)))
    threshold = stationarity_threshold(mdp, lam)
    mismatch = mismatch_coefficient(mdp, pi_star)
    lhs = j_star - exact_return(mdp, action_probs(theta), mdp.rho)
    rhs = 2 * lam / (1 - mdp.gamma) * mismatch
    return BoundReport(
        "softmax_gd",
        lhs,
        rhs,
        {"lam": lam, "gamma": mdp.gamma, "mismatch": mismatch, "grad_norm": grad_norm, "eps_opt": threshold},
        instance_id,
        applicable=grad_norm <= threshold,
        formula="softmax_gd_rhs",
    )


def lemma2_lambda(mdp: TabularMdp, eps: float, pi_star=None) -> float:
    """``lam = eps (1 - gamma) / (4 * mismatch)``."""
    if pi_star is None:
        pi_star, _ = optimal_policy(mdp)
    return eps * (1 - mdp.gamma) / (4 * mismatch_coefficient(mdp, pi_star))


def lemma2_check(record, mdp: TabularMdp, lam: float, eps: float, pi_star=None, instance_id="") -> BoundReport:
    """Average-suboptimality bound over a trace, from exact per-iterate values.

    ``record`` needs columns ``eta``, ``J_exact`` and ``grad_norm_exact``
    (the exact ``||grad L_{lam,mu}||`` at each iterate).
    """
    if pi_star is None:
        pi_star, j_star = optimal_policy(mdp)
    else:
        j_star = exact_return(mdp, pi_star, mdp.rho)
    mismatch = mismatch_coefficient(mdp, pi_star)
    S, A = mdp.n_states, mdp.n_actions
    eta = np.asarray(record.column("eta"))
    J = np.asarray(record.column("J_exact"))
    gn = np.asarray(record.column("grad_norm_exact"))
    T = len(J)
    weighted_sq = float(np.sum(eta * gn**2))
    threshold = lam / (2 * S * A)
    n_bad = int(np.count_nonzero(gn >= threshold))
    expected_lam = eps * (1 - mdp.gamma) / (4 * mismatch)
    lhs = j_star - float(np.mean(J))
    rhs = mismatch**2 * 64 * S**2 * A**2 * weighted_sq / (eps**2 * T * eta[-1] * (1 - mdp.gamma) ** 3) + eps / 2
    return BoundReport(
        "avg_subopt",
        lhs,
        rhs,
        {
            "mismatch": mismatch, "n_states": S, "n_actions": A, "weighted_sq": weighted_sq, "eps": eps,
            "T": T, "eta_T": float(eta[-1]), "gamma": mdp.gamma, "n_bad": n_bad, "lam": lam,
        },
        instance_id,
        applicable=bool(abs(lam - expected_lam) <= 1e-9 * expected_lam),
        formula="avg_subopt_rhs",
    )


# ---------------------------------------------------------------------------
# Momentum budgets (soft: they bound expectations)


def _budget_common(bundle, T):
    return {
        "c": bundle.c, "sigma": bundle.sigma, "k": bundle.k, "m": bundle.m, "b_sq": bundle.b_sq,
        "gamma": bundle.gamma, "T": T,
    }


def budget_gammas(bundle, T: int, gap: float | None = None, variant: str = "s") -> dict:
    """Gamma_1..3 for the soft-max (``"s"``) or Fisher (``"f"``) budget."""
    c, sig2, k, m, b2, g = bundle.c, bundle.sigma**2, bundle.k, bundle.m, bundle.b_sq, bundle.gamma
    log_t = np.log(T + 2)
    if variant == "s":
        return {
            "Gamma1": c**2 * sig2 * k**3 * log_t / (44 * b2) + m ** (1 / 3) * sig2 / (88 * b2 * k) + gap / 22,
            "Gamma2": 48 * gap / 11,
            "Gamma3": sig2 * m ** (1 / 3) / (44 * b2 * k) + c**2 * sig2 * k**3 * log_t / (22 * b2),
        }
    return {
        "Gamma1": c**2 * sig2 * k**3 * log_t / (48 * b2) + m ** (1 / 3) * sig2 / (96 * b2 * k) + 1 / (22 * (1 - g)),
        "Gamma2": 48 / (11 * (1 - g)),
        "Gamma3": sig2 * m ** (1 / 3) / (44 * b2 * k**2) + c**2 * sig2 * k**3 * log_t / (22 * k * b2),
    }


def lemma3_budget(records, bundle, B: int, mdp: TabularMdp, instance_id="") -> BoundReport:
    """Seed-averaged ``sum_t eta_t ||grad L^H_{lam,mu}(theta_t)||^2`` vs ``Gamma2 + (Gamma1+Gamma3)/B``.

    The objective gap in Gamma1/Gamma2 is replaced by the upper bound
    ``1/(1-gamma) + lam log|A| + max(0, -L^H(theta_1))``.
    """
    records = list(records)
    applicable = all(r.mode == "theory" for r in records)
    sums = np.array([float(np.sum(np.asarray(r.column("eta")) * np.asarray(r.column("grad_norm_h_exact")) ** 2))
                     for r in records])
    T = min(len(r.column("eta")) for r in records)
    r0 = records[0]
    H, lam = r0.horizon, bundle.lam
    theta1 = r0.thetas[0]
    l_h_1 = truncated_return(mdp, action_probs(theta1), mdp.mu, H) + log_barrier(theta1, lam)[0]
    gap = 1 / (1 - mdp.gamma) + lam * np.log(mdp.n_actions) + max(0.0, -l_h_1)
    gam = budget_gammas(bundle, T, gap, "s")
    rhs = gam["Gamma2"] + (gam["Gamma1"] + gam["Gamma3"]) / B
    stderr = float(np.std(sums, ddof=1) / np.sqrt(len(sums))) if len(sums) > 1 else float("nan")
    return BoundReport(
        "softmax_budget",
        float(np.mean(sums)),
        rhs,
        {**gam, "B": B, "gap": gap, "stderr": stderr, "n_seeds": len(sums), **_budget_common(bundle, T)},
        instance_id,
        applicable=applicable,
        soft=True,
        formula="budget_rhs",
    )


def lemma5_budget(records, bundle, B: int, instance_id="") -> BoundReport:
    """Fisher-variant stationarity bound on ``(1/T) sum_t E||grad J^H(theta_t)||``."""
    records = list(records)
    applicable = all(r.mode == "theory" for r in records)
    T = min(len(r.column("eta")) for r in records)
    means = np.array([float(np.mean(r.column("grad_norm_h_exact")[:T])) for r in records])
    gam = budget_gammas(bundle, T, variant="f")
    k, m = bundle.k, bundle.m
    rhs = np.sqrt(gam["Gamma2"] / k + (gam["Gamma1"] + gam["Gamma3"]) / (k * B)) * (m ** (1 / 6) / np.sqrt(T) + T ** (-1 / 3))
    return BoundReport(
        "fisher_budget", float(np.mean(means)), float(rhs), {**gam, "B": B, **_budget_common(bundle, T)},
        instance_id, applicable=applicable, soft=True,
    )


# ---------------------------------------------------------------------------
# Smoothness and the ascent descent-lemma


def descent_lemma_check(f, grad_f, x, u, eta, L, instance_id="") -> BoundReport:
    """``f(x) + eta/4 ||u||^2 - eta/2 ||u - grad f(x)||^2 <= f(x + eta u)`` for ``0 < eta <= 1/(2L)``."""
    if not 0 < eta <= 1 / (2 * L):
        raise ValueError(f"eta={eta} outside (0, 1/(2L)] with L={L}")
    x, u = np.asarray(x, dtype=np.float64), np.asarray(u, dtype=np.float64)
    fx = float(f(x))
    u_sq = float(u @ u)
    err = u - grad_f(x)
    err_sq = float(err @ err)
    lhs = fx + eta / 4 * u_sq - eta / 2 * err_sq
    return BoundReport(
        "descent_lemma",
        lhs,
        float(f(x + eta * u)),
        {"f_x": fx, "eta": eta, "u_sq": u_sq, "err_sq": err_sq, "L": L},
        instance_id,
    )


def smoothness_constant(gamma, m_g=M_G, m_h=M_H) -> float:
    return 2 * m_g**2 / (1 - gamma) ** 3 + m_h / (1 - gamma) ** 2


def smoothness_check(mdp: TabularMdp, theta_samples, lam: float = 0.0, init=None, instance_id="") -> BoundReport:
    """Largest finite-difference Hessian spectral norm of ``J`` vs ``2 M_g^2/(1-gamma)^3 + M_h/(1-gamma)^2``.

    Also records the Hessian norm of ``L_{lam,mu}`` against ``8/(1-gamma)^3 + 2 lam/|S|``.
    """
    init = mdp.rho if init is None else init
    worst_j = 0.0
    worst_l = 0.0
    for theta in theta_samples:
        hj = finite_diff_hessian(lambda th: exact_policy_gradient(mdp, th, init), theta)
        worst_j = max(worst_j, float(np.linalg.norm(hj, 2)))
        hl = finite_diff_hessian(lambda th: exact_regularized_gradient(mdp, th, lam, mdp.mu), theta)
        worst_l = max(worst_l, float(np.linalg.norm(hl, 2)))
    barrier_bound = 8 / (1 - mdp.gamma) ** 3 + 2 * lam / mdp.n_states
    return BoundReport(
        "smoothness",
        worst_j,
        smoothness_constant(mdp.gamma),
        {
            "M_g": M_G, "M_h": M_H, "gamma": mdp.gamma, "n_samples": len(theta_samples),
            "hess_l_norm": worst_l, "barrier_bound": barrier_bound, "barrier_holds": worst_l <= barrier_bound,
        },
        instance_id,
        formula="l_smooth",
    )
