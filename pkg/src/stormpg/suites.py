"""Verification suites behind ``stormpg verify``.

Each suite returns a list of :class:`~stormpg.oracle.checks.BoundReport`.
Exact-equality checks are expressed as reports with ``rhs`` set to the
tolerance, so every result shares one JSON shape.
"""

from __future__ import annotations

import math

import numpy as np

from .estimators import enumerate_trajectories, importance_weights, per_trajectory, sample_batch
from .mdp import TabularMdp, bundled_mdp, exact_return, optimal_policy, random_mdp
from .optimizer import RunConfig, derive_constants, run_storm_pg_f, run_storm_pg_s, schedule
from .oracle import checks, formulas
from .oracle.checks import BoundReport
from .oracle.exact import exact_policy_gradient, exact_truncated_gradient, finite_diff_gradient
from .policy import M_G, M_H, action_probs

SUITES = ("estimators", "weights", "gradients", "bounds", "constants")

# practical schedule used by suites that need optimizer-produced iterates
PRACTICAL = {"k": 2.0, "c": 0.5, "m": 7.0}


def _rng(tag: int):
    return np.random.default_rng(20240 + tag)


def _enum_horizon(mdp: TabularMdp, preferred: int, budget: int = 20_000) -> int:
    sa = mdp.n_states * mdp.n_actions
    h = preferred
    while h > 1 and sa**h > budget:
        h -= 1
    return h


def _randoms(n, tag, n_states=3, n_actions=2, gamma=0.8):
    rng = _rng(tag)
    return [random_mdp(n_states, n_actions, gamma, rng) for _ in range(n)]


def _equality(name, err, tol, instance_id, **constituents) -> BoundReport:
    return BoundReport(name, float(err), float(tol), constituents, instance_id)


# ---------------------------------------------------------------------------


def estimators_suite(mdp: TabularMdp, scale: str = "small") -> list:
    reports = []
    H = _enum_horizon(mdp, 3)
    instances = [("given", mdp)] + ([] if scale == "small" else [(f"rand{i}", m) for i, m in enumerate(_randoms(3, 1))])
    rng = _rng(2)
    for tag, m in instances:
        theta = rng.normal(size=(m.n_states, m.n_actions))
        for kind in ("gpomdp", "pgt", "reinforce"):
            reports.append(checks.unbiasedness_check(m, theta, H, kind, instance_id=f"{tag}/H={H}"))
        theta_prev = theta + 0.3 * rng.normal(size=theta.shape)
        reports.append(checks.importance_correction_check(m, theta_prev, theta, H, instance_id=f"{tag}/H={H}"))

    n_traj = 1000 if scale == "small" else 10_000
    n_mdps = 4 if scale == "small" else 20
    worst = 0.0
    mismatches = 0
    for i, m in enumerate(_randoms(n_mdps, 3, gamma=0.9)):
        theta = rng.normal(size=(m.n_states, m.n_actions))
        batch = sample_batch(m, theta, m.rho, 20, n_traj // n_mdps, seed=i, t=1)
        g_gpomdp = per_trajectory(batch, theta, m.gamma, "gpomdp")
        g_pgt = per_trajectory(batch, theta, m.gamma, "pgt")
        mismatches += int(np.count_nonzero(g_gpomdp != g_pgt))
        worst = max(worst, float(np.max(np.linalg.norm(g_gpomdp.reshape(len(batch), -1), axis=1))))
    reports.append(_equality("pgt_equals_gpomdp", mismatches, 0, f"{n_traj} trajectories", n_traj=n_traj))
    reports.append(BoundReport(
        "estimator_norm", worst, M_G / (1 - 0.9) ** 2, {"M_g": M_G, "gamma": 0.9, "n_traj": n_traj},
        f"{n_mdps} random MDPs", formula="g_bound",
    ))
    return reports


def optimizer_pairs(mdp: TabularMdp, n_pairs: int, H: int, seed: int = 0):
    """Consecutive ``(theta_{t-1}, theta_t)`` pairs from a practical soft-max run."""
    cfg = RunConfig.from_dict({
        "algorithm": "storm_s", "T": n_pairs + 1, "B": 8, "H": H, "lambda": 0.01,
        "mode": "practical", "practical": PRACTICAL, "seed": seed,
    })
    rec = run_storm_pg_s(mdp, cfg)
    return list(zip(rec.thetas[:-1], rec.thetas[1:]))


def weights_suite(mdp: TabularMdp, scale: str = "small") -> list:
    reports = []
    H = _enum_horizon(mdp, 3)
    n_pairs = 20 if scale == "small" else 100
    pairs = optimizer_pairs(mdp, n_pairs, H)
    variances = []
    for old, new in pairs:
        batch, prob = enumerate_trajectories(mdp, new, mdp.mu, H)
        w = importance_weights(batch, old, new)
        variances.append(float(prob @ w**2 - (prob @ w) ** 2))
    W = max(variances)
    for i, (old, new) in enumerate(pairs):
        reports.append(checks.importance_identity_check(mdp, old, new, H, mdp.mu, instance_id=f"pair{i}"))
        reports.append(checks.weight_variance_check(mdp, old, new, H, W, mdp.mu, instance_id=f"pair{i}"))

    H2 = _enum_horizon(mdp, 2)
    rng = _rng(4)
    for i in range(3 if scale == "small" else 10):
        theta_prev = rng.normal(size=(mdp.n_states, mdp.n_actions))
        theta = theta_prev + 0.5 * rng.normal(size=theta_prev.shape)
        u_prev = rng.normal(size=theta.shape)
        beta = float(rng.uniform(0.05, 1.0))
        reports.append(checks.momentum_contraction_check(mdp, theta_prev, theta, u_prev, beta, H2, instance_id=f"draw{i}/H={H2}"))
    return reports


def gradients_suite(mdp: TabularMdp, scale: str = "small") -> list:
    reports = []
    n_mdps, n_theta = (2, 4) if scale == "small" else (5, 20)
    rng = _rng(5)
    worst = 0.0
    for j, m in enumerate([mdp] + _randoms(n_mdps, 6, 4, 3)):
        for _ in range(n_theta):
            theta = rng.normal(size=(m.n_states, m.n_actions))
            g = exact_policy_gradient(m, theta, m.rho)
            fd = finite_diff_gradient(lambda th: exact_return(m, action_probs(th), m.rho), theta)
            worst = max(worst, float(np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-300)))
    reports.append(_equality("fd_gradient", worst, 1e-6, f"{n_mdps + 1} MDPs x {n_theta} thetas"))

    H = _enum_horizon(mdp, 3)
    theta = rng.normal(size=(mdp.n_states, mdp.n_actions))
    err = float(np.max(np.abs(exact_truncated_gradient(mdp, theta, mdp.rho, H, "dp")
                              - exact_truncated_gradient(mdp, theta, mdp.rho, H, "enumerate"))))
    reports.append(_equality("dp_vs_enumeration", err, 1e-9, f"given/H={H}"))

    n_triples = 10 if scale == "small" else 50
    trng = _rng(7)
    for i in range(n_triples):
        m = random_mdp(int(trng.integers(2, 5)), int(trng.integers(2, 4)), float(trng.uniform(0.5, 0.95)), trng)
        theta = trng.normal(size=(m.n_states, m.n_actions))
        reports.append(checks.truncation_bias_check(m, theta, int(trng.integers(1, 40)), instance_id=f"triple{i}"))

    n_m, n_t = (2, 4) if scale == "small" else (5, 20)
    for j, m in enumerate(_randoms(n_m, 8, 3, 3)):
        pi_star, _ = optimal_policy(m)
        worst_bias = max(
            checks.compatible_error(m, rng.normal(size=(3, 3)), pi_star).eps_bias for _ in range(n_t)
        )
        reports.append(_equality("softmax_eps_bias", worst_bias, 1e-8, f"rand{j}"))

    n_s = 4 if scale == "small" else 20
    for gamma in (0.8, 0.9):
        srng = _rng(9 + int(gamma * 10))
        ms = [random_mdp(3, 2, gamma, srng) for _ in range(2)]
        for j, m in enumerate(ms):
            samples = [srng.normal(size=(3, 2)) for _ in range(n_s // 2)]
            reports.append(checks.smoothness_check(m, samples, lam=0.1, instance_id=f"gamma={gamma}/rand{j}"))
    return reports


def bounds_suite(mdp: TabularMdp, scale: str = "small") -> list:
    reports = []
    n_l1 = 2 if scale == "small" else 5
    for j, m in enumerate(_randoms(n_l1, 10, 3, 2)):
        lam = 0.1
        theta, _ = checks.ascend_to_stationarity(m, lam)
        reports.append(checks.lemma1_check(m, theta, lam, instance_id=f"rand{j}"))

    bench = bundled_mdp("benchmark")
    eps = 0.5
    lam = checks.lemma2_lambda(bench, eps)
    T = 60 if scale == "small" else 300
    n_seeds = 2 if scale == "small" else 10
    for seed in range(n_seeds):
        rec = run_storm_pg_s(bench, RunConfig.from_dict({
            "algorithm": "storm_s", "T": T, "B": 20, "lambda": "auto", "epsilon": eps,
            "mode": "practical", "practical": PRACTICAL, "seed": seed,
        }))
        reports.append(checks.lemma2_check(rec, bench, lam, eps, instance_id=f"benchmark/seed{seed}"))

    T_f = 30 if scale == "small" else 100
    for seed in range(n_seeds):
        rec = run_storm_pg_f(bench, RunConfig.from_dict({
            "algorithm": "storm_f", "T": T_f, "B": 20, "mode": "practical", "practical": PRACTICAL, "seed": seed,
        }))
        lhs, rhs, mu = rec.column("fisher_gd_lhs"), rec.column("fisher_gd_rhs"), rec.column("mu_f_restricted")
        ok = mu > 1e-6
        viol = int(np.count_nonzero(lhs[ok] > rhs[ok] + 1e-9 * np.maximum(1, np.abs(rhs[ok]))))
        reports.append(_equality("fisher_gd_trace", viol, 0, f"benchmark/seed{seed}",
                                 n_rows=int(ok.size), n_skipped=int(np.count_nonzero(~ok))))

    rng = _rng(11)
    n_q = 100 if scale == "small" else 1000
    viol = 0
    for _ in range(n_q):
        d = int(rng.integers(1, 6))
        q = rng.normal(size=(d, d))
        Q = q @ q.T + 1e-3 * np.eye(d)
        L = float(np.linalg.eigvalsh(Q).max())
        x, u = rng.normal(size=d), rng.normal(size=d)
        eta = float(rng.uniform(1e-6, 1.0)) / (2 * L)
        rep = checks.descent_lemma_check(lambda z: -0.5 * z @ Q @ z, lambda z: -Q @ z, x, u, eta, L)
        viol += int(not rep.holds)
    reports.append(_equality("descent_lemma", viol, 0, f"{n_q} quadratics"))

    n_seeds3 = 3 if scale == "small" else 10
    recs = []
    for seed in range(n_seeds3):
        recs.append(run_storm_pg_s(bench, RunConfig.from_dict({
            "algorithm": "storm_s", "T": 20, "B": 10, "lambda": 0.01, "mode": "theory", "seed": seed,
        })))
    reports.append(checks.lemma3_budget(recs, recs[0].bundle, 10, bench, instance_id="benchmark/theory"))
    return reports


CONSTANT_GRID = [
    dict(gamma=0.9, H=5, W=1.0, lam=0.0, k=1.0),
    dict(gamma=0.8, H=31, W=1.0, lam=0.01, k=1.0),
    dict(gamma=0.5, H=3, W=0.0, lam=0.5, k=2.0),
    dict(gamma=0.99, H=100, W=4.0, lam=0.1, k=0.3),
]


def constants_double_entry(bundle) -> list:
    values = {
        "M_g": bundle.m_g, "M_h": bundle.m_h, "gamma": bundle.gamma, "H": bundle.horizon, "W": bundle.w_bound,
        "lam": bundle.lam, "k": bundle.k, "L_lambda": bundle.l_lambda, "b_sq": bundle.b_sq, "c": bundle.c,
        "m": bundle.m,
    }
    out = []
    for name in formulas.CONSTANT_FORMULAS:
        fval = getattr(bundle, name)
        sval = formulas.evaluate(name, values)
        rel = abs(sval - fval) / max(1.0, abs(fval), abs(sval))
        out.append(_equality(f"double_entry:{name}", rel, 1e-12, _bundle_id(bundle)))
    return out


def _bundle_id(b) -> str:
    return f"gamma={b.gamma},H={b.horizon},W={b.w_bound},lam={b.lam},k={b.k}"


def constants_suite(mdp: TabularMdp | None = None, scale: str = "small") -> list:
    reports = []
    n_t = 1000 if scale == "small" else 100_000
    for params in CONSTANT_GRID:
        b = derive_constants(M_G, M_H, params["gamma"], params["H"], params["W"], params["lam"], params["k"])
        reports.extend(constants_double_entry(b))
        bad = 0
        # m ~ 1e18 absorbs t in float64, so eta is non-increasing rather than strictly decreasing
        prev = math.inf
        for t in range(1, n_t + 1):
            eta, beta = schedule(t, b)
            bad += int(not (eta <= (1 + 1e-12) / (2 * b.l_lambda) and 0 < beta <= 1 + 1e-12 and eta <= prev))
            prev = eta
        reports.append(_equality("schedule_invariants", bad, 0, _bundle_id(b), n_t=n_t))
    return reports


def attach_double_entry(reports: list) -> list:
    """Append a double-entry report for every report that names a formula."""
    extra = []
    for r in reports:
        if r.formula is not None and r.applicable:
            ok = checks.double_entry(r)
            extra.append(_equality(f"double_entry:{r.check_name}", 0 if ok else 1, 0, r.instance_id))
    return reports + extra


def run_suite(name: str, mdp: TabularMdp | None = None, scale: str = "small") -> list:
    mdp = bundled_mdp("two_state") if mdp is None else mdp
    names = SUITES if name == "all" else (name,)
    reports = []
    for n in names:
        fn = {
            "estimators": estimators_suite, "weights": weights_suite, "gradients": gradients_suite,
            "bounds": bounds_suite, "constants": constants_suite,
        }.get(n)
        if fn is None:
            raise ValueError(f"unknown suite {n!r}; choose from {', '.join(SUITES + ('all',))}")
        reports.extend(fn(mdp, scale))
    return attach_double_entry(reports)
