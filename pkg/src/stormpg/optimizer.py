"""STORM momentum policy gradient: constants, schedules, update rule and run loops."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .estimators import TrajectoryBatch, importance_weights, per_trajectory, sample_batch, substream
from .mdp import TabularMdp, exact_return, mismatch_coefficient, optimal_policy
from .oracle.checks import lemma2_lambda, lemma4_check
from .oracle.exact import exact_policy_gradient, exact_truncated_gradient, weight_variance
from .policy import M_G, M_H, action_probs, log_barrier

DIVERGENCE_LIMIT = 1e6

CSV_COLUMNS = [
    "t", "eta", "beta", "J_exact", "L_lambda_exact", "grad_norm_exact",
    "u_norm", "err_norm_exact", "max_var_w", "trajectories",
]
EXTRA_COLUMNS = ["grad_norm_h_exact"]
FISHER_COLUMNS = ["mu_f_restricted", "eps_bias", "fisher_gd_lhs", "fisher_gd_rhs"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConstantsBundle:
    m_g: float
    m_h: float
    gamma: float
    horizon: int
    w_bound: float
    lam: float
    k: float
    l_g: float
    g_bound: float
    sigma: float
    l_smooth: float
    l_lambda: float
    c_w: float
    b_sq: float
    c: float
    m: float
    eta0: float

    def as_dict(self) -> dict:
        return asdict(self)


def derive_constants(m_g=M_G, m_h=M_H, gamma=0.9, H=1, W=1.0, lam=0.0, k=1.0) -> ConstantsBundle:
    """Theory constants of the momentum analysis.

    Pass ``lam=0`` for the Fisher-non-degenerate variant, whose schedule
    uses ``L`` where the soft-max variant uses ``L + lam``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    for name, val in (("m_g", m_g), ("m_h", m_h), ("H", H), ("k", k)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if W < 0 or lam < 0:
        raise ValueError("W and lambda must be non-negative")
    l_g = m_h / (1 - gamma) ** 2
    g_bound = m_g / (1 - gamma) ** 2
    l_smooth = 2 * m_g**2 / (1 - gamma) ** 3 + m_h / (1 - gamma) ** 2
    l_lambda = l_smooth + lam
    c_w = math.sqrt(H * (2 * H * m_g**2 + m_h) * (W + 1))
    b_sq = l_g**2 + g_bound**2 * c_w**2
    c = 1 / (3 * k**3 * l_lambda) + 96 * b_sq
    m = max(2.0, (2 * l_lambda * k) ** 3, (c * k / (2 * l_lambda)) ** 3)
    eta0 = k / m ** (1 / 3)
    bundle = ConstantsBundle(
        m_g=m_g, m_h=m_h, gamma=gamma, horizon=int(H), w_bound=W, lam=lam, k=k,
        l_g=l_g, g_bound=g_bound, sigma=g_bound, l_smooth=l_smooth, l_lambda=l_lambda,
        c_w=c_w, b_sq=b_sq, c=c, m=m, eta0=eta0,
    )
    # cube roots lose a few ulps
    if eta0 > (1 + 1e-12) / (2 * l_lambda) or c * eta0**2 > 1 + 1e-12:
        raise AssertionError(f"internal error: derived constants violate their invariants: {bundle}")
    return bundle


def schedule(t: int, params):
    """``eta_t = k/(m+t)^{1/3}`` and ``beta_{t+1} = c eta_t^2``.

    ``params`` is a :class:`ConstantsBundle` or a mapping with keys ``k, m, c``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if isinstance(params, dict):
        k, m, c = params["k"], params["m"], params["c"]
    else:
        k, m, c = params.k, params.m, params.c
    eta = k / (m + t) ** (1 / 3)
    return eta, c * eta**2


@dataclass
class MomentumState:
    u: np.ndarray
    t: int
    eta: float
    beta: float


def storm_direction(u_prev, batch, theta, theta_prev, beta, gamma, clip=None, kind="gpomdp", g_now=None):
    """One momentum recursion step for a batch drawn under ``theta``.

    ``u = beta*mean(g) + (1-beta)*(u_prev + mean(g - w*g_prev))`` with
    ``w = p(tau|theta_prev)/p(tau|theta)``. ``beta == 1`` returns ``mean(g)``
    without touching the weights.
    """
    if not isinstance(batch, TrajectoryBatch):
        batch = TrajectoryBatch.from_trajectories([batch])
    g = per_trajectory(batch, theta, gamma, kind) if g_now is None else g_now
    g_mean = kernels.mean_rows(g)
    if beta == 1.0:
        return g_mean
    g_prev = per_trajectory(batch, theta_prev, gamma, kind)
    w = importance_weights(batch, theta_prev, theta, clip)
    corr = kernels.mean_rows(g - w[:, None, None] * g_prev)
    return beta * g_mean + (1 - beta) * (u_prev + corr)


def storm_update(state: MomentumState, batch, theta_t, theta_prev, beta_t, gamma, clip=None, kind="gpomdp"):
    u = storm_direction(state.u, batch, theta_t, theta_prev, beta_t, gamma, clip, kind)
    return MomentumState(u=u, t=state.t + 1, eta=state.eta, beta=beta_t)


# ---------------------------------------------------------------------------
# Configuration


def auto_horizon(gamma: float, tol: float = 1e-3) -> int:
    """Smallest ``H`` with ``gamma^H/(1-gamma) <= tol/(1-gamma)``."""
    return max(1, int(math.ceil(math.log(tol) / math.log(gamma))))


@dataclass
class RunConfig:
    algorithm: str = "storm_s"
    T: int = 100
    B: int = 10
    H: int | str = "auto"
    lam: float | str = 0.0
    k: float = 1.0
    mode: str = "practical"
    practical: dict = field(default_factory=dict)
    W: float = 1.0
    clip: tuple | None = None
    seed: int = 0
    estimator: str = "gpomdp"
    epsilon: float | None = None
    vanilla_base: str = "storm_s"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown config field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.algorithm not in ("storm_s", "storm_f", "vanilla"):
            raise ConfigError(f"algorithm: unknown value {self.algorithm!r}")
        if self.vanilla_base not in ("storm_s", "storm_f"):
            raise ConfigError(f"vanilla_base: unknown value {self.vanilla_base!r}")
        for name in ("T", "B"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.H != "auto" and (not isinstance(self.H, int) or self.H < 1):
            raise ConfigError(f"H: must be 'auto' or a positive integer, got {self.H!r}")
        if self.lam == "auto":
            if self.epsilon is None or self.epsilon <= 0:
                raise ConfigError("epsilon: required (> 0) when lambda is 'auto'")
        elif not isinstance(self.lam, (int, float)) or self.lam < 0:
            raise ConfigError(f"lambda: must be >= 0 or 'auto', got {self.lam!r}")
        if self.mode not in ("theory", "practical"):
            raise ConfigError(f"mode: must be 'theory' or 'practical', got {self.mode!r}")
        if self.mode == "practical":
            for key in ("k", "c", "m"):
                if key not in self.practical:
                    raise ConfigError(f"practical.{key}: required in practical mode")
            p = self.practical
            if p["k"] <= 0 or p["c"] <= 0 or p["m"] < 0:
                raise ConfigError("practical: k and c must be positive, m non-negative")
            if "beta" in p and not 0 < p["beta"] <= 1:
                raise ConfigError("practical.beta: must lie in (0, 1]")
            if p["c"] * (p["k"] / (p["m"] + 1) ** (1 / 3)) ** 2 > 1:
                raise ConfigError("practical.c: c * eta_1^2 exceeds 1, so beta would leave (0, 1]")
        if self.k <= 0:
            raise ConfigError(f"k: must be positive, got {self.k!r}")
        if self.W < 0:
            raise ConfigError(f"W: must be >= 0, got {self.W!r}")
        if self.clip is not None:
            if len(self.clip) != 2 or not 0 <= self.clip[0] <= self.clip[1]:
                raise ConfigError(f"clip: expected [lo, hi] with 0 <= lo <= hi, got {self.clip!r}")
            self.clip = (float(self.clip[0]), float(self.clip[1]))
        if self.estimator not in ("gpomdp", "pgt", "reinforce"):
            raise ConfigError(f"estimator: unknown value {self.estimator!r}")

    def resolved_lambda(self, mdp: TabularMdp) -> float:
        if self.lam == "auto":
            return lemma2_lambda(mdp, self.epsilon)
        return float(self.lam)


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    mode: str
    horizon: int
    batch_size: int
    lam: float
    columns: dict
    thetas: np.ndarray
    xi_index: int
    bundle: ConstantsBundle
    schedule_params: dict
    j_star: float

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        return len(self.columns["t"])

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def theta_xi(self) -> np.ndarray:
        return self.thetas[self.xi_index]

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(names)
            for i in range(self.n_rows):
                w.writerow([_fmt(self.columns[n][i]) for n in names])


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def read_csv(path) -> dict:
    """Columns of a run CSV as float arrays (``t`` and ``trajectories`` as ints)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        cols[name] = np.array([int(v) for v in vals]) if name in ("t", "trajectories") else np.array([float(v) for v in vals])
    return cols


# ---------------------------------------------------------------------------
# Run loops


def _schedule_params(cfg: RunConfig, bundle: ConstantsBundle) -> dict:
    if cfg.mode == "theory":
        return {"k": bundle.k, "c": bundle.c, "m": bundle.m}
    p = {"k": float(cfg.practical["k"]), "c": float(cfg.practical["c"]), "m": float(cfg.practical["m"])}
    if "beta" in cfg.practical:
        p["beta"] = float(cfg.practical["beta"])
    return p


def _run(mdp: TabularMdp, cfg: RunConfig, variant: str, momentum: bool) -> RunRecord:
    soft = variant == "s"
    if soft and np.any(mdp.mu <= 0):
        raise ConfigError("mdp.mu: must be strictly positive for soft-max runs")
    init = mdp.mu if soft else mdp.rho
    lam = cfg.resolved_lambda(mdp) if soft else 0.0
    H = auto_horizon(mdp.gamma) if cfg.H == "auto" else int(cfg.H)
    bundle = derive_constants(M_G, M_H, mdp.gamma, H, cfg.W, lam, cfg.k)
    sp = _schedule_params(cfg, bundle)
    pi_star, j_star = optimal_policy(mdp)
    S, A = mdp.n_states, mdp.n_actions
    names = CSV_COLUMNS + EXTRA_COLUMNS + ([] if soft else FISHER_COLUMNS)
    cols = {n: [] for n in names}
    thetas = []

    theta = np.zeros((S, A))
    theta_prev = None
    u = None
    beta_t = 1.0
    max_var = 0.0
    for t in range(1, cfg.T + 1):
        thetas.append(theta.copy())
        batch = sample_batch(mdp, theta, init, H, cfg.B, cfg.seed, t)
        g = per_trajectory(batch, theta, mdp.gamma, cfg.estimator)
        eta, beta_next = schedule(t, sp)
        if "beta" in sp:
            beta_next = sp["beta"]
        if t == 1 or not momentum:
            u = kernels.mean_rows(g)
        else:
            u = storm_direction(u, batch, theta, theta_prev, beta_t, mdp.gamma, cfg.clip, cfg.estimator, g_now=g)
        if theta_prev is not None:
            max_var = max(max_var, weight_variance(mdp, theta_prev, theta, init, H))

        pi = action_probs(theta)
        barrier_val, barrier_grad = log_barrier(theta, lam)
        grad_inf = exact_policy_gradient(mdp, theta, init) + barrier_grad
        grad_h = exact_truncated_gradient(mdp, theta, init, H)
        row = {
            "t": t,
            "eta": eta,
            "beta": beta_t if (momentum and t > 1) else 1.0,
            "J_exact": exact_return(mdp, pi, mdp.rho),
            "L_lambda_exact": exact_return(mdp, pi, init) + barrier_val,
            "grad_norm_exact": float(np.linalg.norm(grad_inf)),
            "u_norm": float(np.linalg.norm(u)),
            "err_norm_exact": float(np.linalg.norm(u - grad_h)),
            "max_var_w": max_var,
            "trajectories": cfg.B * t,
            "grad_norm_h_exact": float(np.linalg.norm(grad_h + barrier_grad)),
        }
        if not soft:
            rep = lemma4_check(mdp, theta, pi_star, j_star)
            row.update(
                mu_f_restricted=rep.constituents["mu_f"],
                eps_bias=rep.constituents["eps_bias"],
                fisher_gd_lhs=rep.lhs,
                fisher_gd_rhs=rep.rhs,
            )
        for n in names:
            cols[n].append(row[n])

        if t < cfg.T:
            step = u + barrier_grad if soft else u
            theta_prev, theta = theta, theta + eta * step
            if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"|theta|_inf exceeded {DIVERGENCE_LIMIT:g} at t={t + 1} (eta={eta:.3g}, |u|={np.linalg.norm(u):.3g})"
                )
        beta_t = beta_next

    xi = int(substream(cfg.seed, 0, 0).integers(cfg.T))
    columns = {n: (np.array(v, dtype=np.int64) if n in ("t", "trajectories") else np.array(v, dtype=np.float64))
               for n, v in cols.items()}
    return RunRecord(
        algorithm=cfg.algorithm, seed=cfg.seed, mode=cfg.mode, horizon=H, batch_size=cfg.B, lam=lam,
        columns=columns, thetas=np.array(thetas), xi_index=xi, bundle=bundle, schedule_params=sp, j_star=j_star,
    )


def run_storm_pg_s(mdp: TabularMdp, cfg: RunConfig) -> RunRecord:
    """Momentum PG with soft-max + log-barrier; batches drawn from ``mdp.mu``."""
    return _run(mdp, cfg, "s", momentum=True)


def run_storm_pg_f(mdp: TabularMdp, cfg: RunConfig) -> RunRecord:
    """Momentum PG without the barrier; batches drawn from ``mdp.rho``, Fisher diagnostics logged."""
    return _run(mdp, cfg, "f", momentum=True)


def vanilla_pg_baseline(mdp: TabularMdp, cfg: RunConfig) -> RunRecord:
    """Same loop as the ``cfg.vanilla_base`` variant with ``u_t`` = batch mean."""
    return _run(mdp, cfg, "s" if cfg.vanilla_base == "storm_s" else "f", momentum=False)


def run(mdp: TabularMdp, cfg: RunConfig) -> RunRecord:
    return {"storm_s": run_storm_pg_s, "storm_f": run_storm_pg_f, "vanilla": vanilla_pg_baseline}[cfg.algorithm](mdp, cfg)


def theory_reference(mdp: TabularMdp, W: float, eps: float, mu_f: float | None = None) -> dict:
    """Reference ``H`` and ``T`` sample-complexity formulas evaluated with every hidden constant set to 1.

    Logged for comparison only.
    """
    pi_star, _ = optimal_policy(mdp)
    g = mdp.gamma
    S, A = mdp.n_states, mdp.n_actions
    mm = mismatch_coefficient(mdp, pi_star)
    c_inf = mm**2 * S**2 * A**2 * (1 + W)
    out = {
        "softmax_H": math.log((1 - g) * eps / (S * A) / mm) / math.log(g),
        "softmax_T": c_inf**1.5 / (eps**4.5 * (1 - g) ** 16.5) + c_inf * W / (eps**3 * (1 - g) ** 12),
        "mismatch": mm,
    }
    if mu_f is not None and mu_f > 0:
        out["fisher_H"] = math.log((1 - g) * mu_f * eps) / math.log(g)
        out["fisher_T"] = (
            (1 + W) ** 1.5 / (eps**3 * mu_f**3 * (1 - g) ** 12)
            + (1 + W) / (eps**2 * mu_f**2 * (1 - g) ** 11)
            + W * (1 + W) / (eps**2 * mu_f**2 * (1 - g) ** 9)
        )
    return out
