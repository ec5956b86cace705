"""Printed formulas for every derived constant and bound right-hand side.

These strings are what the ``constants`` command prints, and they are the
second, independently evaluated path for double-entry checks: each is parsed
with sympy and evaluated at 30 significant digits, then compared to the value
produced by the float code path.
"""

from __future__ import annotations

import math

import sympy

CONSTANT_FORMULAS = {
    "l_g": "M_h/(1-gamma)**2",
    "g_bound": "M_g/(1-gamma)**2",
    "sigma": "M_g/(1-gamma)**2",
    "l_smooth": "2*M_g**2/(1-gamma)**3 + M_h/(1-gamma)**2",
    "l_lambda": "2*M_g**2/(1-gamma)**3 + M_h/(1-gamma)**2 + lam",
    "c_w": "sqrt(H*(2*H*M_g**2 + M_h)*(W+1))",
    "b_sq": "(M_h/(1-gamma)**2)**2 + (M_g/(1-gamma)**2)**2*H*(2*H*M_g**2 + M_h)*(W+1)",
    "c": "1/(3*k**3*L_lambda) + 96*b_sq",
    "m": "Max(2, (2*L_lambda*k)**3, (c*k/(2*L_lambda))**3)",
    "eta0": "k/m**(Rational(1,3))",
}

BOUND_FORMULAS = {
    # soft-max momentum budget; gap bounds L^H(theta*) - L^H(theta_1)
    "gamma1_s": "c**2*sigma**2*k**3*log(T+2)/(44*b_sq) + m**Rational(1,3)*sigma**2/(88*b_sq*k) + gap/22",
    "gamma2_s": "48*gap/11",
    "gamma3_s": "sigma**2*m**Rational(1,3)/(44*b_sq*k) + c**2*sigma**2*k**3*log(2+T)/(22*b_sq)",
    # Fisher-non-degenerate momentum budget
    "gamma1_f": "c**2*sigma**2*k**3*log(T+2)/(48*b_sq) + m**Rational(1,3)*sigma**2/(96*b_sq*k) + 1/(22*(1-gamma))",
    "gamma2_f": "48/(11*(1-gamma))",
    "gamma3_f": "sigma**2*m**Rational(1,3)/(44*b_sq*k**2) + c**2*sigma**2*k**3*log(2+T)/(22*k*b_sq)",
    "budget_rhs": "Gamma2 + (Gamma1 + Gamma3)/B",
    "truncation_bias_rhs": "M_g*((H+1)/(1-gamma) + gamma/(1-gamma)**2)*gamma**H",
    "softmax_gd_rhs": "2*lam/(1-gamma)*mismatch",
    "softmax_gd_threshold": "lam/(2*n_states*n_actions)",
    "avg_subopt_rhs": "mismatch**2*64*n_states**2*n_actions**2*weighted_sq/(eps**2*T*eta_T*(1-gamma)**3) + eps/2",
    "fisher_gd_rhs": "sqrt(eps_bias)/(1-gamma) + M_g/mu_f*grad_norm",
    "weight_var_rhs": "H*(2*H*M_g**2 + M_h)*(W+1)*step_sq",
    "smooth_barrier": "8/(1-gamma)**3 + 2*lam/n_states",
    "descent_lhs": "f_x + eta/4*u_sq - eta/2*err_sq",
}

ALL_FORMULAS = {**CONSTANT_FORMULAS, **BOUND_FORMULAS}


def evaluate(name_or_expr: str, values: dict) -> float:
    """Evaluate a named formula (or a raw expression) with sympy at high precision."""
    expr_src = ALL_FORMULAS.get(name_or_expr, name_or_expr)
    # 'gamma' would parse as the Gamma function
    expr_src = expr_src.replace("gamma", "gamma_")
    subs_src = {("gamma_" if k == "gamma" else k): v for k, v in values.items()}
    local = {k: sympy.Symbol(k) for k in subs_src}
    expr = sympy.sympify(expr_src, locals=local)
    subs = {local[k]: sympy.Float(repr(float(v)), 40) if not isinstance(v, int) else sympy.Integer(v)
            for k, v in subs_src.items()}
    return float(sympy.N(expr.subs(subs), 30))


def agrees(a: float, b: float, tol: float = 1e-12) -> bool:
    """Relative agreement for large magnitudes, absolute below 1."""
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))
