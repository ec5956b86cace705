"""Exact oracles and bound checks."""

from .checks import (
    BoundReport,
    CompatReport,
    ascend_to_stationarity,
    budget_gammas,
    compatible_error,
    descent_lemma_check,
    double_entry,
    importance_correction_check,
    importance_identity_check,
    lemma1_check,
    lemma2_check,
    lemma2_lambda,
    lemma3_budget,
    lemma4_check,
    lemma5_budget,
    momentum_contraction_check,
    smoothness_check,
    truncation_bias_check,
    unbiasedness_check,
    weight_variance_check,
)
from .exact import (
    ExactGradients,
    exact_gradients,
    exact_policy_gradient,
    exact_regularized_gradient,
    exact_truncated_gradient,
    finite_diff_gradient,
    finite_diff_hessian,
    weight_moment,
    weight_variance,
)
