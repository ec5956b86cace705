"""Momentum-based (STORM) policy gradient on tabular MDPs with exact oracles."""

from .estimators import (
    GradEstimate,
    Trajectory,
    TrajectoryBatch,
    batch_estimate,
    gpomdp,
    importance_weight,
    pgt,
    reinforce,
    sample_batch,
    sample_trajectory,
)
from .mdp import (
    MdpValidationError,
    TabularMdp,
    bundled_mdp,
    discounted_visitation,
    exact_return,
    load_mdp,
    mismatch_coefficient,
    optimal_policy,
    policy_evaluation,
    random_mdp,
    truncated_return,
    validate_mdp,
)
from .optimizer import (
    ConfigError,
    ConstantsBundle,
    DivergenceError,
    MomentumState,
    RunConfig,
    RunRecord,
    derive_constants,
    run_storm_pg_f,
    run_storm_pg_s,
    schedule,
    storm_update,
    vanilla_pg_baseline,
)
from .policy import action_probs, fisher_information, log_barrier, score

__version__ = "0.1.0"
