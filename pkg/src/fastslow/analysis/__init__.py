"""Bound calculators, Lipschitz estimation and exact regret measurement."""

from .bounds import (
    BoundDomainError,
    BoundInputs,
    bound_report,
    lookahead_distance,
    lower_nominal_gap_bound,
    regret_bound_fsavi,
    regret_bound_fsvi,
    regret_bound_nominal,
    reward_gap_bound,
    vi_regret_bound,
    vi_value_error,
)
from .lipschitz import LipschitzEstimates, estimate_lipschitz, jump_sizes
from .regret import (
    NonConvergedReference,
    check_hierarchical_equivalence,
    measured_regret,
    optimal_value,
    periodic_value,
    policy_value,
)
