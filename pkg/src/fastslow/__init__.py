"""Frozen-state solvers for fast-slow Markov decision processes."""

from .mdp import FastSlowMdp, FrozenKernel, MdpValidationError, build_mdp, frozen_marginal, load_mdp, save_mdp
from .operators import (
    LowerValueSeq,
    TStepKernel,
    backup_exact,
    backup_frozen,
    backup_slow_agnostic,
    backup_upper,
    compose_t_step,
)
from .policies import FastPolicy, FiniteHorizonPolicy, StationaryPolicy, TPeriodicPolicy
from .simulate import evaluate_policy

__version__ = "0.1.0"
