"""Benchmark environments and random fixtures."""

from __future__ import annotations

from .bandit import BanditParams, bandit_decomposition, make_bandit_env
from .demand_response import DemandResponseParams, demand_response_decomposition, make_demand_response_env
from .queue import EnvParamError, QueueParams, make_queue_env, queue_decomposition
from .random_mdp import fixture_decomposition, make_chain, make_random_fastslow, make_random_mdp

ENVIRONMENTS = {
    "queue": (QueueParams, make_queue_env, queue_decomposition),
    "bandit": (BanditParams, make_bandit_env, bandit_decomposition),
    "demand_response": (DemandResponseParams, make_demand_response_env, demand_response_decomposition),
}


def make_env(name: str, params: dict | None = None):
    """Build a benchmark MDP by name from a parameter document."""
    if name == "random":
        return make_random_fastslow(**(params or {}))
    if name not in ENVIRONMENTS:
        raise EnvParamError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS) + ['random']}")
    cls, build, _ = ENVIRONMENTS[name]
    try:
        p = cls.from_dict(params or {})
    except TypeError as exc:
        raise EnvParamError(f"bad parameters for {name}: {exc}") from None
    return build(p)


def env_decomposition(mdp):
    """The nominal-state reward decomposition registered for an environment."""
    name = mdp.meta.get("env")
    if name in ENVIRONMENTS:
        return ENVIRONMENTS[name][2](mdp)
    if mdp.meta.get("fixture") == "random_fastslow":
        return fixture_decomposition(mdp)
    from ..nominal import fit_additive

    return fit_additive(mdp)


__all__ = [
    "BanditParams",
    "DemandResponseParams",
    "EnvParamError",
    "QueueParams",
    "env_decomposition",
    "make_bandit_env",
    "make_chain",
    "make_demand_response_env",
    "make_env",
    "make_queue_env",
    "make_random_fastslow",
    "make_random_mdp",
]
