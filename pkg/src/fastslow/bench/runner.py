"""Cost-metered experiment runs: solve with snapshots, evaluate every snapshot."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

from joblib import Parallel, delayed

from .. import __version__
from ..avi import SimConfig, avi_base, avi_slow_agnostic, fsavi, nominal_fsavi
from ..costs import CostModel, default_cadence
from ..envs import env_decomposition, make_env
from ..features import build_features
from ..nominal import evenly_spaced_nominal, nominal_fsvi
from ..policies import policy_to_dict
from ..qlearning import QLearningHyper, q_learning
from ..simulate import evaluate_policy
from ..solvers import exact_vi, fsvi, slow_agnostic_vi
from .config import ConfigError, ExperimentConfig, MethodSpec


@dataclass
class RunRecord:
    method: str
    seed: int
    costs: list
    returns: list
    provenance: dict = field(default_factory=dict)
    policy: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.costs, self.costs[1:])):
            raise ValueError("costs must be strictly increasing within a record")

    def to_dict(self, with_policy: bool = False) -> dict:
        d = {
            "method": self.method,
            "seed": self.seed,
            "costs": [int(c) for c in self.costs],
            "returns": [float(r) for r in self.returns],
            "provenance": self.provenance,
        }
        if with_policy and self.policy is not None:
            d["policy"] = policy_to_dict(self.policy)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        policy = None
        if "policy" in d:
            from ..policies import policy_from_dict

            policy = policy_from_dict(d["policy"])
        return cls(d["method"], d["seed"], d["costs"], d["returns"], d.get("provenance", {}), policy)


@lru_cache(maxsize=4)
def _env(name: str, params_json: str):
    return make_env(name, json.loads(params_json))


@lru_cache(maxsize=8)
def _features(name: str, params_json: str, space: str, fraction: float, width: float):
    return build_features(_env(name, params_json), "rbf", space=space, fraction=fraction, width=width)


def _nominal_states(mdp, params: dict) -> list[int]:
    """Explicit ``nominal_xs`` or an even lattice with ``per_dim`` points per slow axis (consumed)."""
    xs = params.pop("nominal_xs", None)
    per_dim = params.pop("per_dim", mdp.meta.get("nominal_per_dim", 3))
    if xs is not None:
        return [int(x) for x in xs]
    return evenly_spaced_nominal(mdp, per_dim)


def solve_method(cfg: ExperimentConfig, spec: MethodSpec, seed: int):
    """Run one method; returns (mdp, final policy, trace, resolved hyperparameters)."""
    params_json = json.dumps(cfg.resolved_env_params(), sort_keys=True)
    mdp = _env(cfg.env, params_json)
    p = dict(spec.params)
    cost_model = CostModel(cfg.successors)
    cadence = cfg.cadence or default_cadence(mdp.n_states, cfg.snapshots_per_sweep)
    T = int(p.pop("T", cfg.T))
    name = spec.name
    resolved: dict = {"T": T}

    def take(key, default):
        v = p.pop(key, default)
        resolved[key] = v
        return v

    if name == "base_vi":
        _, policy, trace = exact_vi(mdp, take("k", 50), seed=seed, cadence=cadence, cost_model=cost_model)
    elif name == "slow_agnostic_vi":
        c = cfg.cadence or default_cadence(mdp.n_fast, cfg.snapshots_per_sweep)
        policy, trace = slow_agnostic_vi(mdp, take("k", 50), seed=seed, cadence=c, cost_model=cost_model)
    elif name == "q_learning":
        hyper = QLearningHyper(**take("hyper", {}))
        policy, trace = q_learning(mdp, take("steps", 1_000_000), hyper, seed=seed)
    elif name == "fsvi":
        policy, _, trace = fsvi(mdp, T, take("k", 20), seed=seed, cadence=cadence, cost_model=cost_model)
    elif name == "nominal_fsvi":
        xs = _nominal_states(mdp, p)
        resolved["nominal_xs"] = xs
        decomp = env_decomposition(mdp)
        policy, _, trace = nominal_fsvi(
            mdp, T, take("k", 20), xs, decomp, seed=seed, cadence=cadence, cost_model=cost_model
        )
    else:
        fraction, width = take("fraction", 0.3), take("width", 0.02)
        if name == "base_avi":
            fm = _features(cfg.env, params_json, "joint", fraction, width)
            policy, trace = avi_base(mdp, fm, take("k", 20), take("n_succ", 40), seed, cost_model=cost_model)
        elif name == "slow_agnostic_avi":
            fm_y = _features(cfg.env, params_json, "fast", fraction, width)
            policy, trace = avi_slow_agnostic(mdp, fm_y, take("k", 20), take("n_succ", 20), seed)
        elif name == "fsavi":
            fm = _features(cfg.env, params_json, "joint", fraction, width)
            sim = SimConfig(take("paths", 25))
            policy, _, trace = fsavi(mdp, fm, T, take("k", 20), sim, seed, cost_model=cost_model)
        elif name == "nominal_fsavi":
            fm = _features(cfg.env, params_json, "joint", fraction, width)
            fm_y = _features(cfg.env, params_json, "fast", fraction, width)
            xs = _nominal_states(mdp, p)
            resolved["nominal_xs"] = xs
            sim = SimConfig(take("paths", 25))
            policy, _, trace = nominal_fsavi(
                mdp, fm, fm_y, T, take("k", 20), xs, env_decomposition(mdp), sim, seed, cost_model=cost_model
            )
        else:  # pragma: no cover - guarded by config validation
            raise ConfigError(f"unknown method {name!r}")
    if p:
        raise ConfigError(f"unused parameters for {spec.key}: {sorted(p)}")
    return mdp, policy, trace, resolved


def run_one(cfg: ExperimentConfig, spec: MethodSpec, seed: int) -> RunRecord:
    mdp, policy, trace, resolved = solve_method(cfg, spec, seed)
    costs, returns = [], []
    for snap in trace.snapshots:
        r = evaluate_policy(mdp, snap.policy(), cfg.horizon, n_seeds=1, seed=seed, n_episodes=cfg.n_episodes)
        costs.append(snap.cost)
        returns.append(float(r[0]))
    provenance = {
        "method": spec.name,
        "hyperparameters": resolved,
        "env": cfg.env,
        "env_params": cfg.resolved_env_params(),
        "gamma": mdp.gamma,
        "eval_horizon": cfg.horizon,
        "n_episodes": cfg.n_episodes,
        "start_states": "uniform",
        "successors": cfg.successors,
        "total_cost": trace.cost,
        "recount": trace.recount(),
        "code_version": __version__,
        "config_hash": cfg.digest(),
    }
    return RunRecord(spec.key, seed, costs, returns, provenance, policy)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[RunRecord]:
    """Run every (method, seed) pair; records come back ordered by method then seed."""
    jobs = [(spec, seed) for spec in cfg.methods for seed in cfg.seeds]
    n = cfg.workers if workers is None else workers
    if n == 1:
        out = [run_one(cfg, spec, seed) for spec, seed in jobs]
    else:
        out = Parallel(n_jobs=n)(delayed(run_one)(cfg, spec, seed) for spec, seed in jobs)
    order = {spec.key: i for i, spec in enumerate(cfg.methods)}
    return sorted(out, key=lambda r: (order[r.method], r.seed))


def records_to_json(records, with_policy: bool = False) -> str:
    return json.dumps([r.to_dict(with_policy) for r in records], sort_keys=True, indent=1)


def records_from_json(text: str) -> list[RunRecord]:
    return [RunRecord.from_dict(d) for d in json.loads(text)]


__all__ = ["RunRecord", "records_from_json", "records_to_json", "run_experiment", "run_one", "solve_method"]
