"""Experiment configuration documents."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

METHODS = (
    "base_vi",
    "slow_agnostic_vi",
    "q_learning",
    "fsvi",
    "nominal_fsvi",
    "base_avi",
    "slow_agnostic_avi",
    "fsavi",
    "nominal_fsavi",
)


class ConfigError(ValueError):
    pass


@dataclass
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    @property
    def key(self) -> str:
        return self.label or self.name


@dataclass
class ExperimentConfig:
    env: str
    methods: list
    env_params: dict = field(default_factory=dict)
    T: int = 10
    gamma: float | None = None
    n_seeds: int = 10
    first_seed: int = 0
    eval_horizon: int | None = None
    n_episodes: int = 200
    cadence: int | None = None
    snapshots_per_sweep: int = 8
    successors: str = "dense"
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods]
        self.validate()

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m.name not in METHODS:
                raise ConfigError(f"unknown method {m.name!r}; choose from {', '.join(METHODS)}")
        keys = [m.key for m in self.methods]
        if len(set(keys)) != len(keys):
            raise ConfigError("method labels must be unique")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.gamma is not None and not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.eval_horizon is not None and self.eval_horizon < 1:
            raise ConfigError("evaluation horizon must be at least 1")
        if self.n_episodes < 1 or self.workers < 1:
            raise ConfigError("n_episodes and workers must be positive")
        if self.successors not in ("dense", "support"):
            raise ConfigError("successors must be 'dense' or 'support'")

    @property
    def horizon(self) -> int:
        return 10 * self.T if self.eval_horizon is None else self.eval_horizon

    @property
    def seeds(self) -> list[int]:
        return list(range(self.first_seed, self.first_seed + self.n_seeds))

    def resolved_env_params(self) -> dict:
        p = dict(self.env_params)
        if self.gamma is not None:
            p["gamma"] = self.gamma
        return p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # never affects results
        d.pop("output_dir")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "env" not in d or "methods" not in d:
            raise ConfigError("config needs 'env' and 'methods'")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None


# Budgets sized so every curve spans a comparable cost range on one CPU.
DEFAULT_METHODS = {
    "queue": [
        {"name": "base_vi", "params": {"k": 60}},
        {"name": "slow_agnostic_vi", "params": {"k": 100}},
        {"name": "q_learning", "params": {"steps": 2_000_000}},
        {"name": "fsvi", "params": {"k": 15}},
        {"name": "nominal_fsvi", "params": {"k": 15}},
    ],
    "bandit": [
        {"name": "base_vi", "params": {"k": 100}},
        {"name": "slow_agnostic_vi", "params": {"k": 100}},
        {"name": "q_learning", "params": {"steps": 500_000}},
        {"name": "fsvi", "params": {"k": 20}},
        {"name": "nominal_fsvi", "params": {"k": 20}},
    ],
    "demand_response": [
        {"name": "base_avi", "params": {"k": 20}},
        {"name": "slow_agnostic_avi", "params": {"k": 20}},
        {"name": "fsavi", "params": {"k": 20}},
        {"name": "nominal_fsavi", "params": {"k": 20}},
    ],
}


def default_config(env: str, **overrides) -> ExperimentConfig:
    if env not in DEFAULT_METHODS:
        raise ConfigError(f"no default configuration for {env!r}")
    d = {"env": env, "methods": DEFAULT_METHODS[env], "T": 10, "gamma": 0.95}
    d.update(overrides)
    return ExperimentConfig.from_dict(d)
