"""Deterministic policy containers.

Every policy can be flattened into an action schedule: an integer array of
shape ``(P, n_states)`` whose row ``t % P`` gives the action taken ``t`` steps
into an episode.  Stationary policies have ``P = 1``; a T-periodic policy
stacks ``mu`` on top of ``pi_1 .. pi_{T-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_actions(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("policy table must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """One action index per flat state."""

    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", _as_actions(self.actions))

    def schedule(self, n_slow: int | None = None) -> np.ndarray:
        return self.actions[None, :]

    def __eq__(self, other):
        return isinstance(other, StationaryPolicy) and np.array_equal(self.actions, other.actions)


@dataclass(frozen=True, eq=False)
class FastPolicy:
    """Policy that looks only at the fast state (slow-agnostic baselines)."""

    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", _as_actions(self.actions))

    def to_stationary(self, n_slow: int) -> StationaryPolicy:
        return StationaryPolicy(np.tile(self.actions, n_slow))

    def schedule(self, n_slow: int | None = None) -> np.ndarray:
        if n_slow is None:
            raise ValueError("fast-only policy needs the number of slow states")
        return self.to_stationary(n_slow).actions[None, :]

    def __eq__(self, other):
        return isinstance(other, FastPolicy) and np.array_equal(self.actions, other.actions)


@dataclass(frozen=True, eq=False)
class FiniteHorizonPolicy:
    """Lower-level policies ``pi_1 .. pi_{T-1}``; ``steps[t - 1]`` is ``pi_t``."""

    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(_as_actions(s) for s in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, t: int) -> np.ndarray:
        """Policy for lower period ``t`` (1-based)."""
        if not 1 <= t <= len(self.steps):
            raise IndexError(f"lower period {t} outside 1..{len(self.steps)}")
        return self.steps[t - 1]

    def __eq__(self, other):
        return (
            isinstance(other, FiniteHorizonPolicy)
            and len(self) == len(other)
            and all(np.array_equal(a, b) for a, b in zip(self.steps, other.steps))
        )


@dataclass(frozen=True, eq=False)
class TPeriodicPolicy:
    mu: np.ndarray
    pi: FiniteHorizonPolicy

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_actions(self.mu))
        if not isinstance(self.pi, FiniteHorizonPolicy):
            object.__setattr__(self, "pi", FiniteHorizonPolicy(self.pi))

    @property
    def T(self) -> int:
        return len(self.pi) + 1

    def schedule(self, n_slow: int | None = None) -> np.ndarray:
        return np.vstack([self.mu[None, :], *[s[None, :] for s in self.pi.steps]])

    def __eq__(self, other):
        return isinstance(other, TPeriodicPolicy) and np.array_equal(self.mu, other.mu) and self.pi == other.pi


Policy = StationaryPolicy | FastPolicy | TPeriodicPolicy


def action_schedule(policy, n_slow: int) -> np.ndarray:
    """``(P, n_states)`` action table for any policy kind."""
    return policy.schedule(n_slow)


def policy_to_dict(policy) -> dict:
    if isinstance(policy, StationaryPolicy):
        return {"kind": "stationary", "actions": policy.actions.tolist()}
    if isinstance(policy, FastPolicy):
        return {"kind": "fast", "actions": policy.actions.tolist()}
    if isinstance(policy, TPeriodicPolicy):
        return {"kind": "periodic", "mu": policy.mu.tolist(), "pi": [s.tolist() for s in policy.pi.steps]}
    raise TypeError(f"not a policy: {type(policy).__name__}")


def policy_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "stationary":
        return StationaryPolicy(doc["actions"])
    if kind == "fast":
        return FastPolicy(doc["actions"])
    if kind == "periodic":
        return TPeriodicPolicy(doc["mu"], FiniteHorizonPolicy(doc["pi"]))
    raise ValueError(f"unknown policy kind {kind!r}")
