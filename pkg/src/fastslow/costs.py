"""Computational cost metering in units of |S_obs| * |A| * |S_succ|.

Solvers charge integer cost events as they work and drop policy snapshots
along the way; a snapshot records the cumulative cost at the moment it was
taken together with a zero-argument factory producing the policy, so the
policy itself is only built if somebody evaluates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp import FastSlowMdp


@dataclass(frozen=True)
class CostEvent:
    label: str
    n_obs: int
    n_actions: int
    n_succ: float
    units: int

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "n_obs": self.n_obs,
            "n_actions": self.n_actions,
            "n_succ": self.n_succ,
            "units": self.units,
        }


@dataclass(frozen=True)
class Snapshot:
    cost: int
    make_policy: Callable
    label: str = ""

    def policy(self):
        return self.make_policy()


def meter_cost(events) -> int:
    """Exact integer total of a sequence of cost events."""
    return int(sum(int(e.units) for e in events))


@dataclass
class SolveTrace:
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    _total: int = 0

    @property
    def cost(self) -> int:
        return self._total

    def charge(self, label: str, n_obs: int, n_actions: int, n_succ, units: int | None = None) -> int:
        if units is None:
            units = int(n_obs) * int(n_actions) * int(n_succ)
        units = int(units)
        if units < 0:
            raise ValueError("cost units must be nonnegative")
        self.events.append(CostEvent(label, int(n_obs), int(n_actions), n_succ, units))
        self._total += units
        return self._total

    def snapshot(self, make_policy: Callable, label: str = "") -> None:
        """Record a policy at the current cost; a same-cost snapshot replaces the last one."""
        snap = Snapshot(self._total, make_policy, label)
        if self.snapshots and self.snapshots[-1].cost >= self._total:
            self.snapshots[-1] = snap
        else:
            self.snapshots.append(snap)

    def costs(self) -> list[int]:
        return [s.cost for s in self.snapshots]

    def recount(self) -> int:
        return meter_cost(self.events)

    def cost_by_label(self) -> dict:
        out: dict = {}
        for e in self.events:
            out[e.label] = out.get(e.label, 0) + e.units
        return out

    def to_dict(self) -> dict:
        return {
            "total_cost": self._total,
            "events": [e.as_dict() for e in self.events],
            "snapshots": [{"cost": s.cost, "label": s.label} for s in self.snapshots],
            "meta": self.meta,
        }


@dataclass(frozen=True)
class CostModel:
    """How many successor states one Bellman update is charged for.

    ``dense`` charges the full successor space (|S| for joint backups, |Y| for
    frozen ones), the accounting behind the O(|S|^2 |A|) per-sweep figures.
    ``support`` charges the exact number of nonzero successor probabilities.
    """

    successors: str = "dense"

    def __post_init__(self):
        if self.successors not in ("dense", "support"):
            raise ValueError(f"unknown successor accounting {self.successors!r}")

    def joint(self, mdp: FastSlowMdp, states: np.ndarray | None = None) -> tuple[float, int]:
        """(n_succ, units) for backing up ``states`` with the joint kernel."""
        n = mdp.n_states if states is None else len(states)
        if self.successors == "dense":
            return mdp.n_states, n * mdp.n_actions * mdp.n_states
        counts = mdp.support_counts
        units = int(counts.sum() if states is None else counts[states].sum())
        return units / max(n * mdp.n_actions, 1), units

    def frozen(self, mdp: FastSlowMdp, states: np.ndarray | None = None) -> tuple[float, int]:
        n = mdp.n_states if states is None else len(states)
        if self.successors == "dense":
            return mdp.n_fast, n * mdp.n_actions * mdp.n_fast
        counts = mdp.frozen.counts()
        units = int(counts.sum() if states is None else counts[states].sum())
        return units / max(n * mdp.n_actions, 1), units


def prefix_bounds(n: int, cadence: int | None) -> list[int]:
    """End points of the update prefixes at which snapshots are taken."""
    if not cadence or cadence >= n:
        return [n]
    return list(range(cadence, n, cadence)) + [n]


def default_cadence(n_states: int, per_sweep: int = 8) -> int:
    return max(1, math.ceil(n_states / per_sweep))
