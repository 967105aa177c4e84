"""Two-class single-server queue with slowly drifting holding costs.

Slow state: holding costs (x1, x2), each on a six-level ladder.
Fast state: queue lengths (y1, y2) and the class z in service (0 = idle).
Action: class to serve next (0 = none), read only when the server frees up
(completion) or is idle.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from ..mdp import FastSlowMdp, ProductKernel, build_mdp


class EnvParamError(ValueError):
    pass


@dataclass(frozen=True)
class QueueParams:
    arrival: tuple = (0.2, 0.2)
    service: tuple = (0.3, 0.3)
    capacity: tuple = (3, 3)
    cost_low: float = 0.01
    cost_high: float = 0.2
    cost_levels: int = 6
    ladder_stay: float = 0.9
    ladder_up: float = 0.05
    ladder_down: float = 0.05
    gamma: float = 0.95

    def validate(self) -> None:
        mu, lam = np.asarray(self.arrival), np.asarray(self.service)
        if len(mu) != len(lam) or len(mu) != len(self.capacity):
            raise EnvParamError("arrival, service and capacity must have one entry per class")
        if np.any(mu < 0) or np.any(lam < 0) or min(self.capacity) < 1:
            raise EnvParamError("rates must be nonnegative and capacities positive")
        if lam.max(initial=0.0) + mu.sum() > 1 + 1e-12:
            raise EnvParamError("service plus total arrival probability exceeds 1")
        if abs(self.ladder_stay + self.ladder_up + self.ladder_down - 1) > 1e-12:
            raise EnvParamError("cost ladder probabilities must sum to 1")
        if self.cost_levels < 1:
            raise EnvParamError("cost ladder needs at least one level")

    @classmethod
    def from_dict(cls, d: dict) -> "QueueParams":
        d = dict(d)
        for key in ("arrival", "service", "capacity"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def cost_ladder(p: QueueParams) -> tuple[np.ndarray, np.ndarray]:
    """Ladder values and its (n, n) transition matrix; blocked moves stay put."""
    n = p.cost_levels
    levels = np.linspace(p.cost_low, p.cost_high, n)
    P = np.zeros((n, n))
    for i in range(n):
        P[i, i] += p.ladder_stay
        P[i, max(i - 1, 0)] += p.ladder_down
        P[i, min(i + 1, n - 1)] += p.ladder_up
    return levels, P


def _fast_space(p: QueueParams) -> list[tuple]:
    ranges = [range(q + 1) for q in p.capacity] + [range(len(p.capacity) + 1)]
    return list(itertools.product(*ranges))


def queue_fast_row(p: QueueParams, y: tuple, a: int) -> dict:
    """Successor distribution of (y_1.., z) given fast state and action."""
    m = len(p.capacity)
    lengths, z = list(y[:m]), y[m]
    lam = 0.0 if z == 0 else p.service[z - 1]
    out: dict = {}

    def assign(ls: list, current: int) -> int:
        # a free server takes the chosen class when that queue is nonempty
        if current != 0:
            return current
        return a if a != 0 and ls[a - 1] > 0 else 0

    def add(ls, zz, prob):
        if prob > 0:
            key = tuple(ls) + (zz,)
            out[key] = out.get(key, 0.0) + prob

    for j in range(m):
        ls = lengths.copy()
        ls[j] = min(ls[j] + 1, p.capacity[j])
        add(ls, assign(ls, z), p.arrival[j])
    if z != 0:
        ls = lengths.copy()
        ls[z - 1] = max(ls[z - 1] - 1, 0)
        add(ls, assign(ls, 0), lam)
    add(lengths, assign(lengths, z), 1.0 - lam - sum(p.arrival))
    return out


def make_queue_env(p: QueueParams | None = None) -> FastSlowMdp:
    p = QueueParams() if p is None else p
    p.validate()
    m = len(p.capacity)
    levels, ladder = cost_ladder(p)
    slow = np.array(list(itertools.product(levels, repeat=m)))
    slow_idx = list(itertools.product(range(len(levels)), repeat=m))
    fast = _fast_space(p)
    fast_pos = {y: i for i, y in enumerate(fast)}
    nX, nY, nA = len(slow), len(fast), m + 1

    # slow kernel: independent ladder moves per class
    S = np.ones((nX, nX))
    for d in range(m):
        S *= ladder[np.array([ix[d] for ix in slow_idx])][:, np.array([ix[d] for ix in slow_idx])]
    slow_k = sp.csr_matrix(S)

    rows, cols, vals = [], [], []
    for yi, y in enumerate(fast):
        for a in range(nA):
            for y2, prob in queue_fast_row(p, y, a).items():
                rows.append(yi * nA + a)
                cols.append(fast_pos[y2])
                vals.append(prob)
    fast_k = sp.csr_matrix((vals, (rows, cols)), shape=(nY * nA, nY))

    s = np.arange(nX * nY)
    slow_index = np.repeat((s // nY)[:, None], nA, axis=1)
    fast_index = (s % nY)[:, None] * nA + np.arange(nA)[None, :]
    kernel = ProductKernel(slow_k, slow_index, fast_k, fast_index, nX, nY, nA)

    Y = np.array(fast, dtype=float)
    reward = -(slow[:, None, :] * Y[None, :, :m]).sum(axis=2)  # (nX, nY)
    reward = np.repeat(reward[:, :, None], nA, axis=2)
    meta = {"env": "queue", "params": asdict(p), "nominal_per_dim": 3,
            "coord_names": ["x1", "x2", "y1", "y2", "z"], "action_names": ["serve"]}
    return build_mdp(slow, Y, np.arange(nA), reward, kernel, p.gamma, meta)


def queue_decomposition(mdp: FastSlowMdp):
    """Per-class multiplicative split: r = sum_j (-x_j) * y_j."""
    from ..nominal import NominalDecomposition

    m = mdp.slow_states.shape[1]
    g = -mdp.slow_states  # (nX, m)
    h = np.broadcast_to(
        mdp.fast_states[None, :, None, :m], (mdp.n_slow, mdp.n_fast, mdp.n_actions, m)
    ).copy()
    return NominalDecomposition("multiplicative", g, h, 0.0)
