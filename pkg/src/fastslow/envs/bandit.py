"""Two-armed restless bandit driven by an exogenous environment condition.

Slow state: environment condition x in {0..24}, a clipped random walk.
Fast state: operational flags (y1, y2).  Action: intervention flags (a1, a2).
Each arm's chance of being non-operational next period is interpolated
linearly in x between the two extreme conditions.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from ..mdp import FastSlowMdp, ProductKernel, build_mdp
from .queue import EnvParamError


@dataclass(frozen=True)
class BanditParams:
    n_levels: int = 25
    moves: tuple = (2, 1, 0, -1, -2)
    move_probs: tuple = (0.05, 0.15, 0.6, 0.15, 0.05)
    # P(y' = 0) for (y = 0, a = 0), (y = 0, a = 1), (y = 1, a = 0), (y = 1, a = 1)
    down_worst: tuple = (0.99, 0.5, 0.7, 0.2)
    down_best: tuple = (0.95, 0.01, 0.1, 0.01)
    n_arms: int = 2
    intervention_cost: float = 1.0
    operational_reward: float = 2.0
    gamma: float = 0.95

    def validate(self) -> None:
        if self.n_levels < 1 or self.n_arms < 1:
            raise EnvParamError("bandit needs at least one level and one arm")
        if len(self.moves) != len(self.move_probs) or abs(sum(self.move_probs) - 1) > 1e-12:
            raise EnvParamError("random-walk probabilities must match the moves and sum to 1")
        for q in (*self.down_worst, *self.down_best, *self.move_probs):
            if not 0 <= q <= 1:
                raise EnvParamError("probabilities must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "BanditParams":
        d = dict(d)
        for key in ("moves", "move_probs", "down_worst", "down_best"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def down_probability(p: BanditParams) -> np.ndarray:
    """P(arm non-operational next) indexed (x, y, a)."""
    w = np.arange(p.n_levels) / max(p.n_levels - 1, 1)
    lo = np.asarray(p.down_worst).reshape(2, 2)
    hi = np.asarray(p.down_best).reshape(2, 2)
    return lo[None] + (hi - lo)[None] * w[:, None, None]


def environment_walk(p: BanditParams) -> np.ndarray:
    n = p.n_levels
    P = np.zeros((n, n))
    for x in range(n):
        for d, q in zip(p.moves, p.move_probs):
            P[x, min(max(x + d, 0), n - 1)] += q
    return P


def make_bandit_env(p: BanditParams | None = None) -> FastSlowMdp:
    p = BanditParams() if p is None else p
    p.validate()
    m = p.n_arms
    nX = p.n_levels
    fast = list(itertools.product((0, 1), repeat=m))
    acts = list(itertools.product((0, 1), repeat=m))
    nY, nA = len(fast), len(acts)
    down = down_probability(p)

    # fast rows depend on (x, y, a): arms independent given x
    F = np.ones((nX, nY, nA, nY))
    for j in range(m):
        yj = np.array([y[j] for y in fast])
        aj = np.array([a[j] for a in acts])
        q0 = down[:, yj[:, None], aj[None, :]]  # (nX, nY, nA)
        y2j = np.array([y[j] for y in fast])
        F *= np.where(y2j[None, None, None, :] == 0, q0[..., None], 1 - q0[..., None])
    fast_k = sp.csr_matrix(F.reshape(nX * nY * nA, nY))

    slow_k = sp.csr_matrix(environment_walk(p))
    s = np.arange(nX * nY)
    slow_index = np.repeat((s // nY)[:, None], nA, axis=1)
    fast_index = s[:, None] * nA + np.arange(nA)[None, :]
    kernel = ProductKernel(slow_k, slow_index, fast_k, fast_index, nX, nY, nA)

    Y = np.array(fast, dtype=float)
    A = np.array(acts, dtype=float)
    r = p.operational_reward * Y.sum(axis=1)[:, None] - p.intervention_cost * A.sum(axis=1)[None, :]
    reward = np.broadcast_to(r[None], (nX, nY, nA))
    meta = {"env": "bandit", "params": asdict(p), "nominal_per_dim": 5, "coord_names": ["x", "y1", "y2"], "action_names": ["a1", "a2"]}
    return build_mdp(np.arange(nX, dtype=float), Y, A, reward, kernel, p.gamma, meta)


def bandit_decomposition(mdp: FastSlowMdp):
    """Additive split with a zero slow part; exact because the reward ignores x."""
    from ..nominal import NominalDecomposition

    return NominalDecomposition("additive", np.zeros(mdp.n_slow), mdp.reward_xya()[0], 0.0)
