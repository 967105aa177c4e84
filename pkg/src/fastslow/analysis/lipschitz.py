"""Empirical Lipschitz constants and fast-slow jump sizes of a finite MDP.

Kernels carry no noise coupling, so the transition constant is estimated with
the Wasserstein-1 distance between successor distributions: exact by linear
programming for small supports, exact in closed form for 1-D coordinates, and
an upper bound from a greedy (north-west corner) coupling otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from ..mdp import FastSlowMdp
from .bounds import BoundDomainError, lipschitz_value_bound

LP_SUPPORT_LIMIT = 64


@dataclass(frozen=True)
class LipschitzEstimates:
    L_r: float
    L_f: float
    L_U: float
    method: str  # declared | empirical | prop5_bound
    n_pairs: int = 0
    transport: str = "exact"

    def __post_init__(self):
        if min(self.L_r, self.L_f, self.L_U) < 0:
            raise ValueError("Lipschitz constants must be nonnegative")
        if self.method not in ("declared", "empirical", "prop5_bound"):
            raise ValueError(f"unknown estimate method {self.method!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _sa_coords(mdp: FastSlowMdp) -> np.ndarray:
    """Coordinates of every (s, a) pair, rows ordered s * |A| + a."""
    S = np.repeat(mdp.state_coords, mdp.n_actions, axis=0)
    A = np.tile(mdp.actions.reshape(mdp.n_actions, -1), (mdp.n_states, 1))
    return np.hstack([S, A])


def _pairs(n: int, max_pairs: int | None, rng: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    if max_pairs is None or total <= max_pairs:
        return np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64).reshape(-1, 2)
    i = rng.integers(n, size=max_pairs)
    j = rng.integers(n - 1, size=max_pairs)
    j = j + (j >= i)
    return np.stack([i, j], axis=1)


def wasserstein1(p_idx, p, q_idx, q, coords: np.ndarray) -> tuple[float, str]:
    """W1 between two discrete distributions on ``coords`` (Euclidean ground cost)."""
    if coords.shape[1] == 1:
        return float(wasserstein_distance(coords[p_idx, 0], coords[q_idx, 0], p, q)), "exact"
    C = cdist(coords[p_idx], coords[q_idx])
    m, n = len(p), len(q)
    if m * n <= LP_SUPPORT_LIMIT**2 and max(m, n) <= LP_SUPPORT_LIMIT:
        A_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
        res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs")
        if res.status == 0:
            return float(res.fun), "exact"
    # north-west corner coupling: feasible, hence an upper bound
    p, q = np.array(p, float), np.array(q, float)
    i = j = 0
    cost = 0.0
    while i < m and j < n:
        w = min(p[i], q[j])
        cost += w * C[i, j]
        p[i] -= w
        q[j] -= w
        if p[i] <= 1e-15:
            i += 1
        if q[j] <= 1e-15:
            j += 1
    return float(cost), "greedy_bound"


def reward_lipschitz(mdp: FastSlowMdp, max_pairs: int | None = 200_000, seed: int = 0) -> tuple[float, int]:
    X = _sa_coords(mdp)
    r = mdp.reward.ravel()
    pr = _pairs(len(r), max_pairs, np.random.default_rng([seed, 11]))
    d = np.linalg.norm(X[pr[:, 0]] - X[pr[:, 1]], axis=1)
    ok = d > 0
    if not ok.any():
        return 0.0, 0
    return float(np.max(np.abs(r[pr[ok, 0]] - r[pr[ok, 1]]) / d[ok])), int(ok.sum())


def transition_lipschitz(mdp: FastSlowMdp, max_pairs: int | None = 20_000, seed: int = 0) -> tuple[float, int, str]:
    """max W1(P(.|s,a), P(.|s',a')) / ||(s,a) - (s',a')|| over (sampled) pairs."""
    K = mdp.kernel.joint_csr()
    X = _sa_coords(mdp)
    coords = mdp.state_coords
    pr = _pairs(K.shape[0], max_pairs, np.random.default_rng([seed, 13]))
    best, mode = 0.0, "exact"
    for i, j in pr:
        d = float(np.linalg.norm(X[i] - X[j]))
        if d == 0:
            continue
        a = slice(K.indptr[i], K.indptr[i + 1])
        b = slice(K.indptr[j], K.indptr[j + 1])
        w, how = wasserstein1(K.indices[a], K.data[a], K.indices[b], K.data[b], coords)
        if how != "exact":
            mode = how
        best = max(best, w / d)
    return best, len(pr), mode


def value_lipschitz(mdp: FastSlowMdp, V: np.ndarray) -> float:
    """Empirical max |V(s) - V(s')| / ||s - s'|| over all state pairs."""
    S = mdp.state_coords
    D = cdist(S, S)
    dV = np.abs(V[:, None] - V[None, :])
    mask = D > 0
    return float(np.max(dV[mask] / D[mask])) if mask.any() else 0.0


def estimate_lipschitz(
    mdp: FastSlowMdp,
    *,
    mode: str = "auto",
    V_star: np.ndarray | None = None,
    max_pairs: int | None = 20_000,
    seed: int = 0,
) -> LipschitzEstimates:
    """Estimate (L_r, L_f, L_U).

    ``mode="prop5_bound"`` forces L_U = L_r / (1 - gamma L_f) and fails when
    gamma L_f >= 1.  ``mode="empirical"`` measures L_U on the optimal value.
    ``auto`` uses the formula when it applies and the empirical value otherwise.
    """
    L_r, n_r = reward_lipschitz(mdp, None if max_pairs is None else 10 * max_pairs, seed)
    L_f, n_f, how = transition_lipschitz(mdp, max_pairs, seed)
    if mode == "prop5_bound" or (mode == "auto" and mdp.gamma * L_f < 1):
        return LipschitzEstimates(L_r, L_f, lipschitz_value_bound(L_r, L_f, mdp.gamma), "prop5_bound", n_f, how)
    if mode not in ("auto", "empirical"):
        raise BoundDomainError(f"unknown Lipschitz mode {mode!r}")
    if V_star is None:
        from .regret import optimal_value

        V_star = optimal_value(mdp)[0]
    return LipschitzEstimates(L_r, L_f, value_lipschitz(mdp, V_star), "empirical", n_f, how)


def jump_sizes(mdp: FastSlowMdp) -> tuple[float, float]:
    """Measured (d_Y, alpha): the largest one-step fast jump, and the largest
    slow jump relative to it."""
    K = mdp.kernel.joint_csr().tocoo()
    s = K.row // mdp.n_actions
    xs, ys = mdp.slow_of(s), mdp.fast_of(s)
    x2, y2 = mdp.slow_of(K.col), mdp.fast_of(K.col)
    dy = np.linalg.norm(mdp.fast_states[ys] - mdp.fast_states[y2], axis=1).max(initial=0.0)
    dx = np.linalg.norm(mdp.slow_states[xs] - mdp.slow_states[x2], axis=1).max(initial=0.0)
    if dy == 0:
        return 0.0, 0.0 if dx == 0 else float("inf")
    return float(dy), float(dx / dy)


__all__ = [
    "LipschitzEstimates",
    "estimate_lipschitz",
    "jump_sizes",
    "reward_lipschitz",
    "transition_lipschitz",
    "value_lipschitz",
    "wasserstein1",
]
