"""Seeded random fast-slow MDPs with controllable jump sizes.

Fast states sit on the integer line and may jump at most ``floor(d_Y)``
places per step.  Slow states sit on a line with spacing ``alpha * d_Y`` and
move at most one place, so every slow jump is bounded by ``alpha * d_Y``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..mdp import FastSlowMdp, JointKernel, build_mdp


class FixtureError(ValueError):
    pass


def _dirichlet_rows(rng, n_rows: int, n_cols: int) -> np.ndarray:
    w = rng.exponential(size=(n_rows, n_cols))
    return w / w.sum(axis=1, keepdims=True)


def make_random_fastslow(
    seed: int,
    n_slow: int = 3,
    n_fast: int = 4,
    n_actions: int = 2,
    alpha: float = 0.1,
    d_Y: float = 1.0,
    reward_mode: str = "generic",
    zeta: float = 0.0,
    x_free: bool = False,
    gamma: float = 0.9,
) -> FastSlowMdp:
    """Random fast-slow MDP.

    ``reward_mode`` is ``generic`` (uniform on [0, 1]) or ``factored``
    (g(x) + h(y, a) plus uniform noise of magnitude at most ``zeta``).  With
    ``x_free`` neither the fast dynamics nor the reward depend on x.
    """
    if min(n_slow, n_fast, n_actions) < 1:
        raise FixtureError("sizes must be at least 1")
    if alpha < 0 or d_Y < 1:
        raise FixtureError("need alpha >= 0 and d_Y >= 1 so fast states can move on the integer grid")
    if reward_mode not in ("generic", "factored"):
        raise FixtureError(f"unknown reward mode {reward_mode!r}")
    rng = np.random.default_rng([seed, 1729])
    nX, nY, nA = n_slow, n_fast, n_actions
    spacing = alpha * d_Y if alpha > 0 else 1.0
    slow_coords = spacing * np.arange(nX, dtype=float)
    fast_coords = np.arange(nY, dtype=float)
    reach = int(np.floor(d_Y))

    rows, cols, vals = [], [], []
    fast_table = None
    if x_free:
        fast_table = {}
        for y in range(nY):
            for a in range(nA):
                ys = np.arange(max(0, y - reach), min(nY, y + reach + 1))
                fast_table[y, a] = (ys, _dirichlet_rows(rng, 1, len(ys))[0])
    for x in range(nX):
        xs = np.array([x]) if alpha == 0 else np.arange(max(0, x - 1), min(nX, x + 2))
        for y in range(nY):
            for a in range(nA):
                r = (x * nY + y) * nA + a
                if fast_table is not None:
                    ys, py = fast_table[y, a]
                    px = _dirichlet_rows(rng, 1, len(xs))[0]
                    joint = np.outer(px, py)
                else:
                    ys = np.arange(max(0, y - reach), min(nY, y + reach + 1))
                    joint = _dirichlet_rows(rng, 1, len(xs) * len(ys))[0].reshape(len(xs), len(ys))
                for i, x2 in enumerate(xs):
                    for j, y2 in enumerate(ys):
                        rows.append(r)
                        cols.append(x2 * nY + y2)
                        vals.append(joint[i, j])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(nX * nY * nA, nX * nY))
    kernel = JointKernel(K, nX, nY, nA)

    meta = {"fixture": "random_fastslow", "seed": seed, "alpha": alpha, "d_Y": d_Y, "zeta": 0.0}
    if reward_mode == "generic":
        if x_free:
            R = np.broadcast_to(rng.random((1, nY, nA)), (nX, nY, nA)).copy()
        else:
            R = rng.random((nX, nY, nA))
    else:
        g = np.zeros(nX) if x_free else rng.random(nX)
        h = rng.random((nY, nA))
        noise = rng.uniform(-zeta, zeta, size=(nX, nY, nA)) if zeta > 0 else np.zeros((nX, nY, nA))
        R = g[:, None, None] + h[None] + noise
        meta.update(zeta=float(zeta), g=g.tolist(), h=h.tolist())
    return build_mdp(slow_coords, fast_coords, np.arange(nA), R, kernel, gamma, meta)


def fixture_decomposition(mdp: FastSlowMdp):
    """The additive decomposition a factored fixture was generated from."""
    from ..nominal import NominalDecomposition

    m = mdp.meta
    if "g" not in m:
        raise FixtureError("fixture was not built in factored mode")
    return NominalDecomposition("additive", np.asarray(m["g"]), np.asarray(m["h"]), m["zeta"])


def make_random_mdp(seed: int, n_states: int = 6, n_actions: int = 2, support: int | None = None, gamma: float = 0.9):
    """Plain random MDP (a single slow state) with rewards in [0, 1]."""
    rng = np.random.default_rng([seed, 31337])
    support = n_states if support is None else min(support, n_states)
    rows, cols, vals = [], [], []
    for r in range(n_states * n_actions):
        succ = rng.choice(n_states, size=support, replace=False)
        p = _dirichlet_rows(rng, 1, support)[0]
        rows += [r] * support
        cols += succ.tolist()
        vals += p.tolist()
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n_states * n_actions, n_states))
    R = rng.random((1, n_states, n_actions))
    return build_mdp(
        np.zeros((1, 1)), np.arange(n_states, dtype=float), np.arange(n_actions), R,
        JointKernel(K, 1, n_states, n_actions), gamma, {"fixture": "random_mdp", "seed": seed},
    )  # fmt: skip


def make_chain(rewards, successor, gamma: float = 0.9) -> FastSlowMdp:
    """Deterministic single-action chain: state i moves to ``successor[i]``."""
    n = len(successor)
    K = sp.csr_matrix((np.ones(n), (np.arange(n), np.asarray(successor))), shape=(n, n))
    R = np.asarray(rewards, float).reshape(1, n, 1)
    return build_mdp(np.zeros((1, 1)), np.arange(n, dtype=float), np.zeros((1, 1)), R, JointKernel(K, 1, n, 1), gamma)
