"""Tabular Q-learning on transitions simulated from the true kernel."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .costs import SolveTrace
from .mdp import FastSlowMdp
from .policies import StationaryPolicy


@dataclass(frozen=True)
class QLearningHyper:
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5  # share of the budget over which epsilon decays linearly
    lr_power: float = 0.6  # step size n^{-lr_power} on the visit count n
    episode_length: int = 100  # restart from a uniformly drawn state this often
    n_snapshots: int = 50
    chunk: int = 200_000


@njit(cache=True)
def _draw(ptr, cols, keys, row, u):
    lo = ptr[row]
    hi = ptr[row + 1]
    j = lo + np.searchsorted(keys[lo:hi], row + u, side="right")
    if j > hi - 1:
        j = hi - 1
    return cols[j]


@njit(cache=True)
def _run_chunk(
    Q, N, s, t0, n, budget, R, gamma,
    p1, c1, k1, i1, mult, p2, c2, k2, i2,
    u, starts, eps_start, eps_end, decay_steps, lr_power, episode_length,
):  # fmt: skip
    nA = Q.shape[1]
    for i in range(n):
        t = t0 + i
        if t % episode_length == 0:
            s = starts[i]
        frac = t / decay_steps if decay_steps > 0 else 1.0
        eps = eps_end if frac >= 1.0 else eps_start + (eps_end - eps_start) * frac
        if u[i, 0] < eps:
            a = min(int(u[i, 1] * nA), nA - 1)
        else:
            a = 0
            best = Q[s, 0]
            for b in range(1, nA):
                if Q[s, b] > best:
                    best = Q[s, b]
                    a = b
        x2 = _draw(p1, c1, k1, i1[s, a], u[i, 2])
        y2 = _draw(p2, c2, k2, i2[s, a], u[i, 3])
        s2 = x2 * mult + y2
        N[s, a] += 1
        lr = N[s, a] ** (-lr_power)
        target = R[s, a] + gamma * np.max(Q[s2])
        Q[s, a] += lr * (target - Q[s, a])
        s = s2
    return s


def q_learning(
    mdp: FastSlowMdp,
    step_budget: int,
    hyper: QLearningHyper | None = None,
    seed: int = 0,
) -> tuple[StationaryPolicy, SolveTrace]:
    """Epsilon-greedy tabular Q-learning; each update costs |A| units."""
    if step_budget < 0:
        raise ValueError("step budget must be nonnegative")
    hp = QLearningHyper() if hyper is None else hyper
    trace = SolveTrace(meta={"method": "q_learning", "budget": step_budget, "seed": seed, "hyper": asdict(hp)})
    nS, nA = mdp.n_states, mdp.n_actions
    Q = np.zeros((nS, nA))
    N = np.zeros((nS, nA))
    if step_budget == 0:
        trace.snapshot(lambda: StationaryPolicy(np.zeros(nS, dtype=np.int64)), "initial")
        trace.values["Q"] = Q
        return StationaryPolicy(np.argmax(Q, axis=1)), trace
    (p1, c1, k1, i1), mult, (p2, c2, k2, i2) = mdp.kernel.sampler_tables()
    rng = np.random.default_rng([seed, 7])
    marks = np.unique(np.linspace(0, step_budget, hp.n_snapshots + 1).round().astype(np.int64))[1:]
    decay = hp.eps_decay_fraction * step_budget
    s, t = 0, 0
    for mark in marks:
        while t < mark:
            n = int(min(hp.chunk, mark - t))
            u = rng.random((n, 4))
            starts = rng.integers(nS, size=n)
            s = _run_chunk(
                Q, N, s, t, n, step_budget, mdp.reward, mdp.gamma,
                p1, c1, k1, i1, mult, p2, c2, k2, i2,
                u, starts, hp.eps_start, hp.eps_end, decay, hp.lr_power, hp.episode_length,
            )  # fmt: skip
            trace.charge("q update", n, nA, 1)
            t += n
        snap = np.argmax(Q, axis=1)
        trace.snapshot(lambda a=snap: StationaryPolicy(a), f"step {t}")
    trace.values["Q"] = Q
    return StationaryPolicy(np.argmax(Q, axis=1)), trace
