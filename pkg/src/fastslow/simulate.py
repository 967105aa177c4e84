"""Monte Carlo policy evaluation under the true joint kernel.

Each seed owns a generator built from ``(seed, seed_index)``, and all
episodes of that seed advance in lockstep, so results depend only on the
seed and never on how evaluations are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

from .mdp import FastSlowMdp

DEFAULT_EPISODES = 200


def rollout_returns(
    mdp: FastSlowMdp,
    policy,
    horizon: int,
    n_seeds: int = 1,
    seed: int = 0,
    n_episodes: int = DEFAULT_EPISODES,
    start_states=None,
) -> np.ndarray:
    """Discounted return of every episode, shape ``(n_seeds, n_episodes)``.

    A T-periodic policy applies ``mu`` at steps ``t % T == 0`` and ``pi_{t % T}``
    otherwise.  Start states are uniform over all states unless given.
    """
    if horizon < 1:
        raise ValueError("evaluation horizon must be at least 1")
    sched = policy.schedule(mdp.n_slow)
    if sched.shape[1] != mdp.n_states:
        raise ValueError(f"policy covers {sched.shape[1]} states, MDP has {mdp.n_states}")
    P = sched.shape[0]
    disc = mdp.gamma ** np.arange(horizon)
    out = np.empty((n_seeds, n_episodes))
    for i in range(n_seeds):
        rng = np.random.default_rng([seed, i])
        if start_states is None:
            s = rng.integers(mdp.n_states, size=n_episodes)
        else:
            s = np.broadcast_to(np.asarray(start_states, dtype=np.int64), (n_episodes,)).copy()
        ret = np.zeros(n_episodes)
        for t in range(horizon):
            a = sched[t % P, s]
            ret += disc[t] * mdp.reward[s, a]
            if t + 1 < horizon:
                s = mdp.kernel.sample(s, a, rng.random((n_episodes, 2)))
        out[i] = ret
    return out


def evaluate_policy(
    mdp: FastSlowMdp,
    policy,
    horizon: int,
    n_seeds: int = 10,
    seed: int = 0,
    n_episodes: int = DEFAULT_EPISODES,
) -> np.ndarray:
    """Per-seed mean discounted return over uniformly drawn start states."""
    return rollout_returns(mdp, policy, horizon, n_seeds, seed, n_episodes).mean(axis=1)
