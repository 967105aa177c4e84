"""Bellman operators of the base model, the frozen lower level, the
slow-agnostic baseline and the upper level, plus T-step kernel composition.

All maximizations break ties toward the lowest action index (``np.argmax``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mdp import FastSlowMdp, FrozenKernel
from .policies import FastPolicy, FiniteHorizonPolicy, StationaryPolicy


def greedy(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row maxima and lowest maximizing column of a Q table."""
    a = np.argmax(Q, axis=-1)
    return np.take_along_axis(Q, a[..., None], axis=-1)[..., 0], a


class LowerValueSeq:
    """Lower-level values ``J_1 .. J_T`` with ``J_T`` identically zero.

    Stored as a ``(T, n_states)`` array; ``seq[t]`` is ``J_t`` (1-based).
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("lower values must be a (T, n_states) array")
        if np.any(values[-1] != 0.0):
            raise ValueError("terminal lower value J_T must be identically zero")
        self.values = values

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise IndexError(f"lower period {t} outside 1..{self.T}")
        return self.values[t - 1]

    def __len__(self) -> int:
        return self.T


# ---------------------------------------------------------------------------
# one-step operators
# ---------------------------------------------------------------------------


def q_exact(V: np.ndarray, mdp: FastSlowMdp) -> np.ndarray:
    return mdp.reward + mdp.gamma * mdp.expect(V)


def backup_exact(V: np.ndarray, mdp: FastSlowMdp) -> tuple[np.ndarray, StationaryPolicy]:
    """One application of the base-model Bellman operator."""
    v, a = greedy(q_exact(V, mdp))
    return v, StationaryPolicy(a)


def q_frozen(J_next: np.ndarray, mdp: FastSlowMdp, frozen: FrozenKernel | None = None, xs=None) -> np.ndarray:
    frozen = mdp.frozen if frozen is None else frozen
    E = frozen.expect(J_next, xs)
    if xs is None:
        R = mdp.reward
    else:
        R = mdp.reward_xya()[np.asarray(xs)].reshape(-1, mdp.n_actions)
    return R + mdp.gamma * E


def backup_frozen(
    J_next: np.ndarray, mdp: FastSlowMdp, frozen: FrozenKernel | None = None
) -> tuple[np.ndarray, StationaryPolicy]:
    """Lower-level backup: the slow state never moves."""
    v, a = greedy(q_frozen(J_next, mdp, frozen))
    return v, StationaryPolicy(a)


def q_slow_agnostic(W: np.ndarray, mdp: FastSlowMdp, frozen: FrozenKernel | None = None) -> np.ndarray:
    frozen = mdp.frozen if frozen is None else frozen
    Q = mdp.reward + mdp.gamma * frozen.expect_fast(W)
    return Q.reshape(mdp.n_slow, mdp.n_fast, mdp.n_actions).mean(axis=0)


def backup_slow_agnostic(
    W: np.ndarray, mdp: FastSlowMdp, frozen: FrozenKernel | None = None
) -> tuple[np.ndarray, FastPolicy]:
    """Fast-only backup averaging the Bellman target uniformly over slow states."""
    v, a = greedy(q_slow_agnostic(W, mdp, frozen))
    return v, FastPolicy(a)


# ---------------------------------------------------------------------------
# T-step composition and the upper level
# ---------------------------------------------------------------------------


def policy_step(V: np.ndarray, mdp: FastSlowMdp, actions: np.ndarray) -> np.ndarray:
    """(P_pi V)(s) = E[V(s') | s, pi(s)] under the true kernel."""
    E = mdp.expect(V)
    return E[np.arange(mdp.n_states), actions]


@dataclass(eq=False)
class TStepKernel:
    """State distribution T steps ahead: action ``a`` first, then ``pi_1 .. pi_{T-1}``.

    The kernel is kept in factored form; ``expect`` pushes a value table
    backwards through the policy steps and then through the first transition,
    which costs ``T`` one-step expectations instead of an ``|S|^2`` table.
    ``dense`` materializes the rows for small instances.
    """

    mdp: FastSlowMdp
    pi: FiniteHorizonPolicy

    @property
    def T(self) -> int:
        return len(self.pi) + 1

    def tail(self, V: np.ndarray) -> np.ndarray:
        """E[V(s_T) | s_1] under pi_1 .. pi_{T-1}."""
        W = np.asarray(V, float)
        for t in range(self.T - 1, 0, -1):
            W = policy_step(W, self.mdp, self.pi[t])
        return W

    def expect(self, V: np.ndarray) -> np.ndarray:
        return self.mdp.expect(self.tail(V))

    def policy_matrix(self, actions: np.ndarray) -> sp.csr_matrix:
        mdp = self.mdp
        return sp.csr_matrix(mdp.kernel.rows_for(np.arange(mdp.n_states), actions))

    def dense(self) -> np.ndarray:
        """``(n_states * n_actions, n_states)`` array of T-step probabilities."""
        mdp = self.mdp
        M = np.eye(mdp.n_states)
        for t in range(self.T - 1, 0, -1):
            M = self.policy_matrix(self.pi[t]) @ M
        return np.asarray(mdp.kernel.joint_csr() @ M)


def compose_t_step(mdp: FastSlowMdp, pi: FiniteHorizonPolicy, T: int) -> TStepKernel:
    if T < 1:
        raise ValueError("period T must be at least 1")
    if len(pi) != T - 1:
        raise ValueError(f"lower policy has {len(pi)} steps, expected T-1 = {T - 1}")
    return TStepKernel(mdp, pi)


def upper_reward(mdp: FastSlowMdp, J1: np.ndarray) -> np.ndarray:
    """One-step approximation of the T-period reward: r(s,a) + gamma E[J_1(s_1)]."""
    return mdp.reward + mdp.gamma * mdp.expect(J1)


def q_upper(V: np.ndarray, R_up: np.ndarray, tk: TStepKernel, T: int) -> np.ndarray:
    return R_up + tk.mdp.gamma**T * tk.expect(V)


def backup_upper(
    V: np.ndarray, J1: np.ndarray, tk: TStepKernel, mdp: FastSlowMdp, T: int
) -> tuple[np.ndarray, StationaryPolicy]:
    """Upper-level backup with discount gamma^T over T-step blocks."""
    v, a = greedy(q_upper(V, upper_reward(mdp, J1), tk, T))
    return v, StationaryPolicy(a)
