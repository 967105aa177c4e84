"""Cost-metered tabular solvers: exact VI, frozen-state VI and slow-agnostic VI.

Sweeps are Jacobi updates (every state is backed up against the previous
table).  To trace performance *within* a sweep, the states are visited in a
seed-shuffled order and a snapshot is dropped after every ``cadence`` updates;
the snapshot policy is greedy with respect to the half-updated table.
"""

from __future__ import annotations

import numpy as np

from .costs import CostModel, SolveTrace, prefix_bounds
from .mdp import FastSlowMdp
from .operators import (
    LowerValueSeq,
    TStepKernel,
    compose_t_step,
    greedy,
    q_exact,
    q_frozen,
    q_slow_agnostic,
    upper_reward,
)
from .policies import FastPolicy, FiniteHorizonPolicy, StationaryPolicy, TPeriodicPolicy

DENSE = CostModel("dense")


def _sweep(
    trace: SolveTrace,
    V: np.ndarray,
    V_new: np.ndarray,
    rng: np.random.Generator,
    cadence: int | None,
    charge_prefix,
    make_policy,
    label: str,
) -> None:
    """Charge one sweep in shuffled prefixes, snapshotting after each."""
    n = len(V)
    order = rng.permutation(n) if cadence else np.arange(n)
    lo = 0
    for hi in prefix_bounds(n, cadence):
        charge_prefix(order[lo:hi])
        if hi == n:
            trace.snapshot(lambda W=V_new: make_policy(W), label)
        else:
            idx = order[:hi]

            def half(idx=idx):
                W = V.copy()
                W[idx] = V_new[idx]
                return make_policy(W)

            trace.snapshot(half, label)
        lo = hi


def exact_vi(
    mdp: FastSlowMdp,
    k: int,
    V0: np.ndarray | None = None,
    *,
    seed: int = 0,
    cadence: int | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[np.ndarray, StationaryPolicy, SolveTrace]:
    """``k`` sweeps of the base-model Bellman operator."""
    if k < 0:
        raise ValueError("iteration count must be nonnegative")
    V = np.zeros(mdp.n_states) if V0 is None else np.array(V0, dtype=float)
    trace = SolveTrace(meta={"method": "base_vi", "k": k, "seed": seed, "successors": cost_model.successors})

    def make_policy(W):
        return StationaryPolicy(greedy(q_exact(W, mdp))[1])

    def charge(states):
        n_succ, units = cost_model.joint(mdp, states)
        trace.charge("sweep", len(states), mdp.n_actions, n_succ, units)

    if k == 0:
        trace.snapshot(lambda W=V: make_policy(W), "initial")
    for i in range(k):
        V_new = greedy(q_exact(V, mdp))[0]
        _sweep(trace, V, V_new, np.random.default_rng([seed, i]), cadence, charge, make_policy, f"sweep {i + 1}")
        V = V_new
    trace.values["V"] = V
    return V, make_policy(V), trace


def solve_lower_frozen(
    mdp: FastSlowMdp,
    T: int,
    *,
    per_slow_state: bool = False,
    trace: SolveTrace | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[LowerValueSeq, FiniteHorizonPolicy, SolveTrace]:
    """Backward induction of the frozen lower level from ``J_T = 0``.

    With ``per_slow_state`` every slow state is solved as its own small MDP;
    the result is bit-identical to the joint solve.
    """
    if T < 1:
        raise ValueError("period T must be at least 1")
    trace = SolveTrace(meta={"method": "lower_frozen", "T": T}) if trace is None else trace
    J = np.zeros((T, mdp.n_states))
    steps: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * (T - 1)
    nY = mdp.n_fast
    for t in range(T - 1, 0, -1):
        J_next = J[t]
        if per_slow_state:
            a_t = np.empty(mdp.n_states, dtype=np.int64)
            for x in range(mdp.n_slow):
                v, a = greedy(q_frozen(J_next, mdp, xs=[x]))
                J[t - 1, x * nY : (x + 1) * nY] = v
                a_t[x * nY : (x + 1) * nY] = a
        else:
            J[t - 1], a_t = greedy(q_frozen(J_next, mdp))
        steps[t - 1] = a_t
        n_succ, units = cost_model.frozen(mdp)
        trace.charge(f"lower t={t}", mdp.n_states, mdp.n_actions, n_succ, units)
    return LowerValueSeq(J), FiniteHorizonPolicy(steps), trace


def upper_vi(
    mdp: FastSlowMdp,
    T: int,
    k: int,
    J1: np.ndarray,
    pi: FiniteHorizonPolicy,
    trace: SolveTrace,
    *,
    seed: int = 0,
    cadence: int | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[TPeriodicPolicy, np.ndarray, TStepKernel]:
    """Upper-level VI shared by FSVI and Nominal FSVI (starts from V = 0)."""
    tk = compose_t_step(mdp, pi, T)
    if T > 1:
        n = mdp.n_states
        trace.charge("compose", n, 1, n * T, units=n * n * T)
        n_succ, units = cost_model.joint(mdp)
        trace.charge("upper reward", mdp.n_states, mdp.n_actions, n_succ, units)
    R_up = upper_reward(mdp, J1)
    gT = mdp.gamma**T

    def make_policy(W):
        return TPeriodicPolicy(greedy(R_up + gT * tk.expect(W))[1], pi)

    def charge(states):
        if T == 1:
            n_succ, units = cost_model.joint(mdp, states)
        else:
            n_succ, units = mdp.n_states, len(states) * mdp.n_actions * mdp.n_states
        trace.charge("upper sweep", len(states), mdp.n_actions, n_succ, units)

    V = np.zeros(mdp.n_states)
    if k == 0:
        trace.snapshot(lambda W=V: make_policy(W), "initial")
    for i in range(k):
        V_new = greedy(R_up + gT * tk.expect(V))[0]
        _sweep(trace, V, V_new, np.random.default_rng([seed, i]), cadence, charge, make_policy, f"sweep {i + 1}")
        V = V_new
    trace.values["V"] = V
    return make_policy(V), V, tk


def fsvi(
    mdp: FastSlowMdp,
    T: int,
    k: int,
    *,
    seed: int = 0,
    cadence: int | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[TPeriodicPolicy, np.ndarray, SolveTrace]:
    """Frozen-state value iteration: frozen lower level, then ``k`` upper sweeps."""
    if T < 1:
        raise ValueError("period T must be at least 1")
    trace = SolveTrace(meta={"method": "fsvi", "T": T, "k": k, "seed": seed, "successors": cost_model.successors})
    J, pi, _ = solve_lower_frozen(mdp, T, trace=trace, cost_model=cost_model)
    trace.values["J"] = J
    policy, V, _ = upper_vi(mdp, T, k, J[1], pi, trace, seed=seed, cadence=cadence, cost_model=cost_model)
    return policy, V, trace


def slow_agnostic_vi(
    mdp: FastSlowMdp,
    k: int,
    *,
    seed: int = 0,
    cadence: int | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[FastPolicy, SolveTrace]:
    """VI over the fast state alone, averaging targets over all slow states."""
    if k < 0:
        raise ValueError("iteration count must be nonnegative")
    trace = SolveTrace(meta={"method": "slow_agnostic_vi", "k": k, "seed": seed})
    nX, nY, nA = mdp.n_slow, mdp.n_fast, mdp.n_actions
    if cost_model.successors == "support":
        per_y = mdp.frozen.counts().reshape(nX, nY, nA).sum(axis=(0, 2))
    else:
        per_y = np.full(nY, nA * nX * nY)

    def make_policy(W):
        return FastPolicy(greedy(q_slow_agnostic(W, mdp))[1])

    def charge(ys):
        units = int(per_y[ys].sum())
        trace.charge("sweep", len(ys), nA, units / max(len(ys) * nA, 1), units)

    W = np.zeros(nY)
    if k == 0:
        trace.snapshot(lambda U=W: make_policy(U), "initial")
    for i in range(k):
        W_new = greedy(q_slow_agnostic(W, mdp))[0]
        _sweep(trace, W, W_new, np.random.default_rng([seed, i]), cadence, charge, make_policy, f"sweep {i + 1}")
        W = W_new
    trace.values["W"] = W
    return make_policy(W), trace
