"""Approximate value iteration with anchor-state linear architectures.

Every variant evaluates Bellman targets at anchor states only and projects
them onto weights with ``[L^-1 0]``.  Expectations are either exact
(``n_succ=None`` / ``sim=None``) or Monte Carlo averages whose random numbers
are shared across actions at the same (state, iteration).  Policies are
snapshotted after complete iterations only, and extracted at every state with
the same sampled objective under a fresh seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostModel, SolveTrace
from .features import FeatureModel
from .mdp import FastSlowMdp
from .nominal import NominalDecomposition, build_nominal_lower
from .operators import TStepKernel, greedy, q_exact, q_frozen, q_slow_agnostic, upper_reward
from .policies import FastPolicy, FiniteHorizonPolicy, StationaryPolicy, TPeriodicPolicy

DENSE = CostModel("dense")
POLICY_STREAM = 1_000_003  # offset separating policy-extraction draws from training draws


@dataclass(frozen=True)
class SimConfig:
    """Upper-level simulation budget: ``paths`` sample paths of length T per (state, action)."""

    paths: int = 25

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("need at least one simulated path")


@dataclass(eq=False)
class WeightSeq:
    lower: np.ndarray  # (T, M); row t-1 holds omega_t and the last row is zero
    beta: np.ndarray

    def __post_init__(self):
        if self.lower.shape[0] and np.any(self.lower[-1] != 0):
            raise ValueError("terminal lower weights must be zero")


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _sample_all_actions(mdp: FastSlowMdp, states: np.ndarray, u: np.ndarray, invariant: bool) -> np.ndarray:
    """Successors for every action with shared uniforms ``u`` of shape (len(states), n, 2).

    Returns shape (len(states), n_actions, n).
    """
    nA = mdp.n_actions
    s = np.broadcast_to(states[:, None], u.shape[:2])
    if invariant:
        one = mdp.kernel.sample(s, np.zeros_like(s), u)
        return np.broadcast_to(one[:, None, :], (len(states), nA, u.shape[1]))
    return np.stack([mdp.kernel.sample(s, np.full_like(s, a), u) for a in range(nA)], axis=1)


def _sampled_q(mdp, states, V, n, rng, invariant) -> np.ndarray:
    """r(s,a) + gamma * mean of V over n sampled successors; shape (len(states), nA)."""
    out = np.empty((len(states), mdp.n_actions))
    for lo in range(0, len(states), 2048):
        st = states[lo : lo + 2048]
        succ = _sample_all_actions(mdp, st, rng.random((len(st), n, 2)), invariant)
        out[lo : lo + 2048] = mdp.reward[st] + mdp.gamma * V[succ].mean(axis=2)
    return out


# ---------------------------------------------------------------------------
# base and slow-agnostic AVI
# ---------------------------------------------------------------------------


def avi_base(
    mdp: FastSlowMdp,
    fm: FeatureModel,
    k: int,
    n_succ: int | None = 40,
    seed: int = 0,
    *,
    resample: bool = True,
    cost_model: CostModel = DENSE,
) -> tuple[StationaryPolicy, SolveTrace]:
    """Iterate Phi^dagger H Phi from zero weights.

    ``resample=False`` reuses one sample set for every iteration, which makes
    the sampled operator a fixed contraction.
    """
    if n_succ is not None and n_succ < 1:
        raise ValueError("need at least one successor sample")
    trace = SolveTrace(meta={"method": "base_avi", "k": k, "n_succ": n_succ, "seed": seed})
    anchors = fm.anchors
    invariant = mdp.kernel.action_invariant
    beta = np.zeros(fm.n_features)

    def make_policy(b, i):
        V = fm.values(b)
        if n_succ is None:
            return StationaryPolicy(greedy(q_exact(V, mdp))[1])
        Q = _sampled_q(mdp, np.arange(mdp.n_states), V, n_succ, _rng(seed, POLICY_STREAM + i), invariant)
        return StationaryPolicy(greedy(Q)[1])

    trace.snapshot(lambda: make_policy(beta, 0), "initial")
    deltas = []
    for i in range(k):
        V = fm.values(beta)
        if n_succ is None:
            target = greedy(q_exact(V, mdp)[anchors])[0]
            n_s, units = cost_model.joint(mdp, anchors)
        else:
            rng = _rng(seed, i if resample else 0)
            target = greedy(_sampled_q(mdp, anchors, V, n_succ, rng, invariant))[0]
            n_s, units = n_succ, len(anchors) * mdp.n_actions * n_succ
        new = fm.project(target)
        deltas.append(float(np.max(np.abs(new - beta))))
        beta = new
        trace.charge("iteration", len(anchors), mdp.n_actions, n_s, units)
        trace.snapshot(lambda b=beta, i=i + 1: make_policy(b, i), f"iteration {i + 1}")
    trace.values.update(beta=beta, beta_deltas=deltas)
    return make_policy(beta, k), trace


def avi_slow_agnostic(
    mdp: FastSlowMdp,
    fm_y: FeatureModel,
    k: int,
    n_succ: int | None = 20,
    seed: int = 0,
    *,
    resample: bool = True,
) -> tuple[FastPolicy, SolveTrace]:
    """Iterate Phi^dagger H_fast Phi over fast-state features.

    A sample draws a slow state uniformly, then a fast successor from the
    frozen kernel at that slow state.
    """
    if n_succ is not None and n_succ < 1:
        raise ValueError("need at least one successor sample")
    trace = SolveTrace(meta={"method": "slow_agnostic_avi", "k": k, "n_succ": n_succ, "seed": seed})
    nX, nY, nA = mdp.n_slow, mdp.n_fast, mdp.n_actions
    fk = mdp.frozen
    invariant = bool(np.all(fk.index == fk.index[:, :1]))

    def sampled(ys, W, rng):
        m = len(ys)
        x = np.minimum((rng.random((m, n_succ)) * nX).astype(np.int64), nX - 1)
        u = rng.random((m, n_succ))
        s = x * nY + ys[:, None]
        Q = np.empty((m, nA))
        for a in range(nA):
            if a == 0 or not invariant:
                y2 = fk.sample(s, np.full_like(s, a), u)
            Q[:, a] = (mdp.reward[s, a] + mdp.gamma * W[y2]).mean(axis=1)
        return Q

    def make_policy(w, i):
        W = fm_y.values(w)
        if n_succ is None:
            return FastPolicy(greedy(q_slow_agnostic(W, mdp))[1])
        return FastPolicy(greedy(sampled(np.arange(nY), W, _rng(seed, POLICY_STREAM + i)))[1])

    w = np.zeros(fm_y.n_features)
    trace.snapshot(lambda: make_policy(w, 0), "initial")
    deltas = []
    for i in range(k):
        W = fm_y.values(w)
        if n_succ is None:
            target = greedy(q_slow_agnostic(W, mdp)[fm_y.anchors])[0]
            n_s = nX * nY
        else:
            target = greedy(sampled(fm_y.anchors, W, _rng(seed, i if resample else 0)))[0]
            n_s = n_succ
        new = fm_y.project(target)
        deltas.append(float(np.max(np.abs(new - w))))
        w = new
        trace.charge("iteration", len(fm_y.anchors), nA, n_s)
        trace.snapshot(lambda b=w, i=i + 1: make_policy(b, i), f"iteration {i + 1}")
    trace.values.update(beta=w, beta_deltas=deltas)
    return make_policy(w, k), trace


# ---------------------------------------------------------------------------
# frozen-state AVI
# ---------------------------------------------------------------------------


class _LowerPolicyMeter:
    """Charges a lower-policy evaluation the first time a (t, state) is visited.

    Anchor states are free: their greedy actions come out of the lower backups.
    """

    def __init__(self, mdp: FastSlowMdp, T: int, trace: SolveTrace, cost_model: CostModel, anchors: np.ndarray):
        self.mdp, self.trace, self.cost_model = mdp, trace, cost_model
        self.seen = np.zeros((max(T - 1, 0), mdp.n_states), dtype=bool)
        self.seen[:, anchors] = True

    def visit(self, t: int, states: np.ndarray) -> None:
        new = np.unique(states[~self.seen[t - 1, states]])
        if len(new):
            self.seen[t - 1, new] = True
            n_s, units = self.cost_model.frozen(self.mdp, new)
            self.trace.charge(f"lower policy t={t}", len(new), self.mdp.n_actions, n_s, units)


def _simulate_upper(mdp, states, J1, V, pi_tables, T, paths, rng, invariant, meter=None) -> np.ndarray:
    """Sampled upper objective r + gamma J1(s1) + gamma^T V(s_T); shape (len(states), nA).

    Paths start from s1 ~ P(.|s0, a) and follow the lower policy; the uniforms
    are shared across actions, so action-invariant kernels simulate one path set.
    """
    nA = mdp.n_actions
    gT = mdp.gamma**T
    out = np.empty((len(states), nA))
    for lo in range(0, len(states), 1024):
        st = states[lo : lo + 1024]
        u = rng.random((len(st), paths, T, 2))
        s = _sample_all_actions(mdp, st, u[:, :, 0], invariant)  # (m, nA, paths)
        if invariant:
            s = s[:, :1]
        s1 = s
        for t in range(1, T):
            if meter is not None:
                meter.visit(t, s.ravel())
            a = pi_tables[t - 1][s]
            ut = np.broadcast_to(u[:, None, :, t], s.shape + (2,))
            s = mdp.kernel.sample(s, a, ut)
        cont = (mdp.gamma * J1[s1] + gT * V[s]).mean(axis=2)
        out[lo : lo + 1024] = mdp.reward[st] + cont
    return out


def _upper_avi(mdp, fm, T, k, J1, pi, trace, sim, seed, meter, cost_model):
    """Upper-level AVI shared by FSAVI and Nominal FSAVI; returns (beta, make_policy)."""
    anchors = fm.anchors
    invariant = mdp.kernel.action_invariant
    pi_tables = np.stack([pi[t] for t in range(1, T)]) if T > 1 else np.zeros((0, mdp.n_states), np.int64)
    gT = mdp.gamma**T
    if sim is None:
        tk = TStepKernel(mdp, pi)
        R_up = upper_reward(mdp, J1)
        if T > 1:
            n = mdp.n_states
            trace.charge("compose", n, 1, n * T, units=n * n * T)
            n_s, units = cost_model.joint(mdp)
            trace.charge("upper reward", n, mdp.n_actions, n_s, units)

    def objective(states, V, rng, metered):
        if sim is None:
            return (R_up + gT * tk.expect(V))[states]
        return _simulate_upper(mdp, states, J1, V, pi_tables, T, sim.paths, rng, invariant, meter if metered else None)

    def make_policy(b, i):
        Q = objective(np.arange(mdp.n_states), fm.values(b), _rng(seed, POLICY_STREAM + i), False)
        return TPeriodicPolicy(greedy(Q)[1], pi)

    beta = np.zeros(fm.n_features)
    trace.snapshot(lambda: make_policy(beta, 0), "initial")
    deltas, phi_deltas = [], []
    n_act = 1 if (sim is not None and invariant) else mdp.n_actions
    for i in range(k):
        target = greedy(objective(anchors, fm.values(beta), _rng(seed, i), True))[0]
        new = fm.project(target)
        deltas.append(float(np.max(np.abs(new - beta))))
        phi_deltas.append(float(np.max(np.abs(fm.values(new - beta)))))
        beta = new
        if sim is None:
            trace.charge("upper iteration", len(anchors), mdp.n_actions, mdp.n_states)
        else:
            trace.charge("upper iteration", len(anchors), n_act, sim.paths * T)
        trace.snapshot(lambda b=beta, i=i + 1: make_policy(b, i), f"iteration {i + 1}")
    trace.values.update(beta=beta, beta_deltas=deltas, phi_deltas=phi_deltas)
    return beta, make_policy


def fsavi(
    mdp: FastSlowMdp,
    fm: FeatureModel,
    T: int,
    k: int,
    sim: SimConfig | None = SimConfig(),
    seed: int = 0,
    *,
    cost_model: CostModel = DENSE,
) -> tuple[TPeriodicPolicy, WeightSeq, SolveTrace]:
    """Frozen-state AVI: projected frozen lower level, then a simulated upper level.

    The lower backups at anchors use exact frozen expectations.  With
    ``sim=None`` the upper level is exact as well (T-step kernel expectation).
    """
    if T < 1:
        raise ValueError("period T must be at least 1")
    trace = SolveTrace(meta={"method": "fsavi", "T": T, "k": k, "seed": seed, "paths": None if sim is None else sim.paths})
    anchors, nA = fm.anchors, mdp.n_actions
    omega = np.zeros((T, fm.n_features))
    steps: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * (T - 1)
    for t in range(T - 1, 0, -1):
        J_next = fm.values(omega[t])
        Q = q_frozen(J_next, mdp)
        omega[t - 1] = fm.project(greedy(Q[anchors])[0])
        steps[t - 1] = greedy(Q)[1]
        n_s, units = cost_model.frozen(mdp, anchors)
        trace.charge(f"lower t={t}", len(anchors), nA, n_s, units)
    pi = FiniteHorizonPolicy(steps)
    meter = None
    if T > 1:
        if sim is None:
            rest = np.setdiff1d(np.arange(mdp.n_states), anchors)
            for t in range(1, T):
                if len(rest):
                    n_s, units = cost_model.frozen(mdp, rest)
                    trace.charge(f"lower policy t={t}", len(rest), nA, n_s, units)
        else:
            meter = _LowerPolicyMeter(mdp, T, trace, cost_model, anchors)
    J1 = fm.values(omega[0]) if T > 1 else np.zeros(mdp.n_states)
    beta, make_policy = _upper_avi(mdp, fm, T, k, J1, pi, trace, sim, seed, meter, cost_model)
    trace.values["omega"] = omega
    return make_policy(beta, k), WeightSeq(omega, beta), trace


def nominal_fsavi(
    mdp: FastSlowMdp,
    fm: FeatureModel,
    fm_y: FeatureModel,
    T: int,
    k: int,
    nominal_xs,
    decomp: NominalDecomposition,
    sim: SimConfig | None = SimConfig(),
    seed: int = 0,
    *,
    cost_model: CostModel = DENSE,
) -> tuple[TPeriodicPolicy, WeightSeq, SolveTrace]:
    """Nominal lower level over fast-state features, then the FSAVI upper level."""
    trace = SolveTrace(
        meta={"method": "nominal_fsavi", "T": T, "k": k, "seed": seed, "paths": None if sim is None else sim.paths}
    )
    J, pi, _ = build_nominal_lower(mdp, T, nominal_xs, decomp, fm_y=fm_y, trace=trace, cost_model=cost_model)
    J1 = J[1]
    beta, make_policy = _upper_avi(mdp, fm, T, k, J1, pi, trace, sim, seed, None, cost_model)
    omega = np.stack([fm.project(J[t]) for t in range(1, T + 1)])
    trace.values["J"] = J
    return make_policy(beta, k), WeightSeq(omega, beta), trace


__all__ = ["SimConfig", "WeightSeq", "avi_base", "avi_slow_agnostic", "fsavi", "nominal_fsavi"]
