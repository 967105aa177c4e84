"""Exact policy evaluation, optimal values and measured regret."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..mdp import FastSlowMdp
from ..operators import greedy, q_exact
from ..policies import FastPolicy, StationaryPolicy, TPeriodicPolicy

DENSE_LIMIT = 3000


class NonConvergedReference(ValueError):
    """The reference optimal value is not converged tightly enough."""


def policy_matrix(mdp: FastSlowMdp, actions: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(mdp.kernel.rows_for(np.arange(mdp.n_states), np.asarray(actions)))


def _reward_of(mdp: FastSlowMdp, actions) -> np.ndarray:
    return mdp.reward[np.arange(mdp.n_states), np.asarray(actions)]


def stationary_value(mdp: FastSlowMdp, actions) -> np.ndarray:
    """Solve (I - gamma P_pi) V = r_pi."""
    P = policy_matrix(mdp, actions)
    A = sp.identity(mdp.n_states, format="csc") - mdp.gamma * P.tocsc()
    return np.asarray(spla.spsolve(A, _reward_of(mdp, actions)))


def periodic_value(mdp: FastSlowMdp, policy: TPeriodicPolicy) -> np.ndarray:
    """Period-start value of a T-periodic policy.

    With rho the expected discounted reward of one T-step block and K the
    T-step kernel of the block, the value solves (I - gamma^T K) U = rho.
    """
    g = mdp.gamma
    steps = [policy.mu, *policy.pi.steps]
    T = len(steps)
    mats = [policy_matrix(mdp, a) for a in steps]
    rho = np.zeros(mdp.n_states)
    for t in range(T - 1, -1, -1):
        rho = _reward_of(mdp, steps[t]) + g * (mats[t] @ rho)
    gT = g**T
    if mdp.n_states <= DENSE_LIMIT:
        K = np.eye(mdp.n_states)
        for t in range(T - 1, -1, -1):
            K = mats[t] @ K
        return np.linalg.solve(np.eye(mdp.n_states) - gT * K, rho)

    def matvec(v):
        w = v
        for t in range(T - 1, -1, -1):
            w = mats[t] @ w
        return v - gT * w

    op = spla.LinearOperator((mdp.n_states, mdp.n_states), matvec=matvec)
    U, info = spla.gmres(op, rho, rtol=1e-13, atol=0.0, restart=50, maxiter=2000)
    if info != 0:
        raise RuntimeError("periodic evaluation did not converge")
    return U


def policy_value(mdp: FastSlowMdp, policy) -> np.ndarray:
    """Exact value of any policy kind from period start."""
    if isinstance(policy, FastPolicy):
        policy = policy.to_stationary(mdp.n_slow)
    if isinstance(policy, StationaryPolicy):
        return stationary_value(mdp, policy.actions)
    if isinstance(policy, TPeriodicPolicy):
        return periodic_value(mdp, policy)
    raise TypeError(f"cannot evaluate {type(policy).__name__}")


def bellman_residual(mdp: FastSlowMdp, V: np.ndarray) -> float:
    return float(np.max(np.abs(greedy(q_exact(V, mdp))[0] - V)))


def optimal_value(mdp: FastSlowMdp, max_iter: int = 200) -> tuple[np.ndarray, StationaryPolicy, float]:
    """Policy iteration to an exact fixed point; returns (V*, nu*, residual)."""
    V = np.zeros(mdp.n_states)
    for _ in range(50):
        V = greedy(q_exact(V, mdp))[0]
    a = greedy(q_exact(V, mdp))[1]
    for _ in range(max_iter):
        V = stationary_value(mdp, a)
        Q = q_exact(V, mdp)
        best = Q.max(axis=1)
        # switch only on strict improvement so the iteration cannot cycle on ties
        cur = Q[np.arange(mdp.n_states), a]
        improve = best > cur + 1e-12 * np.maximum(1.0, np.abs(cur))
        if not improve.any():
            break
        a = np.where(improve, Q.argmax(axis=1), a)
    return V, StationaryPolicy(a), bellman_residual(mdp, V)


def measured_regret(mdp: FastSlowMdp, policy, reference: np.ndarray | None = None, tol: float = 1e-10) -> float:
    """max_s U*(s) - U^policy(s), both from exact linear solves."""
    if reference is None:
        reference, _, res = optimal_value(mdp)
    else:
        res = bellman_residual(mdp, reference)
    if res > tol:
        raise NonConvergedReference(f"reference residual {res:.3g} exceeds {tol:.1g}")
    return float(np.max(reference - policy_value(mdp, policy)))


def check_hierarchical_equivalence(mdp: FastSlowMdp, T: int) -> float:
    """Sup-norm gap between U* and the T-periodic evaluation of the optimal stationary policy."""
    V, nu, _ = optimal_value(mdp)
    periodic = TPeriodicPolicy(nu.actions, [nu.actions] * (T - 1))
    return float(np.max(np.abs(V - periodic_value(mdp, periodic))))
