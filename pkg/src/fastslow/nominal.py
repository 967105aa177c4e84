"""Nominal-state approximation of the lower level for nearly-factored rewards.

The lower level is solved only at a few nominal slow states ``x*`` and the
values elsewhere are recovered from the reward decomposition:

* additive, r(x,y,a) ~ g(x) + h(y,a): shift by the accumulated slow reward gap;
* multiplicative, r(x,y,a) ~ sum_j g_j(x) h_j(x,y,a): rescale each component
  by g_j(x) / g_j(x*).

Every slow state is served by its nearest nominal state (Euclidean distance on
slow coordinates, ties to the earliest nominal state).  At a served state the
fast dynamics of the nominal state are used, so the greedy lower policy at
(x, y) maximizes sum_j c_j(x) Q_j(x*, y, a), where Q_j are the nominal
per-component action values and c_j(x) the correction factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostModel, SolveTrace
from .mdp import FastSlowMdp
from .operators import LowerValueSeq
from .policies import FiniteHorizonPolicy, TPeriodicPolicy

DENSE = CostModel("dense")


class DecompositionError(ValueError):
    pass


@dataclass(eq=False)
class NominalDecomposition:
    """Reward decomposition used to extend nominal lower-level values.

    additive: ``g`` has shape ``(nX,)`` and ``h`` shape ``(nY, nA)``.
    multiplicative: ``g`` has shape ``(nX, K)`` and ``h`` shape ``(nX, nY, nA, K)``.
    """

    mode: str
    g: np.ndarray
    h: np.ndarray
    zeta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("additive", "multiplicative"):
            raise DecompositionError(f"unknown decomposition mode {self.mode!r}")
        self.g = np.asarray(self.g, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        if self.mode == "multiplicative":
            if self.g.ndim == 1:
                self.g = self.g[:, None]
            if self.h.ndim == 3:
                self.h = self.h[..., None]

    @property
    def n_components(self) -> int:
        return 1 if self.mode == "additive" else self.g.shape[1]

    def approx_reward(self) -> np.ndarray:
        """The decomposed reward as an ``(nX, nY, nA)`` table."""
        if self.mode == "additive":
            return self.g[:, None, None] + self.h[None, :, :]
        return np.einsum("xk,xyak->xya", self.g, self.h)

    def gap(self, mdp: FastSlowMdp) -> float:
        return float(np.max(np.abs(self.approx_reward() - mdp.reward_xya())))

    def validate(self, mdp: FastSlowMdp, tol: float = 1e-9) -> float:
        nX, nY, nA = mdp.n_slow, mdp.n_fast, mdp.n_actions
        if self.mode == "additive":
            shapes_ok = self.g.shape == (nX,) and self.h.shape == (nY, nA)
        else:
            K = self.g.shape[1]
            shapes_ok = self.g.shape == (nX, K) and self.h.shape == (nX, nY, nA, K)
        if not shapes_ok:
            raise DecompositionError("decomposition tables do not match the MDP spaces")
        gap = self.gap(mdp)
        if gap > self.zeta + tol:
            raise DecompositionError(f"reward decomposition gap {gap:.3g} exceeds declared zeta {self.zeta:.3g}")
        return gap

    def component_reward(self, x_star: int) -> np.ndarray:
        """Per-component reward at a nominal state, shape ``(nY, nA, K)``."""
        if self.mode == "additive":
            return (self.g[x_star] + self.h)[..., None]
        return self.g[x_star][None, None, :] * self.h[x_star]

    def factors(self, x: np.ndarray, x_star: np.ndarray) -> np.ndarray:
        """Multiplicative correction g_j(x) / g_j(x*), shape ``(len(x), K)``."""
        if self.mode == "additive":
            return np.ones((len(x), 1))
        return self.g[x] / self.g[x_star]


def fit_additive(mdp: FastSlowMdp) -> NominalDecomposition:
    """Two-way least-squares split r ~ g(x) + h(y,a); zeta is the worst residual."""
    R = mdp.reward_xya()
    h = R.mean(axis=0)
    g = R.mean(axis=(1, 2)) - h.mean()
    dec = NominalDecomposition("additive", g, h, 0.0)
    dec.zeta = dec.gap(mdp)
    return dec


def ratio_multiplicative(mdp: FastSlowMdp, g: np.ndarray) -> NominalDecomposition:
    """Exact multiplicative split with a given slow factor: h = r / g."""
    g = np.asarray(g, dtype=float)
    if np.any(g == 0):
        raise DecompositionError("multiplicative slow factor must be nonzero")
    h = mdp.reward_xya() / g[:, None, None]
    return NominalDecomposition("multiplicative", g, h, 0.0)


def nearest_nominal(mdp: FastSlowMdp, nominal_xs) -> np.ndarray:
    """Position in ``nominal_xs`` of the nominal state serving each slow state."""
    xs = np.asarray(nominal_xs, dtype=np.int64)
    d = np.linalg.norm(mdp.slow_states[:, None, :] - mdp.slow_states[xs][None, :, :], axis=2)
    return np.argmin(d, axis=1)


def evenly_spaced_nominal(mdp: FastSlowMdp, per_dim) -> list[int]:
    """Slow states nearest to an evenly spaced lattice spanning the slow-coordinate box."""
    X = mdp.slow_states
    dims = X.shape[1]
    per_dim = [per_dim] * dims if np.isscalar(per_dim) else list(per_dim)
    axes = [np.linspace(X[:, d].min(), X[:, d].max(), n) for d, n in enumerate(per_dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
    out: list[int] = []
    for p in grid:
        x = int(np.argmin(np.linalg.norm(X - p, axis=1)))
        if x not in out:
            out.append(x)
    return out


def _frozen_block(mdp: FastSlowMdp, x: int) -> np.ndarray:
    """Dense frozen transition block at slow state ``x``: ``(nY, nA, nY)``."""
    fk = mdp.frozen
    idx = fk.index[x * mdp.n_fast : (x + 1) * mdp.n_fast]
    return fk.rows[idx.ravel()].toarray().reshape(mdp.n_fast, mdp.n_actions, mdp.n_fast)


def build_nominal_lower(
    mdp: FastSlowMdp,
    T: int,
    nominal_xs,
    decomp: NominalDecomposition,
    *,
    fm_y=None,
    trace: SolveTrace | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[LowerValueSeq, FiniteHorizonPolicy, SolveTrace]:
    """Solve the lower level at nominal states and extend to every slow state.

    With ``fm_y`` (a feature model over the fast space) each nominal backup is
    evaluated at the fast anchors only and projected, as in the linear
    architecture variant.
    """
    if T < 1:
        raise ValueError("period T must be at least 1")
    xs = [int(x) for x in nominal_xs]
    if not xs:
        raise ValueError("at least one nominal state is required")
    decomp.validate(mdp)
    if decomp.mode == "multiplicative" and np.any(decomp.g[xs] == 0):
        raise DecompositionError("multiplicative slow factor vanishes at a nominal state")
    trace = SolveTrace(meta={"method": "nominal_lower", "T": T}) if trace is None else trace
    nX, nY, nA, K = mdp.n_slow, mdp.n_fast, mdp.n_actions, decomp.n_components
    gamma = mdp.gamma
    serve = nearest_nominal(mdp, xs)  # (nX,)
    x_star = np.asarray(xs)[serve]  # nominal slow index serving each x
    factors = decomp.factors(np.arange(nX), x_star)  # (nX, K)

    blocks = [_frozen_block(mdp, x) for x in xs]
    rewards = [decomp.component_reward(x) for x in xs]
    Jc = np.zeros((len(xs), K, nY))  # component values at t + 1
    J = np.zeros((T, mdp.n_states))
    steps: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * (T - 1)
    n_obs = nY if fm_y is None else len(fm_y.anchors)
    n_succ = nY if cost_model.successors == "dense" else None
    for t in range(T - 1, 0, -1):
        Qc = np.empty((len(xs), nY, nA, K))
        for n in range(len(xs)):
            Qc[n] = rewards[n] + gamma * np.einsum("yaz,kz->yak", blocks[n], Jc[n])
            a_star = np.argmax(Qc[n].sum(axis=2), axis=1)
            comp = Qc[n][np.arange(nY), a_star, :].T  # (K, nY)
            if fm_y is not None:
                comp = np.stack([fm_y.values(fm_y.project(c)) for c in comp])
            Jc[n] = comp
            if n_succ is None:
                units = int(mdp.frozen.counts()[xs[n] * nY : (xs[n] + 1) * nY].sum())
                units = units if fm_y is None else units * len(fm_y.anchors) // nY
            else:
                units = n_obs * nA * n_succ
            trace.charge(f"lower nominal t={t}", n_obs, nA, n_succ or units / (n_obs * nA), units)
        # extension of values and greedy policy to every slow state
        Q_all = np.einsum("xk,xyak->xya", factors, Qc[serve])
        steps[t - 1] = np.argmax(Q_all, axis=2).reshape(-1)
        ext = np.einsum("xk,xky->xy", factors, Jc[serve])
        if decomp.mode == "additive":
            shift = decomp.g - decomp.g[x_star]
            ext = ext + (np.sum(gamma ** np.arange(T - t)) * shift)[:, None]
            trace.charge(f"lower extend t={t}", mdp.n_states, 1, 1)
        else:
            trace.charge(f"lower extend t={t}", mdp.n_states, nA, K)
        J[t - 1] = ext.reshape(-1)
    trace.meta["nominal_xs"] = xs
    return LowerValueSeq(J), FiniteHorizonPolicy(steps), trace


def nominal_fsvi(
    mdp: FastSlowMdp,
    T: int,
    k: int,
    nominal_xs,
    decomp: NominalDecomposition,
    *,
    seed: int = 0,
    cadence: int | None = None,
    cost_model: CostModel = DENSE,
) -> tuple[TPeriodicPolicy, np.ndarray, SolveTrace]:
    from .solvers import upper_vi

    trace = SolveTrace(
        meta={"method": "nominal_fsvi", "T": T, "k": k, "seed": seed, "mode": decomp.mode}
    )
    J, pi, _ = build_nominal_lower(mdp, T, nominal_xs, decomp, trace=trace, cost_model=cost_model)
    trace.values["J"] = J
    policy, V, _ = upper_vi(mdp, T, k, J[1], pi, trace, seed=seed, cadence=cadence, cost_model=cost_model)
    return policy, V, trace
