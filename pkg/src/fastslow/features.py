"""Anchor-state linear architectures.

A feature model stores the feature matrix ``phi`` (states x anchors) and the
anchor block ``L = phi[anchors]``.  Because ``L`` is invertible, the matrix
``[L^-1 0]`` is a left inverse of ``phi``: projecting a value table only reads
its anchor entries and solves one ``M x M`` system.

RBF features are very local at the default width, so ``phi`` is kept sparse
(entries below ``PHI_DROP`` are dropped) and ``L`` is factorized once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

PHI_DROP = 1e-12
COND_LIMIT = 1e12
KAPPA_SAMPLE = 1000


class FeatureError(ValueError):
    pass


def _normalize(coords: np.ndarray) -> np.ndarray:
    """Min-max scale each column to [0, 1]; constant columns map to 0."""
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (coords - lo) / span


@dataclass(eq=False)
class FeatureModel:
    anchors: np.ndarray
    phi: sp.csr_matrix
    kind: str
    centers: np.ndarray | None = None
    width: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=np.int64)
        self.phi = sp.csr_matrix(self.phi)
        N, M = self.phi.shape
        if len(self.anchors) != M:
            raise FeatureError("one anchor per feature is required")
        if len(np.unique(self.anchors)) != M:
            raise FeatureError("anchor states must be distinct")
        if M > N:
            raise FeatureError("more anchors than states")
        try:
            self._lu = spla.splu(self.L.tocsc())
        except RuntimeError as exc:
            raise FeatureError(f"anchor block is singular: {exc}") from None
        c = self.cond
        if not np.isfinite(c) or c > COND_LIMIT:
            raise FeatureError(f"anchor block condition number {c:.3g} exceeds {COND_LIMIT:.0e}")

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def L(self) -> sp.csr_matrix:
        return self.phi[self.anchors]

    @cached_property
    def cond(self) -> float:
        """1-norm condition number of L (exact when small, estimated otherwise)."""
        M = self.n_features
        if M <= 2000:
            return float(np.linalg.cond(self.L.toarray(), 1))
        inv = spla.LinearOperator((M, M), matvec=self._lu.solve, rmatvec=lambda v: self._lu.solve(v, trans="T"))
        return float(spla.onenormest(self.L) * spla.onenormest(inv))

    def solve(self, v: np.ndarray) -> np.ndarray:
        """L^-1 v."""
        return self._lu.solve(np.asarray(v, dtype=float))

    def project(self, values: np.ndarray) -> np.ndarray:
        """Weights from a full table (length N) or anchor-only values (length M).

        Non-anchor entries of a full table are ignored.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[0] == self.n_states:
            values = values[self.anchors]
        elif values.shape[0] != self.n_features:
            raise FeatureError(f"cannot project a table of length {values.shape[0]}")
        return self.solve(values)

    def values(self, w: np.ndarray) -> np.ndarray:
        """Phi w over every state."""
        return self.phi @ np.asarray(w, dtype=float)

    def phi_dagger(self) -> np.ndarray:
        """Dense ``M x N`` left inverse [L^-1 0] (small instances only)."""
        D = np.zeros((self.n_features, self.n_states))
        D[:, self.anchors] = self.solve(np.eye(self.n_features))
        return D

    def kappa_of(self, states: np.ndarray) -> float:
        """max over ``states`` of the 1-norm of phi(s)^T L^-1."""
        rows = self.phi[np.asarray(states)].toarray()
        G = self._lu.solve(rows.T, trans="T")  # L^-T phi(s)
        return float(np.abs(G).sum(axis=0).max())

    @cached_property
    def kappa(self) -> float:
        """Sup-norm expansion of Phi Phi^dagger; at least 1 (anchors are reproduced).

        Exact over all states up to ``KAPPA_SAMPLE`` states, otherwise over a
        fixed random sample (recorded in ``meta``).
        """
        N = self.n_states
        if N <= KAPPA_SAMPLE:
            states = np.arange(N)
        else:
            states = np.random.default_rng([N, self.n_features]).choice(N, KAPPA_SAMPLE, replace=False)
            self.meta["kappa_sampled"] = KAPPA_SAMPLE
        k = 1.0
        for chunk in np.array_split(states, max(1, len(states) // 500)):
            k = max(k, self.kappa_of(chunk))
        return k

    def to_dict(self) -> dict:
        coo = self.phi.tocoo()
        return {
            "format": "fastslow-features/1",
            "kind": self.kind,
            "shape": list(self.phi.shape),
            "anchors": self.anchors.tolist(),
            "phi": {"row": coo.row.tolist(), "col": coo.col.tolist(), "val": coo.data.tolist()},
            "centers": None if self.centers is None else np.asarray(self.centers).tolist(),
            "width": self.width,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureModel":
        p = d["phi"]
        phi = sp.csr_matrix((p["val"], (p["row"], p["col"])), shape=tuple(d["shape"]))
        centers = None if d.get("centers") is None else np.asarray(d["centers"])
        return cls(d["anchors"], phi, d["kind"], centers, d.get("width"), dict(d.get("meta", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def identity_features(n_states: int) -> FeatureModel:
    return FeatureModel(np.arange(n_states), sp.identity(n_states, format="csr"), "identity")


def aggregation_features(groups) -> FeatureModel:
    """0/1 membership features; each group is anchored at its lowest-index member."""
    groups = np.asarray(groups)
    labels, inv = np.unique(groups, return_inverse=True)
    N, M = len(groups), len(labels)
    phi = sp.csr_matrix((np.ones(N), (np.arange(N), inv)), shape=(N, M))
    anchors = np.array([np.flatnonzero(inv == m)[0] for m in range(M)])
    return FeatureModel(anchors, phi, "aggregation", meta={"groups": inv.tolist()})


def lattice_centers(dims: int, m: int, caps=None) -> np.ndarray:
    """``m`` points evenly spread over a regular lattice on [0, 1]^dims.

    The lattice is refined one axis at a time (the coarsest axis first, never
    beyond ``caps[d]`` levels on axis d) until it holds at least ``m`` points;
    then ``m`` of them are taken at evenly spaced positions.
    """
    caps = [np.inf] * dims if caps is None else list(caps)
    counts = [1] * dims
    while int(np.prod(counts)) < m:
        open_axes = [d for d in range(dims) if counts[d] < caps[d]]
        if not open_axes:
            break
        d = min(open_axes, key=lambda j: counts[j])
        counts[d] += 1
    axes = [np.linspace(0, 1, c) if c > 1 else np.array([0.5]) for c in counts]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dims)
    pick = np.unique(np.linspace(0, len(grid) - 1, m).round().astype(int))
    return grid[pick]


def nearest_unused(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Anchor state nearest to each center, moving to the next-nearest unused state on collisions."""
    tree = cKDTree(points)
    used: set[int] = set()
    out = np.empty(len(centers), dtype=np.int64)
    for i, c in enumerate(centers):
        k = 1
        while True:
            k = min(k * 4, len(points))
            _, idx = tree.query(c, k=k)
            idx = np.atleast_1d(idx)
            free = [j for j in idx if int(j) not in used]
            if free:
                out[i] = int(free[0])
                used.add(int(free[0]))
                break
            if k == len(points):
                raise FeatureError("ran out of candidate anchor states")
    return out


def rbf_features(coords: np.ndarray, fraction: float = 0.3, width: float = 0.02) -> FeatureModel:
    """Gaussian RBFs centred on anchor states picked near an even lattice.

    Coordinates are min-max normalized; ``M = round(fraction * N)``.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    N = len(coords)
    M = max(1, int(round(fraction * N)))
    if not 0 < fraction <= 1 or width <= 0:
        raise FeatureError("need 0 < fraction <= 1 and a positive width")
    Z = _normalize(coords)
    caps = [len(np.unique(col)) for col in Z.T]
    anchors = nearest_unused(Z, lattice_centers(Z.shape[1], M, caps))
    C = Z[anchors]
    # only pairs within the drop radius can carry a nonzero feature
    radius = width * np.sqrt(-2 * np.log(PHI_DROP))
    pairs = cKDTree(Z).sparse_distance_matrix(cKDTree(C), radius, output_type="ndarray")
    vals = np.exp(-(pairs["v"] ** 2) / (2 * width**2))
    keep = vals >= PHI_DROP
    phi = sp.csr_matrix((vals[keep], (pairs["i"][keep], pairs["j"][keep])), shape=(N, M))
    return FeatureModel(anchors, sp.csr_matrix(phi), "rbf", C, width, {"fraction": fraction})


def build_features(mdp, kind: str = "rbf", *, space: str = "joint", fraction: float = 0.3, width: float = 0.02, groups=None):
    """Feature model over the joint state space or (``space="fast"``) over fast states only."""
    if space == "joint":
        coords = mdp.state_coords
    elif space == "fast":
        coords = mdp.fast_states
    else:
        raise FeatureError(f"unknown feature space {space!r}")
    if kind == "rbf":
        fm = rbf_features(coords, fraction, width)
    elif kind == "aggregation":
        if groups is None:
            raise FeatureError("aggregation features need a partition")
        if len(groups) != len(coords):
            raise FeatureError("partition length does not match the state space")
        fm = aggregation_features(groups)
    elif kind == "identity":
        fm = identity_features(len(coords))
    else:
        raise FeatureError(f"unknown feature kind {kind!r}")
    fm.meta["space"] = space
    return fm
