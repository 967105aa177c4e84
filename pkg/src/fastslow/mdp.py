"""Fast-slow MDP container, transition kernels and JSON serialization.

States are flattened as ``s = x_idx * n_fast + y_idx``.  Rewards are a dense
``(n_states, n_actions)`` table and transitions are held by one of two kernel
classes:

``JointKernel``
    a sparse ``(n_states * n_actions, n_states)`` matrix, row ``s * n_actions + a``.
``ProductKernel``
    successor slow and fast components drawn independently given ``(s, a)``;
    each ``(s, a)`` points at one row of a slow table and one row of a fast
    table.  Used by the benchmark environments, whose joint rows would be far
    too large to materialize (the demand-response model has 3M state-action
    pairs).

Both expose the same operations, so solvers never look at the storage format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-12


class MdpValidationError(ValueError):
    """Raised when raw tables do not describe a valid fast-slow MDP."""


class RowSumError(MdpValidationError):
    pass


class IndexRangeError(MdpValidationError):
    pass


class DiscountError(MdpValidationError):
    pass


# ---------------------------------------------------------------------------
# sparse helpers
# ---------------------------------------------------------------------------


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    m = sp.csr_matrix((np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))), shape=shape)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _expand_rows(indptr: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Entry positions of the given CSR rows, concatenated, plus new indptr."""
    starts = indptr[rows]
    counts = indptr[rows + 1] - starts
    new_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(counts, out=new_ptr[1:])
    pos = np.repeat(starts - new_ptr[:-1], counts) + np.arange(new_ptr[-1])
    return pos, new_ptr


class _PairDot:
    """out[p] = sum_j rows[r_p, j] * M[c_p, j] for fixed pairs (r_p, c_p).

    Every pair is reduced by a sequential CSR mat-vec over its own entries,
    so the result for one pair never depends on which other pairs are
    present.  That keeps per-slow-state solves bit-identical to joint ones.
    """

    def __init__(self, rows: sp.csr_matrix, pair_row: np.ndarray, pair_col: np.ndarray):
        self.pos, self.indptr = _expand_rows(rows.indptr, pair_row)
        self.data = rows.data[self.pos]
        self.cols = rows.indices[self.pos]
        self.pair_col_rep = np.repeat(pair_col, np.diff(self.indptr))
        self.n = len(pair_row)

    def __call__(self, M: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0)
        vals = self.data * M[self.pair_col_rep, self.cols]
        # kernel rows are never empty, so every reduceat segment is non-empty
        return np.add.reduceat(vals, self.indptr[:-1])


def _row_cumkeys(m: sp.csr_matrix) -> np.ndarray:
    """Global sampling keys: row index + within-row cumulative probability."""
    counts = np.diff(m.indptr)
    row_of = np.repeat(np.arange(m.shape[0]), counts)
    # within-row cumsum through a global cumsum minus row offsets
    glob = np.cumsum(m.data)
    offset = np.concatenate([[0.0], glob])[m.indptr[:-1]]
    return row_of + (glob - np.repeat(offset, counts))


def _sample_rows(m: sp.csr_matrix, keys: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of a column index from each requested row."""
    idx = np.searchsorted(keys, rows + u, side="right")
    idx = np.clip(idx, m.indptr[rows], m.indptr[rows + 1] - 1)
    return m.indices[idx]


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


class FrozenKernel:
    """Successor distribution of the fast state with the slow state held fixed.

    ``rows`` is a ``(K, n_fast)`` CSR table and ``index[s, a]`` picks the row
    used by state-action ``(s, a)``.
    """

    def __init__(self, rows: sp.csr_matrix, index: np.ndarray, n_slow: int, n_fast: int):
        self.rows = rows
        self.index = np.asarray(index, dtype=np.int64)
        self.n_slow = n_slow
        self.n_fast = n_fast
        sums = np.asarray(rows.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            raise RowSumError(f"frozen kernel row {bad[0]} sums to {sums[bad[0]]!r}")
        self._keys = _row_cumkeys(rows)
        self._dots: dict[Any, _PairDot] = {}

    @property
    def n_states(self) -> int:
        return self.n_slow * self.n_fast

    @property
    def n_actions(self) -> int:
        return self.index.shape[1]

    def row(self, s: int, a: int) -> dict[int, float]:
        k = self.index[s, a]
        lo, hi = self.rows.indptr[k], self.rows.indptr[k + 1]
        return {int(j): float(p) for j, p in zip(self.rows.indices[lo:hi], self.rows.data[lo:hi])}

    def _dot_for(self, xs: tuple[int, ...] | None) -> tuple[_PairDot, np.ndarray, np.ndarray]:
        if xs not in self._dots:
            if xs is None:
                states = np.arange(self.n_states)
            else:
                states = (np.asarray(xs)[:, None] * self.n_fast + np.arange(self.n_fast)).ravel()
            x_of = states // self.n_fast
            keys = self.index[states] * self.n_slow + x_of[:, None]
            uniq, inv = np.unique(keys.ravel(), return_inverse=True)
            dot = _PairDot(self.rows, uniq // self.n_slow, uniq % self.n_slow)
            self._dots[xs] = (dot, inv.reshape(keys.shape), states)
        return self._dots[xs]

    def expect(self, J: np.ndarray, xs=None) -> np.ndarray:
        """E[J(x, y')] for every (s, a) (or only the states of slow states ``xs``).

        ``J`` is a flat value table over all states.
        """
        key = None if xs is None else tuple(int(x) for x in xs)
        dot, inv, _ = self._dot_for(key)
        Jm = np.asarray(J, float).reshape(self.n_slow, self.n_fast)
        return dot(Jm)[inv]

    def expect_fast(self, W: np.ndarray) -> np.ndarray:
        """E[W(y')] for a fast-only table ``W``; shape ``(n_states, n_actions)``."""
        J = np.tile(np.asarray(W, float), self.n_slow)
        return self.expect(J)

    def counts(self) -> np.ndarray:
        return np.diff(self.rows.indptr)[self.index]

    def sample(self, s: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        k = self.index[s, a]
        return _sample_rows(self.rows, self._keys, k, u)


class JointKernel:
    """Sparse joint successor table, one row per (s, a)."""

    kind = "joint"

    def __init__(self, matrix: sp.csr_matrix, n_slow: int, n_fast: int, n_actions: int):
        self.matrix = sp.csr_matrix(matrix)
        self.matrix.sort_indices()
        self.n_slow, self.n_fast, self.n_actions = n_slow, n_fast, n_actions
        self.n_states = n_slow * n_fast

    def validate(self) -> None:
        m = self.matrix
        if m.shape != (self.n_states * self.n_actions, self.n_states):
            raise IndexRangeError(f"kernel shape {m.shape} does not match spaces")
        if m.nnz and m.data.min() < 0:
            r = int(np.searchsorted(m.indptr, np.flatnonzero(m.data < 0)[0], side="right") - 1)
            raise RowSumError(f"negative probability in kernel row {self._row_name(r)}")
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            raise RowSumError(f"kernel row {self._row_name(bad[0])} sums to {sums[bad[0]]!r}")

    def _row_name(self, r: int) -> str:
        s, a = divmod(int(r), self.n_actions)
        x, y = divmod(s, self.n_fast)
        return f"(x={x}, y={y}, a={a})"

    @cached_property
    def _keys(self) -> np.ndarray:
        return _row_cumkeys(self.matrix)

    @cached_property
    def action_invariant(self) -> bool:
        m = self.matrix
        rows = np.arange(self.n_states) * self.n_actions
        base = m[rows]
        return all((m[rows + a] != base).nnz == 0 for a in range(1, self.n_actions))

    def expect(self, V: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(V, float)).reshape(self.n_states, self.n_actions)

    def joint_csr(self) -> sp.csr_matrix:
        return self.matrix

    def rows_for(self, s: np.ndarray, a: np.ndarray) -> sp.csr_matrix:
        return self.matrix[np.asarray(s) * self.n_actions + np.asarray(a)]

    def counts(self) -> np.ndarray:
        return np.diff(self.matrix.indptr).reshape(self.n_states, self.n_actions)

    def frozen(self) -> FrozenKernel:
        agg = sp.csr_matrix(
            (np.ones(self.n_states), (np.arange(self.n_states), np.arange(self.n_states) % self.n_fast)),
            shape=(self.n_states, self.n_fast),
        )
        rows = sp.csr_matrix(self.matrix @ agg)
        rows.sort_indices()
        rows.eliminate_zeros()
        index = np.arange(self.n_states * self.n_actions).reshape(self.n_states, self.n_actions)
        return FrozenKernel(rows, index, self.n_slow, self.n_fast)

    def sampler_tables(self) -> tuple:
        """Flat arrays for two-stage inverse-CDF sampling in compiled loops."""
        idx = np.arange(self.n_states * self.n_actions, dtype=np.int64).reshape(self.n_states, self.n_actions)
        one = sp.csr_matrix(np.ones((1, 1)))
        return (
            (self.matrix.indptr.astype(np.int64), self.matrix.indices.astype(np.int64), self._keys, idx),
            1,
            (one.indptr.astype(np.int64), one.indices.astype(np.int64), _row_cumkeys(one), np.zeros_like(idx)),
        )

    def sample(self, s: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Draw successors; ``u`` has trailing dimension 2 (only the first is used)."""
        rows = np.asarray(s) * self.n_actions + np.asarray(a)
        return _sample_rows(self.matrix, self._keys, rows, u[..., 0])


class ProductKernel:
    """Slow and fast successors drawn independently given (s, a)."""

    kind = "product"

    def __init__(
        self,
        slow: sp.csr_matrix,
        slow_index: np.ndarray,
        fast: sp.csr_matrix,
        fast_index: np.ndarray,
        n_slow: int,
        n_fast: int,
        n_actions: int,
    ):
        self.slow = sp.csr_matrix(slow)
        self.fast = sp.csr_matrix(fast)
        for m in (self.slow, self.fast):
            m.sort_indices()
            m.eliminate_zeros()
        self.slow_index = np.asarray(slow_index, dtype=np.int64)
        self.fast_index = np.asarray(fast_index, dtype=np.int64)
        self.n_slow, self.n_fast, self.n_actions = n_slow, n_fast, n_actions
        self.n_states = n_slow * n_fast

    def validate(self) -> None:
        shape = (self.n_states, self.n_actions)
        if self.slow_index.shape != shape or self.fast_index.shape != shape:
            raise IndexRangeError(f"kernel index tables must have shape {shape}")
        for name, m, idx, width in (
            ("slow", self.slow, self.slow_index, self.n_slow),
            ("fast", self.fast, self.fast_index, self.n_fast),
        ):
            if m.shape[1] != width:
                raise IndexRangeError(f"{name} kernel has {m.shape[1]} columns, expected {width}")
            if idx.min() < 0 or idx.max() >= m.shape[0]:
                raise IndexRangeError(f"{name} kernel index out of range")
            if m.nnz and m.data.min() < 0:
                raise RowSumError(f"negative probability in {name} kernel")
            sums = np.asarray(m.sum(axis=1)).ravel()
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
            if len(bad):
                raise RowSumError(f"{name} kernel row {bad[0]} sums to {sums[bad[0]]!r}")

    @cached_property
    def _slow_keys(self):
        return _row_cumkeys(self.slow)

    @cached_property
    def _fast_keys(self):
        return _row_cumkeys(self.fast)

    @cached_property
    def action_invariant(self) -> bool:
        return bool(
            np.all(self.slow_index == self.slow_index[:, :1]) and np.all(self.fast_index == self.fast_index[:, :1])
        )

    @cached_property
    def _pairs(self):
        keys = self.slow_index * self.fast.shape[0] + self.fast_index
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        dot = _PairDot(self.fast, uniq % self.fast.shape[0], uniq // self.fast.shape[0])
        return dot, inv.reshape(keys.shape)

    def expect(self, V: np.ndarray) -> np.ndarray:
        Vm = np.asarray(V, float).reshape(self.n_slow, self.n_fast)
        W = self.slow @ Vm  # (K_slow, n_fast)
        dot, inv = self._pairs
        return dot(np.asarray(W))[inv]

    def counts(self) -> np.ndarray:
        return np.diff(self.slow.indptr)[self.slow_index] * np.diff(self.fast.indptr)[self.fast_index]

    def rows_for(self, s: np.ndarray, a: np.ndarray) -> sp.csr_matrix:
        s = np.atleast_1d(np.asarray(s))
        a = np.broadcast_to(np.asarray(a), s.shape)
        k1 = self.slow_index[s, a]
        k2 = self.fast_index[s, a]
        p1, ptr1 = _expand_rows(self.slow.indptr, k1)
        p2, ptr2 = _expand_rows(self.fast.indptr, k2)
        c1, c2 = np.diff(ptr1), np.diff(ptr2)
        n = len(s)
        total = c1 * c2
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(total, out=indptr[1:])
        row = np.repeat(np.arange(n), total)
        local = np.arange(indptr[-1]) - indptr[row]
        i1 = local // c2[row]
        i2 = local % c2[row]
        e1 = p1[ptr1[row] + i1]
        e2 = p2[ptr2[row] + i2]
        cols = self.slow.indices[e1] * self.n_fast + self.fast.indices[e2]
        vals = self.slow.data[e1] * self.fast.data[e2]
        m = sp.csr_matrix((vals, cols, indptr), shape=(n, self.n_states))
        m.sort_indices()
        return m

    def joint_csr(self) -> sp.csr_matrix:
        s = np.repeat(np.arange(self.n_states), self.n_actions)
        a = np.tile(np.arange(self.n_actions), self.n_states)
        return self.rows_for(s, a)

    def frozen(self) -> FrozenKernel:
        return FrozenKernel(self.fast, self.fast_index, self.n_slow, self.n_fast)

    def sampler_tables(self) -> tuple:
        """Flat arrays for two-stage inverse-CDF sampling in compiled loops."""
        return (
            (self.slow.indptr.astype(np.int64), self.slow.indices.astype(np.int64), self._slow_keys, self.slow_index),
            self.n_fast,
            (self.fast.indptr.astype(np.int64), self.fast.indices.astype(np.int64), self._fast_keys, self.fast_index),
        )

    def sample(self, s: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        s = np.asarray(s)
        k1 = self.slow_index[s, a]
        k2 = self.fast_index[s, a]
        x = _sample_rows(self.slow, self._slow_keys, k1, u[..., 0])
        y = _sample_rows(self.fast, self._fast_keys, k2, u[..., 1])
        return x * self.n_fast + y


# ---------------------------------------------------------------------------
# the MDP
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FastSlowMdp:
    """Finite fast-slow MDP with coordinate embeddings for every space."""

    slow_states: np.ndarray
    fast_states: np.ndarray
    actions: np.ndarray
    reward: np.ndarray
    kernel: JointKernel | ProductKernel
    gamma: float
    meta: dict = field(default_factory=dict)

    @property
    def n_slow(self) -> int:
        return len(self.slow_states)

    @property
    def n_fast(self) -> int:
        return len(self.fast_states)

    @property
    def n_states(self) -> int:
        return self.n_slow * self.n_fast

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))

    def slow_of(self, s):
        return np.asarray(s) // self.n_fast

    def fast_of(self, s):
        return np.asarray(s) % self.n_fast

    def state_index(self, x: int, y: int) -> int:
        return int(x) * self.n_fast + int(y)

    @cached_property
    def state_coords(self) -> np.ndarray:
        """Concatenated (slow, fast) coordinates, one row per flat state."""
        xs = np.repeat(self.slow_states, self.n_fast, axis=0)
        ys = np.tile(self.fast_states, (self.n_slow, 1))
        return np.hstack([xs, ys])

    @cached_property
    def frozen(self) -> FrozenKernel:
        return self.kernel.frozen()

    @cached_property
    def support_counts(self) -> np.ndarray:
        """Number of nonzero successor probabilities of every (s, a)."""
        return self.kernel.counts()

    def expect(self, V: np.ndarray) -> np.ndarray:
        return self.kernel.expect(V)

    def reward_xya(self) -> np.ndarray:
        return self.reward.reshape(self.n_slow, self.n_fast, self.n_actions)


def frozen_marginal(mdp: FastSlowMdp) -> FrozenKernel:
    """Marginal of the successor fast state, slow state held fixed (cached)."""
    return mdp.frozen


def _as_coords(vals, name: str) -> np.ndarray:
    arr = np.asarray(vals, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or len(arr) == 0:
        raise MdpValidationError(f"{name} must be a non-empty list of equal-length coordinate vectors")
    return arr


def build_mdp(
    slow_states,
    fast_states,
    actions,
    reward,
    kernel,
    gamma: float,
    meta: dict | None = None,
) -> FastSlowMdp:
    """Validate raw tables and assemble a :class:`FastSlowMdp`.

    ``reward`` may be shaped ``(nX, nY, nA)`` or ``(nX * nY, nA)``.  ``kernel``
    is either a ready kernel object or an iterable of
    ``(x, y, a, x_next, y_next, prob)`` triplets.
    """
    X = _as_coords(slow_states, "slow_states")
    Y = _as_coords(fast_states, "fast_states")
    A = _as_coords(actions, "actions")
    nX, nY, nA = len(X), len(Y), len(A)
    nS = nX * nY
    if not (0.0 <= float(gamma) < 1.0):
        raise DiscountError(f"gamma={gamma!r} outside [0, 1)")
    R = np.asarray(reward, dtype=float)
    if R.size != nS * nA:
        raise IndexRangeError(f"reward table has {R.size} entries, expected {nS * nA}")
    R = R.reshape(nS, nA)
    if not np.all(np.isfinite(R)):
        raise MdpValidationError("reward table contains non-finite entries")

    if isinstance(kernel, (JointKernel, ProductKernel)):
        K = kernel
    else:
        trip = np.asarray(list(kernel), dtype=float)
        if trip.ndim != 2 or trip.shape[1] != 6:
            raise MdpValidationError("kernel triplets must be (x, y, a, x_next, y_next, prob)")
        idx = trip[:, :5].astype(np.int64)
        limits = np.array([nX, nY, nA, nX, nY])
        bad = np.flatnonzero(np.any((idx < 0) | (idx >= limits), axis=1))
        if len(bad):
            raise IndexRangeError(f"kernel entry {bad[0]} has index out of range: {idx[bad[0]].tolist()}")
        rows = (idx[:, 0] * nY + idx[:, 1]) * nA + idx[:, 2]
        cols = idx[:, 3] * nY + idx[:, 4]
        K = JointKernel(_csr(rows, cols, trip[:, 5], (nS * nA, nS)), nX, nY, nA)
    if (K.n_slow, K.n_fast, K.n_actions) != (nX, nY, nA):
        raise IndexRangeError("kernel dimensions do not match the state/action spaces")
    K.validate()
    mdp = FastSlowMdp(X, Y, A, R, K, float(gamma), dict(meta or {}))
    _ = mdp.frozen  # derive and cache
    return mdp


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

FORMAT = "fastslow-mdp/1"


def _csr_to_doc(m: sp.csr_matrix) -> dict:
    coo = m.tocoo()
    return {
        "shape": list(m.shape),
        "rows": coo.row.tolist(),
        "cols": coo.col.tolist(),
        "probs": coo.data.tolist(),
    }


def _csr_from_doc(d: dict) -> sp.csr_matrix:
    return _csr(d["rows"], d["cols"], d["probs"], tuple(d["shape"]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def mdp_to_dict(mdp: FastSlowMdp) -> dict:
    K = mdp.kernel
    if isinstance(K, JointKernel):
        coo = K.matrix.tocoo()
        s, a = np.divmod(coo.row, mdp.n_actions)
        x, y = np.divmod(s, mdp.n_fast)
        x2, y2 = np.divmod(coo.col, mdp.n_fast)
        kdoc = {
            "type": "joint",
            "triplets": [
                [int(i), int(j), int(k), int(l), int(m), float(p)]
                for i, j, k, l, m, p in zip(x, y, a, x2, y2, coo.data)
            ],
        }
    else:
        kdoc = {
            "type": "product",
            "slow": _csr_to_doc(K.slow),
            "slow_index": K.slow_index.tolist(),
            "fast": _csr_to_doc(K.fast),
            "fast_index": K.fast_index.tolist(),
        }
    return {
        "format": FORMAT,
        "gamma": mdp.gamma,
        "slow_states": mdp.slow_states.tolist(),
        "fast_states": mdp.fast_states.tolist(),
        "actions": mdp.actions.tolist(),
        "reward": mdp.reward.reshape(mdp.n_slow, mdp.n_fast, mdp.n_actions).tolist(),
        "kernel": kdoc,
        "meta": _jsonable(mdp.meta),
    }


def mdp_from_dict(doc: dict) -> FastSlowMdp:
    if doc.get("format") != FORMAT:
        raise MdpValidationError(f"unsupported MDP document format {doc.get('format')!r}")
    X = _as_coords(doc["slow_states"], "slow_states")
    Y = _as_coords(doc["fast_states"], "fast_states")
    A = _as_coords(doc["actions"], "actions")
    kd = doc["kernel"]
    if kd["type"] == "joint":
        kernel = kd["triplets"]
    elif kd["type"] == "product":
        kernel = ProductKernel(
            _csr_from_doc(kd["slow"]),
            np.asarray(kd["slow_index"]),
            _csr_from_doc(kd["fast"]),
            np.asarray(kd["fast_index"]),
            len(X),
            len(Y),
            len(A),
        )
    else:
        raise MdpValidationError(f"unknown kernel type {kd['type']!r}")
    return build_mdp(X, Y, A, doc["reward"], kernel, doc["gamma"], doc.get("meta"))


def save_mdp(mdp: FastSlowMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh)


def load_mdp(path) -> FastSlowMdp:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MdpValidationError(f"{path}: {exc}") from None
    try:
        return mdp_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise MdpValidationError(f"{path} is not a saved MDP: {exc!r}") from None
