"""Plot-ready exports: per-point CSV/JSON, percentile bands and policy grids."""

from __future__ import annotations

import csv
import json
import operator
import warnings
from pathlib import Path

import numpy as np

from ..policies import FastPolicy, StationaryPolicy, TPeriodicPolicy, action_schedule

GRID_POINTS = 100


class ExportError(ValueError):
    pass


def cost_grid(records, n: int = GRID_POINTS) -> np.ndarray:
    """Log-spaced grid over the union of positive record costs."""
    costs = np.concatenate([np.asarray(r.costs, float) for r in records])
    costs = costs[costs > 0]
    if len(costs) == 0:
        return np.zeros(1)
    lo, hi = costs.min(), costs.max()
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, n)


def interpolate_record(record, grid: np.ndarray) -> np.ndarray:
    """Linear interpolation in cost; NaN before the first point, flat after the last."""
    c = np.asarray(record.costs, float)
    r = np.asarray(record.returns, float)
    out = np.interp(grid, c, r)
    out[grid < c[0]] = np.nan
    return out


def percentile_curves(records, grid: np.ndarray | None = None) -> dict:
    """Per-method 10th/50th/90th percentiles across records on a shared cost grid."""
    if not records:
        raise ExportError("no records to aggregate")
    grid = cost_grid(records) if grid is None else grid
    out: dict = {}
    for method in dict.fromkeys(r.method for r in records):
        M = np.stack([interpolate_record(r, grid) for r in records if r.method == method])
        n = np.sum(~np.isnan(M), axis=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns left of the first point
            p10, p50, p90 = np.nanpercentile(M, [10, 50, 90], axis=0)
        out[method] = {"cost": grid, "p10": p10, "median": p50, "p90": p90, "n": n}
    return out


def cost_to_reach(curve: dict, level: float) -> float:
    """First grid cost at which the median curve reaches ``level`` (inf if never)."""
    med = curve["median"]
    hit = np.flatnonzero(~np.isnan(med) & (med >= level))
    return float(curve["cost"][hit[0]]) if len(hit) else float("inf")


def near_final_level(value: float, fraction: float = 0.95) -> float:
    """The value that is ``fraction`` of the way to ``value``, for either sign."""
    return value - (1 - fraction) * abs(value)


def trend_summary(records, reference: str = "base_vi", subject: str = "fsvi") -> dict:
    """Final-gridpoint medians per method, plus cost-to-reach of the subject's near-final level."""
    curves = percentile_curves(records)
    final = {m: float(c["median"][-1]) for m, c in curves.items()}
    out: dict = {"final_median": final}
    if subject in curves and reference in curves:
        level = near_final_level(final[subject])
        out.update(
            level=level,
            subject_cost=cost_to_reach(curves[subject], level),
            reference_cost=cost_to_reach(curves[reference], level),
        )
    return out


def export_results(records, fmt: str, path) -> list[Path]:
    """Write the points file and a companion percentile file; returns both paths."""
    if not records:
        raise ExportError("no records to export")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {path.parent}: {exc}") from None
    curves = percentile_curves(records)
    pct_path = path.with_name(path.stem + "_percentiles" + path.suffix)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["method", "seed", "cost", "return"])
                for r in records:
                    for c, v in zip(r.costs, r.returns):
                        w.writerow([r.method, r.seed, int(c), repr(float(v))])
            with open(pct_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["method", "cost", "p10", "median", "p90", "n_records"])
                for m, cv in curves.items():
                    for i in range(len(cv["cost"])):
                        stats = [_num(cv[k][i]) for k in ("p10", "median", "p90")]
                        w.writerow([m, repr(float(cv["cost"][i])), *stats, int(cv["n"][i])])
        elif fmt == "json":
            path.write_text(json.dumps([r.to_dict() for r in records], sort_keys=True, indent=1))
            doc = {m: {k: [_num(v) for v in cv[k]] for k in ("cost", "p10", "median", "p90")} for m, cv in curves.items()}
            pct_path.write_text(json.dumps(doc, sort_keys=True, indent=1))
        else:
            raise ExportError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from None
    return [path, pct_path]


def _num(v):
    v = float(v)
    return None if np.isnan(v) else v


# ---------------------------------------------------------------------------
# policy grids
# ---------------------------------------------------------------------------

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq, "!=": operator.ne}


def coordinate_table(mdp) -> dict[str, np.ndarray]:
    """Named per-state columns: every coordinate plus ``slow`` and ``fast`` indices."""
    C = mdp.state_coords
    names = mdp.meta.get("coord_names")
    if not names or len(names) != C.shape[1]:
        dx = mdp.slow_states.shape[1]
        names = [f"x{i + 1}" for i in range(dx)] + [f"y{i + 1}" for i in range(C.shape[1] - dx)]
    cols = {n: C[:, i] for i, n in enumerate(names)}
    s = np.arange(mdp.n_states)
    cols["slow"] = mdp.slow_of(s).astype(float)
    cols["fast"] = mdp.fast_of(s).astype(float)
    return cols


def _first_actions(policy, mdp) -> np.ndarray:
    """The action map applied at the start of each period (the only map for stationary policies)."""
    if not isinstance(policy, (StationaryPolicy, FastPolicy, TPeriodicPolicy)):
        raise ExportError(f"cannot grid a {type(policy).__name__}")
    return np.asarray(action_schedule(policy, mdp.n_slow)[0])


def export_policy_grid(policies, mdp, spec: dict) -> dict:
    """Action frequencies on a 2-D slice of the state space.

    ``spec`` = {"axes": [row_name, col_name],
                "where": {name: value, ...}            (optional equality filters),
                "compare": [[name, op, name], ...]     (optional, op in < <= > >= == !=)}
    Every state passing the filters is binned by its two axis values; each
    cell reports the share of (state, policy) pairs choosing each action.
    T-periodic policies are gridded by their period-start map.
    """
    cols = coordinate_table(mdp)
    axes = spec.get("axes")
    if not isinstance(axes, (list, tuple)) or len(axes) != 2:
        raise ExportError("slice spec needs exactly two axes")
    for c in spec.get("compare", []):
        if not isinstance(c, (list, tuple)) or len(c) != 3 or c[1] not in _OPS:
            raise ExportError(f"malformed comparison {c!r}")
    for name in [*axes, *spec.get("where", {}), *(c[i] for c in spec.get("compare", []) for i in (0, 2))]:
        if name not in cols:
            raise ExportError(f"unknown coordinate {name!r}; choose from {sorted(cols)}")
    mask = np.ones(mdp.n_states, dtype=bool)
    for name, v in spec.get("where", {}).items():
        mask &= np.isclose(cols[name], float(v))
    for c in spec.get("compare", []):
        mask &= _OPS[c[1]](cols[c[0]], cols[c[2]])
    policies = list(policies)
    if not policies:
        raise ExportError("no policies to grid")
    acts = np.stack([_first_actions(p, mdp) for p in policies])  # (P, nS)
    rows = np.unique(cols[axes[0]][mask])
    colv = np.unique(cols[axes[1]][mask])
    nA = mdp.n_actions
    freq = np.zeros((len(rows), len(colv), nA))
    count = np.zeros((len(rows), len(colv)), dtype=np.int64)
    ri = np.searchsorted(rows, cols[axes[0]][mask])
    ci = np.searchsorted(colv, cols[axes[1]][mask])
    for p in range(len(policies)):
        np.add.at(freq, (ri, ci, acts[p, mask]), 1.0)
        np.add.at(count, (ri, ci), 1)
    with np.errstate(invalid="ignore"):
        freq = np.where(count[..., None] > 0, freq / np.maximum(count[..., None], 1), np.nan)
    return {
        "axes": list(axes),
        "rows": rows.tolist(),
        "cols": colv.tolist(),
        "actions": np.asarray(mdp.actions).tolist(),
        "frequency": [[[_num(v) for v in cell] for cell in row] for row in freq],
        "count": count.tolist(),
        "n_policies": len(policies),
        "filters": {"where": spec.get("where", {}), "compare": spec.get("compare", [])},
    }
