"""Command-line entry point: ``fastslow <subcommand>``.

Every subcommand writes CSV or JSON.  Exit codes: 0 success, 2 invalid
input (bad config, parameters, MDP, bound domain, features), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import BoundDomainError, BoundInputs, bound_report, estimate_lipschitz, jump_sizes
from .bench import (
    ConfigError,
    ExperimentConfig,
    ExportError,
    MethodSpec,
    default_config,
    export_policy_grid,
    export_results,
    records_from_json,
    records_to_json,
    run_experiment,
    solve_method,
    trend_summary,
)
from .envs import EnvParamError, make_env
from .features import FeatureError
from .mdp import MdpValidationError, load_mdp, mdp_to_dict, save_mdp
from .nominal import DecompositionError
from .policies import policy_from_dict, policy_to_dict
from .simulate import DEFAULT_EPISODES, evaluate_policy

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
VALIDATION_ERRORS = (
    ConfigError,
    EnvParamError,
    MdpValidationError,
    BoundDomainError,
    FeatureError,
    DecompositionError,
    ExportError,
)


def _json_arg(text: str | None) -> dict:
    if not text:
        return {}
    p = Path(text)
    try:
        return json.loads(p.read_text()) if p.exists() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from None


def _read_input(path) -> str:
    """Text of an input file; a missing or unreadable input is invalid input."""
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _load_records(path):
    try:
        return records_from_json(_read_input(path))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path} is not a records file: {exc}") from None


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    print(path)


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.env:
        cfg = default_config(args.env)
    else:
        raise ConfigError("give --config or --env")
    overrides = {}
    if getattr(args, "seeds", None) is not None:
        overrides["n_seeds"] = args.seeds
    if getattr(args, "seed", None) is not None:
        overrides["first_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if overrides:
        d = cfg.to_dict() | {"workers": cfg.workers} | overrides
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def _load_env(args):
    if args.mdp:
        _read_input(args.mdp)
        return load_mdp(args.mdp)
    if not args.env:
        raise ConfigError("give --env or --mdp")
    return make_env(args.env, _json_arg(args.params))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build_env(args) -> None:
    mdp = make_env(args.env, _json_arg(args.params))
    out = _outdir(args)
    save_mdp(mdp, out / "env.json")
    print(out / "env.json")
    summary = {
        "env": args.env,
        "n_slow": mdp.n_slow,
        "n_fast": mdp.n_fast,
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "r_max": mdp.r_max,
        "mean_support": float(np.mean(mdp.support_counts)),
        "meta": mdp_to_dict(mdp)["meta"],
    }
    _write_json(out / "env_summary.json", summary)


def cmd_solve(args) -> None:
    cfg = _load_config(args)
    specs = cfg.methods if args.method is None else [s for s in cfg.methods if s.key == args.method]
    if not specs:
        specs = [MethodSpec(args.method)]
        cfg = ExperimentConfig.from_dict(cfg.to_dict() | {"methods": [{"name": args.method}]})
    seed = cfg.first_seed
    out = _outdir(args)
    for spec in specs:
        _, policy, trace, resolved = solve_method(cfg, spec, seed)
        _write_json(
            out / f"policy_{spec.key}_seed{seed}.json",
            {"method": spec.key, "seed": seed, "hyperparameters": resolved, "policy": policy_to_dict(policy)},
        )
        path = out / f"trace_{spec.key}_seed{seed}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "units"])
            for label, units in sorted(trace.cost_by_label().items()):
                w.writerow([label, units])
        print(path)


def cmd_evaluate(args) -> None:
    mdp = _load_env(args)
    try:
        doc = json.loads(_read_input(args.policy))
        policy = policy_from_dict(doc.get("policy", doc))
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"{args.policy} is not a policy file: {exc}") from None
    horizon = args.horizon or 100
    returns = evaluate_policy(mdp, policy, horizon, n_seeds=args.n_seeds, seed=args.seed or 0, n_episodes=args.episodes)
    out = _outdir(args)
    path = out / "evaluation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "mean_return"])
        for i, r in enumerate(returns):
            w.writerow([(args.seed or 0) + i, repr(float(r))])
    print(path)
    print(f"mean {returns.mean():.6g}  min {returns.min():.6g}  max {returns.max():.6g}")


def cmd_bench(args) -> None:
    cfg = _load_config(args)
    out = _outdir(args)
    records = run_experiment(cfg)
    (out / "records.json").write_text(records_to_json(records, with_policy=True) + "\n")
    print(out / "records.json")
    for p in export_results(records, "csv", out / "results.csv"):
        print(p)
    summary = trend_summary(records)
    summary["config"] = cfg.to_dict()
    summary["config_hash"] = cfg.digest()
    _write_json(out / "summary.json", _finite(summary))


def cmd_bounds(args) -> None:
    doc = _json_arg(args.inputs)
    if args.mdp or args.env:
        mdp = _load_env(args)
        est = estimate_lipschitz(mdp, seed=args.seed or 0)
        d_Y, alpha = jump_sizes(mdp)
        measured = {"gamma": mdp.gamma, "r_max": mdp.r_max, "L_r": est.L_r, "L_f": est.L_f, "L_U": est.L_U}
        measured |= {"d_Y": d_Y, "alpha": alpha}
        doc = measured | doc  # explicit inputs win
        estimates = est.to_dict()
    else:
        estimates = None
    try:
        inp = BoundInputs.from_dict(doc)
    except TypeError as exc:
        raise BoundDomainError(f"bad bound inputs: {exc}") from None
    report = bound_report(inp, args.which)
    if estimates is not None:
        report["estimates"] = estimates
    report = _finite(report)
    if args.output:
        _write_json(_outdir(args) / f"bound_{args.which}.json", report)
    else:
        print(json.dumps(report, sort_keys=True, indent=1))


def cmd_export(args) -> None:
    records = _load_records(args.records)
    if args.slice:
        spec = _json_arg(args.slice)
        groups: dict = {}
        for r in records:
            if r.policy is None:
                raise ExportError(f"record {r.method}/{r.seed} carries no policy")
            groups.setdefault(r.method, []).append(r)
        prov = records[0].provenance
        mdp = make_env(prov["env"], prov["env_params"])
        doc = {m: export_policy_grid([r.policy for r in rs], mdp, spec) for m, rs in groups.items()}
        target = Path(args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        _write_json(target, doc)
        return
    for p in export_results(records, args.format, args.output):
        print(p)


def _finite(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return str(float(obj))
    return obj


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastslow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def env_flags(p, mdp=True):
        p.add_argument("--env", help="queue | bandit | demand_response | random")
        p.add_argument("--params", help="environment parameters (JSON text or file)")
        if mdp:
            p.add_argument("--mdp", help="saved environment file (overrides --env)")

    def run_flags(p):
        p.add_argument("--config", help="experiment config file (JSON)")
        p.add_argument("--env", help="use the default config for this environment")
        p.add_argument("--seed", type=int, help="first seed")
        p.add_argument("--workers", type=int, help="parallel worker processes")

    p = sub.add_parser("build-env", help="build an environment and save it")
    env_flags(p, mdp=False)
    p.add_argument("-o", "--output", default="out")
    p.set_defaults(func=cmd_build_env)

    p = sub.add_parser("solve", help="run solvers once and save their policies")
    run_flags(p)
    p.add_argument("--method", help="method key (default: every method in the config)")
    p.add_argument("-o", "--output", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of a saved policy")
    env_flags(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", default="out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="cost-metered experiment with evaluation curves")
    run_flags(p)
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("-o", "--output", default="out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bounds", help="evaluate a regret bound")
    p.add_argument("--which", choices=["fsvi", "nominal", "fsavi"], default="fsvi")
    p.add_argument("--inputs", help="bound inputs (JSON text or file)")
    env_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("export", help="re-export saved records or policy grids")
    p.add_argument("--records", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--slice", help="policy-grid slice spec (JSON text or file)")
    p.add_argument("-o", "--output", required=True, help="output file")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
