"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .diagnostics import ConsistencyError
from .runner import (InvariantViolation, comparison_csv, oracle_comparison, resolve_output_dir,
                     run, write_run)
from .selection import (OBJECTIVES, Ensemble, PartialEnsembleError, perturb_and_run,
                        selection_json, selection_report)
from .stepper import SolverError
from .transport import AtomicMeasure, bl_norm, wasserstein_p

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _, out, manifest = run(cfg, args.out)
    print(json.dumps({"output_dir": str(out), "all_invariants_pass": manifest["all_invariants_pass"]}))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    strategy = args.strategy or cfg.ensemble_strategy
    k = args.k or cfg.ensemble_k
    out = resolve_output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}

    def keep(run_id, member_cfg, result):
        results[run_id] = result
        write_run(result, out / run_id)

    ens = perturb_and_run(cfg, strategy, k, sink=keep)
    (out / "profiles.csv").write_text(ens.profiles_csv())
    meta = {"strategy": strategy, "k": k, "initial_data_hash": ens.initial_hash,
            "members": {m.run_id: m.manifest for m in ens.members},
            "note": "members are generated by heuristic perturbations of one configuration"}
    (out / "ensemble.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    failed = {rid: [c.name for c in r.checks if not c.passed] for rid, r in results.items()}
    failed = {rid: names for rid, names in failed.items() if names}
    print(json.dumps({"ensemble_dir": str(out), "members": ens.run_ids}))
    if failed:
        _err(f"invariant checks failed in members: {failed}")
        return EXIT_INVARIANT
    return EXIT_OK


def load_ensemble(directory) -> Ensemble:
    root = Path(directory)
    meta = json.loads((root / "ensemble.json").read_text())
    return Ensemble.from_profiles_csv((root / "profiles.csv").read_text(), meta.get("members"),
                                      meta.get("initial_data_hash", ""))


def cmd_select(args) -> int:
    ens = load_ensemble(args.ensemble_dir)
    report = selection_report(ens, args.objective, args.tol)
    text = selection_json(report)
    target = Path(args.out) if args.out else Path(args.ensemble_dir) / "selection.json"
    target.write_text(text)
    print(json.dumps({"selection": str(target), "minimal": report["minimal"]}))
    return EXIT_OK


def read_measure(path) -> AtomicMeasure:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    if data.dtype.names is None or set(data.dtype.names) != {"x", "w"}:
        raise ConfigError("measure CSV must have header x,w", source=str(path))
    return AtomicMeasure(data["x"], data["w"])


def cmd_metrics(args) -> int:
    mu, nu = read_measure(args.first), read_measure(args.second)
    if args.metric == "BL":
        value, _ = bl_norm(mu - nu)
    else:
        value = wasserstein_p(mu, nu, 1 if args.metric == "W1" else 2)
    print(json.dumps({"metric": args.metric, "value": float(f"{value:.17g}")}))
    return EXIT_OK


def cmd_oracle_compare(args) -> int:
    cfg = load_config(args.config)
    rows = oracle_comparison(cfg)
    out = resolve_output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(comparison_csv(rows))
    print(json.dumps({"comparison": str(out / "comparison.csv"),
                      "max_W2": max(r[1] for r in rows)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minaccel", description="Variational particle solver for "
                                "1D isentropic gas dynamics with dissipation diagnostics.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="march one configuration and write its artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="artifact directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("ensemble", help="run perturbed copies of a configuration")
    e.add_argument("config")
    e.add_argument("--strategy", choices=["tau", "n_particles", "seed", "n_cells", "mixed"])
    e.add_argument("--k", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("select", help="minimal elements and chains of an ensemble")
    s.add_argument("--ensemble-dir", required=True)
    s.add_argument("--objective", choices=OBJECTIVES, default="acceleration")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--out", help="output file (default: <ensemble-dir>/selection.json)")
    s.set_defaults(func=cmd_select)

    m = sub.add_parser("metrics", help="distance between two measure CSV files (x,w)")
    m.add_argument("first")
    m.add_argument("second")
    m.add_argument("--metric", choices=["W2", "W1", "BL"], default="W2")
    m.set_defaults(func=cmd_metrics)

    o = sub.add_parser("oracle-compare", help="compare against the finite-volume oracle")
    o.add_argument("config")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        _err(str(err))
        return EXIT_CONFIG
    except SolverError as err:
        _err(f"solver failure at step {err.step_index}: {err}")
        return EXIT_SOLVER
    except PartialEnsembleError as err:
        _err(str(err))
        return EXIT_SOLVER
    except (InvariantViolation, ConsistencyError) as err:
        _err(str(err))
        return EXIT_INVARIANT
    except (OSError, ValueError) as err:
        _err(str(err))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
