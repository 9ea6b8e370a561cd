"""Run orchestration and artifact directories."""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import initial as ic
from .checks import all_passed, run_checks
from .config import RunConfig, dump_config
from .diagnostics import (DiagnosticSeries, coarse_grain, default_n_cells, diagnose,
                          relative_energy)
from .gas import ParticleState
from .oracle import fv_solve, grid_from_profile
from .trajectory import PIECEWISE_LINEAR, Trajectory, march, sample, write_trajectory
from .transport import AtomicMeasure, wasserstein_p

OUTPUT_ROOT_ENV = "MINACCEL_OUTPUT_ROOT"


def resolve_output_dir(cfg: RunConfig, override: str | None = None) -> Path:
    """Artifact directory: ``override``, else ``output_dir`` under the env root if set."""
    target = Path(override if override is not None else cfg.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not target.is_absolute():
        target = Path(root) / target
    return target


def initial_data(cfg: RunConfig) -> ic.InitialData:
    params = dict(cfg.ic_params)
    if cfg.ic_kind == "custom_csv":
        params["path"] = str(Path(cfg.base_dir) / params["path"])
    return ic.build(cfg.ic_kind, params)


def initial_state(cfg: RunConfig) -> ParticleState:
    if cfg.ic_kind == "custom_csv":
        return ParticleState.from_csv(Path(cfg.base_dir) / cfg.ic_params["path"])
    return initial_data(cfg).particles(cfg.n_particles)


def initial_data_hash(cfg: RunConfig) -> str:
    """Hash of the initial measure's description (independent of the particle count)."""
    payload = {"kind": cfg.ic_kind, "params": cfg.ic_params}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
    if cfg.ic_kind == "custom_csv":
        digest.update((Path(cfg.base_dir) / cfg.ic_params["path"]).read_bytes())
    return digest.hexdigest()


class InvariantViolation(RuntimeError):
    def __init__(self, failed):
        self.failed = failed
        names = ", ".join(f"{r.name} (value {r.value:.3e}, bound {r.bound:.3e})" for r in failed)
        super().__init__(f"invariant check failed: {names}")


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    trajectory: Trajectory
    series: DiagnosticSeries
    checks: list
    wall_time: float

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)


def execute(cfg: RunConfig) -> RunResult:
    """March, diagnose and check one configuration."""
    start = time.perf_counter()
    state = initial_state(cfg)
    traj = march(state, cfg.law, cfg.tau, cfg.t_end, cfg.solver_options)
    n_cells = cfg.n_cells or default_n_cells(state.n)
    series = diagnose(traj, cfg.samples_per_step, n_cells)
    checks = run_checks(traj, series, cfg.bl_pairs)
    return RunResult(cfg, traj, series, checks, time.perf_counter() - start)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run(result: RunResult, directory) -> dict:
    """Write states, ledger, diagnostics and a self-describing manifest."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = write_trajectory(result.trajectory, root)
    result.series.to_csv(root / "diagnostics.csv")
    (root / "config.toml").write_text(dump_config(result.config))
    manifest.update({
        "config": result.config.as_dict(),
        "initial_data_hash": initial_data_hash(result.config),
        "hashes": {name: _sha(root / name) for name in ("diagnostics.csv", "ledger.csv",
                                                         "config.toml")},
        "wall_time_s": result.wall_time,
        "invariants": [c.as_dict() for c in result.checks],
        "all_invariants_pass": result.passed,
        "files": {"diagnostics": "diagnostics.csv", "ledger": "ledger.csv", "states": "states/"},
    })
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def run(cfg: RunConfig, directory=None) -> tuple:
    """Execute and persist; raises ``InvariantViolation`` after writing if a check fails."""
    result = execute(cfg)
    out = resolve_output_dir(cfg, directory)
    manifest = write_run(result, out)
    failed = [c for c in result.checks if not c.passed]
    if failed:
        raise InvariantViolation(failed)
    return result, out, manifest


# oracle comparison -------------------------------------------------------------

def oracle_comparison(cfg: RunConfig):
    """Compare the particle solution with the finite-volume oracle at every node time.

    Returns rows ``(t, W2, relative_energy)``.  ``W2`` is measured against the
    oracle density sampled at the particles' own quantile midpoints, so the
    cost of representing a continuum by atoms cancels and equal solutions
    give zero.  The relative energy treats the
    oracle's cell values, interpolated to coarse-cell centers, as the
    reference and is summed over cells where the oracle density exceeds
    ``1e-8``.
    """
    data = initial_data(cfg)
    state = initial_state(cfg)
    law = cfg.law
    traj = march(state, law, cfg.tau, cfg.t_end, cfg.solver_options)
    width = data.hi - data.lo
    lo, hi = data.lo - cfg.oracle_pad * width, data.hi + cfg.oracle_pad * width
    cells = cfg.oracle_cells or 2 * state.n
    centers, rho, mom, _ = data.grid(cells, lo, hi)
    times = [min(k * cfg.tau, cfg.t_end) for k in range(traj.n_steps + 1)]
    _, snaps = fv_solve(grid_from_profile(centers, rho, mom, cfl=cfg.oracle_cfl), law, cfg.t_end,
                        cfg.oracle_cfl, record_times=times)
    n_cells = cfg.n_cells or default_n_cells(state.n)
    rows = []
    for t, fv in zip(times, snaps):
        st = sample(traj, t, PIECEWISE_LINEAR).state
        proj = AtomicMeasure(fv.quantile_particles(st.masses), st.masses)
        w2 = wasserstein_p(AtomicMeasure.from_state(st), proj)
        field = coarse_grain(st, law, n_cells, cfg.ghost_cells)
        R = np.interp(field.centers, fv.cell_centers, fv.rho)
        W = np.interp(field.centers, fv.cell_centers, fv.velocity)
        mask = R > 1e-8
        rel = relative_energy(field, R, W, law, window=mask) if np.any(mask) else 0.0
        rows.append((t, w2, rel))
    return rows


def comparison_csv(rows) -> str:
    lines = ["t,W2,relative_energy"]
    lines += [",".join(f"{float(v):.17g}" for v in row) for row in rows]
    return "\n".join(lines) + "\n"

