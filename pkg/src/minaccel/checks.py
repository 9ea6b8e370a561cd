"""Invariant suite evaluated on every run.

Each check reports the observed value, the bound it is held to and the
margin ``bound - value`` (nonnegative when the check passes).  Checks marked
informational record a quantity without a pass/fail threshold.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .diagnostics import DiagnosticSeries
from .trajectory import PIECEWISE_LINEAR, Trajectory, sample
from .transport import AtomicMeasure, bl_norm, wasserstein_p


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: float
    informational: bool = False

    @property
    def margin(self) -> float:
        return self.bound - self.value

    def as_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        # JSON has no infinity: unbounded entries are reported as null
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def _bounded(name, value, bound, informational=False):
    value = float(value)
    return CheckResult(name, bool(np.isfinite(value) and value <= bound), value, float(bound),
                       informational)


def lipschitz_bound(traj: Trajectory) -> float:
    """``sqrt(2 E_0)``, the speed limit implied by the initial energy."""
    return math.sqrt(2.0 * max(traj.initial_energy, 0.0))


def wasserstein_quotients(traj: Trajectory, times) -> np.ndarray:
    """``W2 / dt`` over consecutive samples of the linear interpolant and over
    consecutive nodes of the piecewise-constant one."""
    states = [sample(traj, t, PIECEWISE_LINEAR).state for t in times]
    q = [wasserstein_p(AtomicMeasure.from_state(a), AtomicMeasure.from_state(b)) / (t1 - t0)
         for a, b, t0, t1 in zip(states[:-1], states[1:], times[:-1], times[1:])]
    for k in range(traj.n_steps):
        a, b = traj.states[k], traj.states[k + 1]
        q.append(wasserstein_p(AtomicMeasure.from_state(a), AtomicMeasure.from_state(b)) / traj.tau)
    return np.array(q)


def momentum_quotients(traj: Trajectory, times, n_pairs: int) -> np.ndarray:
    """``||M_t - M_s||_BL / |t - s|`` on up to ``n_pairs`` evenly spread consecutive pairs."""
    if n_pairs <= 0 or len(times) < 2:
        return np.zeros(0)
    idx = np.unique(np.linspace(0, len(times) - 2, min(n_pairs, len(times) - 1)).round().astype(int))
    out = []
    for i in idx:
        t0, t1 = times[i], times[i + 1]
        a = sample(traj, t0, PIECEWISE_LINEAR).state
        b = sample(traj, t1, PIECEWISE_LINEAR).state
        d, _ = bl_norm(AtomicMeasure.momentum_of(b) - AtomicMeasure.momentum_of(a))
        out.append(d / (t1 - t0))
    return np.array(out)


def run_checks(traj: Trajectory, series: DiagnosticSeries, bl_pairs: int = 40) -> list:
    E0 = traj.initial_energy
    speed = lipschitz_bound(traj)
    energies = traj.energies()
    ledger = [s.dissipation.margin for s in traj.solutions]
    el = [s.el_residual for s in traj.solutions]
    t = series.times
    M0 = float(series.M2[0])
    results = [
        _bounded("energy_monotone", np.max(np.diff(energies), initial=0.0), 1e-8 * E0),
        _bounded("dissipation_ledger", -min(ledger), 1e-8),
        _bounded("euler_lagrange", max(el), traj.options.el_tol),
        _bounded("linear_below_constant_energy", np.max(series.N - series.E), 1e-8),
        _bounded("sampled_energy_monotone", np.max(np.diff(series.E), initial=0.0), 1e-8),
        _bounded("moment_growth", np.max(series.M2 - (M0 + t * speed)), 1e-6),
        _bounded("wasserstein_lipschitz", np.max(wasserstein_quotients(traj, t)), speed + 1e-6),
        _bounded("defect_ordering",
                 np.max(series.defect_linear_total - series.defect_constant_total), 1e-8),
        _bounded("energy_decomposition", np.max(np.abs(series.decomposition_gap)), 1e-8),
        _bounded("acceleration_nonnegative", -np.min(series.a), 0.0),
    ]
    # per-step bound: energy of the linear interpolant never exceeds the node energy
    k = np.minimum(np.floor(t / traj.tau + 1e-9).astype(int), traj.n_steps - 1)
    results.append(_bounded("step_energy_bound", np.max(series.N - energies[k]), 1e-8))
    mq = momentum_quotients(traj, t, bl_pairs)
    results.append(CheckResult("momentum_bl_lipschitz", bool(np.all(np.isfinite(mq))),
                               float(np.max(mq, initial=0.0)), math.inf, True))
    vr = np.abs(series.virial_residual)
    free_flow = traj.law.pressureless and not any(np.any(s.active) for s in traj.solutions)
    if free_flow:
        results.append(_bounded("virial_identity", np.max(vr), 1e-10))
    else:
        results.append(CheckResult("virial_identity", True, float(np.max(vr)), math.inf, True))
    return results


def all_passed(results) -> bool:
    return all(r.passed for r in results)
