"""Time marching with uniform timestep and the two time interpolants.

The piecewise-constant interpolant holds the state of step ``k`` on
``[t_k, t_{k+1})``.  The piecewise-linear interpolant moves particles along
``x + s (X - x)`` while blending velocities ``(1 - s) u + s W`` with
``s = (t - t_k)/tau``; at ``s = 1`` it reaches the next state exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .gas import GasLaw, ParticleState
from .stepper import SolverError, SolverOptions, StepProblem, StepSolution, solve_step

PIECEWISE_CONSTANT = "piecewise_constant"
PIECEWISE_LINEAR = "piecewise_linear"
KINDS = (PIECEWISE_CONSTANT, PIECEWISE_LINEAR)


@dataclass(frozen=True)
class Trajectory:
    tau: float
    t_end: float
    law: GasLaw
    states: tuple  # n_steps + 1 committed states
    solutions: tuple  # n_steps step solutions
    options: SolverOptions

    @property
    def n_steps(self) -> int:
        return len(self.solutions)

    @property
    def steps(self):
        return list(zip(self.states[:-1], self.solutions))

    @property
    def node_times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_steps + 1)

    def energies(self) -> np.ndarray:
        return np.array([s.dissipation.energy_before for s in self.solutions]
                        + [self.solutions[-1].dissipation.energy_after])

    @property
    def initial_energy(self) -> float:
        return self.solutions[0].dissipation.energy_before

    @property
    def final_time(self) -> float:
        """Time of the last node, ``n_steps * tau >= t_end``."""
        return self.n_steps * self.tau

    def step_index(self, time: float) -> int:
        end = max(self.t_end, self.final_time)
        if time < -1e-12 or time > end + 1e-12 * max(1.0, end):
            raise ValueError(f"time {time} outside [0, {end}]")
        k = int(math.floor(time / self.tau + 1e-9))
        return min(max(k, 0), self.n_steps)


@dataclass(frozen=True)
class InterpolantSample:
    time: float
    kind: str
    state: ParticleState


def march(initial: ParticleState, law: GasLaw, tau: float, t_end: float,
          opts: SolverOptions | None = None) -> Trajectory:
    """Run ``ceil(t_end / tau)`` steps of the variational scheme.

    Raises
    ------
    SolverError
        From the failing step, with ``step_index`` set.
    """
    opts = opts or SolverOptions()
    if not (tau > 0 and t_end > 0 and tau <= t_end * (1 + 1e-12)):
        raise ValueError("need 0 < tau <= t_end")
    n_steps = max(1, int(math.ceil(t_end / tau - 1e-9)))
    state = initial.with_time(0.0)
    states, sols = [state], []
    for k in range(n_steps):
        problem = StepProblem(state, law, tau)
        try:
            sol = solve_step(problem, opts)
        except SolverError as err:
            err.step_index = k
            raise
        state = ParticleState(sol.X, state.masses, sol.W, (k + 1) * tau)
        sols.append(sol)
        states.append(state)
    return Trajectory(tau, float(t_end), law, tuple(states), tuple(sols), opts)


def sample(traj: Trajectory, time: float, kind: str = PIECEWISE_LINEAR) -> InterpolantSample:
    """Evaluate one of the two interpolants at ``time``."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    k = traj.step_index(time)
    if kind == PIECEWISE_CONSTANT:
        st = traj.states[k]
        return InterpolantSample(time, kind, st.with_time(time))
    k = min(k, traj.n_steps - 1)
    s = (time - k * traj.tau) / traj.tau
    s = min(max(s, 0.0), 1.0)
    # snap round-off at the nodes so both interpolants agree there exactly
    if s < 1e-12:
        s = 0.0
    elif s > 1.0 - 1e-12:
        s = 1.0
    st, sol = traj.states[k], traj.solutions[k]
    if s == 0.0:
        return InterpolantSample(time, kind, st.with_time(time))
    if s == 1.0:
        return InterpolantSample(time, kind, traj.states[k + 1].with_time(time))
    X = st.positions + s * (sol.X - st.positions)
    W = (1 - s) * st.velocities + s * sol.W
    return InterpolantSample(time, kind, ParticleState(X, st.masses, W, time))


def sample_times(traj: Trajectory, samples_per_step: int = 8) -> np.ndarray:
    """Uniform sample grid: ``samples_per_step`` points per step plus ``t_end``."""
    if samples_per_step < 1:
        raise ValueError("samples_per_step must be >= 1")
    j = np.arange(traj.n_steps * samples_per_step)
    t = j * (traj.tau / samples_per_step)
    t = t[t < traj.t_end - 1e-12 * max(1.0, traj.t_end)]
    return np.append(t, traj.t_end)


# persistence ----------------------------------------------------------------

LEDGER_COLUMNS = ("k", "t", "E_before", "E_after", "velocity_term", "bregman_term",
                  "multiplier_term")


def ledger_rows(traj: Trajectory):
    for k, sol in enumerate(traj.solutions):
        d = sol.dissipation
        yield (k, k * traj.tau, d.energy_before, d.energy_after, d.velocity_term,
               d.bregman_term, d.multiplier_term)


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{float(v):.17g}"


def write_trajectory(traj: Trajectory, directory, extra_manifest: dict | None = None) -> dict:
    """Write ``states/``, ``ledger.csv`` and ``manifest.json`` into ``directory``."""
    root = Path(directory)
    (root / "states").mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    for k, st in enumerate(traj.states):
        text = st.to_csv()
        name = f"states/step_{k:06d}.csv"
        (root / name).write_text(text)
        digest.update(name.encode() + b"\0" + text.encode())
    lines = [",".join(LEDGER_COLUMNS)]
    lines += [",".join(_fmt(v) for v in row) for row in ledger_rows(traj)]
    ledger_text = "\n".join(lines) + "\n"
    (root / "ledger.csv").write_text(ledger_text)
    digest.update(b"ledger.csv\0" + ledger_text.encode())
    manifest = {
        "tau": traj.tau,
        "t_end": traj.t_end,
        "n_steps": traj.n_steps,
        "law": {"kappa": traj.law.kappa, "gamma": traj.law.gamma},
        "options": asdict(traj.options),
        "content_hash": digest.hexdigest(),
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_trajectory(directory) -> Trajectory:
    """Rebuild a trajectory from ``write_trajectory`` output by re-solving steps.

    The stored states fix the initial data and timestep; steps are recomputed
    so that the returned object carries full step solutions.
    """
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    law = GasLaw(**manifest["law"])
    opts = SolverOptions(**manifest["options"])
    initial = ParticleState.from_csv(root / "states" / "step_000000.csv")
    return march(initial, law, manifest["tau"], manifest["t_end"], opts)
