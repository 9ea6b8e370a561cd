"""Polytropic gas law and Lagrangian particle states in one dimension.

A fluid state is a finite collection of particles with positions, masses and
velocities.  The Lebesgue density needed for the internal energy is recovered
from the gaps between consecutive particles: the gap between particles ``i``
and ``i+1`` carries half of each neighbour's mass.  The two leftover half
masses at the ends are placed in ghost cells whose width equals the adjacent
interior gap, so the reconstructed density integrates to one.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MASS_TOL = 1e-12
DEGENERACY_EPS = 1e-12


class DegenerateStateError(ValueError):
    """Raised when particle positions coincide or are out of order."""


@dataclass(frozen=True)
class GasLaw:
    """Polytropic law ``U(r) = kappa r**gamma`` with ``P = (gamma - 1) U``.

    ``kappa = 0`` is accepted and switches the gas to pressureless mode.
    """

    kappa: float
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be >= 0 (got {self.kappa})")
        if not np.isfinite(self.gamma) or self.gamma <= 1:
            raise ValueError(f"gamma must satisfy gamma > 1 (got {self.gamma})")

    @property
    def pressureless(self) -> bool:
        return self.kappa == 0

    def internal_energy_density(self, r):
        return self.kappa * np.power(r, self.gamma)

    def dU(self, r):
        """Derivative ``U'(r)``."""
        return self.kappa * self.gamma * np.power(r, self.gamma - 1)

    def pressure(self, r):
        return (self.gamma - 1) * self.kappa * np.power(r, self.gamma)

    def sound_speed(self, r):
        """``sqrt(P'(r))``."""
        r = np.maximum(r, 0.0)
        return np.sqrt(self.gamma * (self.gamma - 1) * self.kappa * np.power(r, self.gamma - 1))


def pressure_of(law: GasLaw, r):
    """Pressure ``P(r) = (gamma - 1) kappa r**gamma``.

    Works on scalars and arrays.  Negative densities raise ``ValueError``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(~np.isfinite(r_arr)):
        raise ValueError("density must be finite and nonnegative")
    out = law.pressure(r_arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ParticleState:
    """Immutable snapshot of the particle discretization.

    Masses are rescaled to sum to one on construction; the factor used is kept
    in ``mass_scale`` (original total mass).
    """

    positions: np.ndarray
    masses: np.ndarray
    velocities: np.ndarray
    time: float = 0.0
    mass_scale: float = field(default=1.0, compare=False)

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).ravel()
        m = np.array(self.masses, dtype=float).ravel()
        v = np.array(self.velocities, dtype=float).ravel()
        if not (x.size == m.size == v.size) or x.size == 0:
            raise ValueError("positions, masses and velocities must be nonempty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("state arrays must be finite")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        if self.time < 0 or not np.isfinite(self.time):
            raise ValueError("time must be finite and nonnegative")
        total = m.sum()
        scale = float(self.mass_scale)
        if abs(total - 1.0) > MASS_TOL:
            m = m / total
            scale = scale * total
        if x.size > 1:
            gaps = np.diff(x)
            width = x[-1] - x[0]
            if np.any(gaps <= DEGENERACY_EPS * max(width, np.finfo(float).tiny)):
                raise DegenerateStateError("particle positions must be strictly increasing")
        for arr in (x, m, v):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "mass_scale", scale)

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def momentum(self) -> np.ndarray:
        return self.masses * self.velocities

    def translated(self, c: float) -> "ParticleState":
        return ParticleState(self.positions + c, self.masses, self.velocities, self.time)

    def with_time(self, t: float) -> "ParticleState":
        return ParticleState(self.positions, self.masses, self.velocities, t)

    # serialization ---------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("x,m,v\n")
        for xi, mi, vi in zip(self.positions, self.masses, self.velocities):
            buf.write(f"{xi:.17g},{mi:.17g},{vi:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, time: float = 0.0) -> "ParticleState":
        text = Path(source).read_text() if not _looks_like_csv_text(source) else source
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"x", "m", "v"}:
            raise ValueError("state CSV must have header x,m,v")
        x = [float(r["x"]) for r in rows]
        m = [float(r["m"]) for r in rows]
        v = [float(r["v"]) for r in rows]
        return cls(x, m, v, time)

    def to_json(self) -> str:
        return json.dumps(
            {
                "time": self.time,
                "positions": self.positions.tolist(),
                "masses": self.masses.tolist(),
                "velocities": self.velocities.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ParticleState":
        d = json.loads(text)
        return cls(d["positions"], d["masses"], d["velocities"], d.get("time", 0.0))


def _looks_like_csv_text(source) -> bool:
    return isinstance(source, str) and "\n" in source


@dataclass(frozen=True)
class GapDensity:
    """Piecewise-constant density on the cells between ``cell_edges``.

    ``n_ghost_left``/``n_ghost_right`` flag whether the first/last cell is a
    ghost boundary cell.
    """

    cell_edges: np.ndarray
    cell_densities: np.ndarray
    ghost: bool = True

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cell_edges)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.cell_densities * self.widths

    def integral(self) -> float:
        return float(np.sum(self.cell_masses))


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    internal: float

    @property
    def total(self) -> float:
        return self.kinetic + self.internal


def cell_masses(masses: np.ndarray, ghost_cells: bool = True) -> np.ndarray:
    """Mass carried by each reconstruction cell (ghosts first/last if enabled)."""
    interior = 0.5 * (masses[:-1] + masses[1:])
    if not ghost_cells:
        return interior
    return np.concatenate(([0.5 * masses[0]], interior, [0.5 * masses[-1]]))


def cell_edges(positions: np.ndarray, ghost_cells: bool = True) -> np.ndarray:
    if not ghost_cells:
        return np.asarray(positions, dtype=float)
    gaps = np.diff(positions)
    return np.concatenate(([positions[0] - gaps[0]], positions, [positions[-1] + gaps[-1]]))


def reconstruct_density(state: ParticleState, ghost_cells: bool = True) -> GapDensity:
    """Midpoint-mass gap reconstruction of the Lebesgue density.

    Raises
    ------
    DegenerateStateError
        If fewer than two particles are given.
    """
    if state.n < 2:
        raise DegenerateStateError("density reconstruction needs at least two particles")
    edges = cell_edges(state.positions, ghost_cells)
    mass = cell_masses(state.masses, ghost_cells)
    dens = mass / np.diff(edges)
    return GapDensity(edges, dens, ghost_cells)


def internal_energy(state: ParticleState, law: GasLaw, ghost_cells: bool = True) -> float:
    if law.pressureless or state.n < 2:
        return 0.0
    rec = reconstruct_density(state, ghost_cells)
    return float(np.sum(law.internal_energy_density(rec.cell_densities) * rec.widths))


def kinetic_energy(state: ParticleState) -> float:
    return float(0.5 * np.sum(state.masses * state.velocities**2))


def total_energy(state: ParticleState, law: GasLaw, ghost_cells: bool = True) -> EnergyBreakdown:
    """Kinetic plus internal energy of the reconstructed state."""
    return EnergyBreakdown(kinetic_energy(state), internal_energy(state, law, ghost_cells))


def second_moment(state: ParticleState) -> float:
    """Root second moment ``(sum m x**2)**0.5``."""
    return float(np.sqrt(np.sum(state.masses * state.positions**2)))
