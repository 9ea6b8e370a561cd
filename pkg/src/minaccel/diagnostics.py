"""Coarse-grained surrogates of the Young-measure quantities of a run.

A particle sample is averaged over uniform coarse cells.  Per cell we keep the
moments the flux and energy computations need: the particle mass density,
mean velocity and second-moment flux ``sum m v^2 / width``, and the
reconstructed (fine) density and pressure averages.  Jensen's inequality
makes the gaps

    Q   = second_moment_flux - rbar * ubar**2
    phi = pressure_avg - P(rbar_fine)

nonnegative; these are the kinetic and pressure defects of the sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .gas import GasLaw, ParticleState, reconstruct_density, second_moment, total_energy
from .trajectory import (PIECEWISE_CONSTANT, PIECEWISE_LINEAR, InterpolantSample, Trajectory,
                         sample, sample_times)

JENSEN_TOL = 1e-10


class ConsistencyError(RuntimeError):
    """A Jensen gap came out negative beyond round-off."""


@dataclass(frozen=True)
class CoarseField:
    cell_edges: np.ndarray
    rbar: np.ndarray
    ubar: np.ndarray
    second_moment_flux: np.ndarray
    pressure_avg: np.ndarray
    rbar_fine: np.ndarray
    internal_avg: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cell_edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.cell_edges[:-1] + self.cell_edges[1:])


@dataclass(frozen=True)
class DefectFields:
    Q: np.ndarray
    phi: np.ndarray

    def total(self, widths, gamma: float) -> float:
        """Energy carried by the defects, ``sum (Q/2 + phi/(gamma-1)) * width``."""
        return float(np.sum((0.5 * self.Q + self.phi / (gamma - 1)) * widths))


def default_n_cells(n_particles: int) -> int:
    return max(1, int(math.ceil(math.sqrt(n_particles))))


def _hull(state: ParticleState, ghost_cells: bool):
    x = state.positions
    if ghost_cells and state.n >= 2:
        return x[0] - (x[1] - x[0]), x[-1] + (x[-1] - x[-2])
    return x[0], x[-1]


def coarse_grain(sample_: InterpolantSample | ParticleState, law: GasLaw, n_cells: int,
                 ghost_cells: bool = True) -> CoarseField:
    """Average a sample over ``n_cells`` uniform cells covering its hull."""
    state = sample_.state if isinstance(sample_, InterpolantSample) else sample_
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    lo, hi = _hull(state, ghost_cells)
    if not hi > lo:
        raise ValueError("empty hull")
    edges = np.linspace(lo, hi, n_cells + 1)
    w = np.diff(edges)
    x, m, v = state.positions, state.masses, state.velocities
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_cells - 1)
    mass = np.bincount(idx, weights=m, minlength=n_cells)
    mom = np.bincount(idx, weights=m * v, minlength=n_cells)
    flux = np.bincount(idx, weights=m * v * v, minlength=n_cells)
    ubar = np.divide(mom, mass, out=np.zeros(n_cells), where=mass > 0)

    if state.n >= 2:
        rec = reconstruct_density(state, ghost_cells)
        fine_mass = np.concatenate(([0.0], np.cumsum(rec.cell_masses)))
        fine_P = np.concatenate(([0.0], np.cumsum(law.pressure(rec.cell_densities) * rec.widths)))
        fine_U = np.concatenate(([0.0], np.cumsum(
            law.internal_energy_density(rec.cell_densities) * rec.widths)))
        # cumulative integrals are piecewise linear in x
        cm = np.interp(edges, rec.cell_edges, fine_mass)
        cP = np.interp(edges, rec.cell_edges, fine_P)
        cU = np.interp(edges, rec.cell_edges, fine_U)
        rbar_fine = np.diff(cm) / w
        pavg = np.diff(cP) / w
        uavg = np.diff(cU) / w
    else:
        rbar_fine = mass / w
        pavg = law.pressure(rbar_fine)
        uavg = law.internal_energy_density(rbar_fine)
    return CoarseField(edges, mass / w, ubar, flux / w, pavg, rbar_fine, uavg)


def _clamp(gap, scale, what):
    tol = JENSEN_TOL * np.maximum(1.0, scale)
    if np.any(gap < -tol):
        raise ConsistencyError(f"negative {what} defect {gap.min():.3e}")
    return np.maximum(gap, 0.0)


def defects(field: CoarseField, law: GasLaw) -> DefectFields:
    """Kinetic and pressure Jensen gaps per coarse cell."""
    Q = field.second_moment_flux - field.rbar * field.ubar**2
    phi = field.pressure_avg - law.pressure(field.rbar_fine)
    return DefectFields(_clamp(Q, field.second_moment_flux, "kinetic"),
                        _clamp(phi, field.pressure_avg, "pressure"))


def resolved_energy(field: CoarseField, law: GasLaw) -> float:
    """Energy of the coarse state ``sum (rbar ubar^2/2 + U(rbar_fine)) width``."""
    e = 0.5 * field.rbar * field.ubar**2 + law.internal_energy_density(field.rbar_fine)
    return float(np.sum(e * field.widths))


def defect_total_against(energy: float, mean_field: CoarseField, law: GasLaw) -> float:
    """Total defect of a family with energy ``energy`` relative to the coarse
    state ``mean_field`` (its density and momentum barycenter)."""
    return energy - resolved_energy(mean_field, law)


def acceleration(linear: InterpolantSample, constant: InterpolantSample, law: GasLaw,
                 n_cells: int, ghost_cells: bool = True, d: int = 1) -> float:
    """Trace integral of the momentum flux.

    The kinetic part ``[M^2/rho]`` comes from the piecewise-linear sample and
    the pressure part ``[[P]]`` from the piecewise-constant one.
    """
    fl = coarse_grain(linear, law, n_cells, ghost_cells)
    fc = coarse_grain(constant, law, n_cells, ghost_cells)
    return float(np.sum(fl.second_moment_flux * fl.widths) + d * np.sum(fc.pressure_avg * fc.widths))


def _moment_A(traj: Trajectory, t: float) -> float:
    s = sample(traj, t, PIECEWISE_LINEAR).state
    return float(np.sum(s.masses * s.positions * s.velocities))


def virial_terms(traj: Trajectory, t: float, n_cells: int | None = None):
    """``(dA/dt, trace integral)`` at ``t`` with ``A = sum m X W``.

    ``A`` is quadratic in time inside a step, so a difference quotient whose
    stencil stays in the step containing ``t`` is exact; at a node the step to
    the right is used.
    """
    if not (0 <= t <= traj.t_end + 1e-12):
        raise ValueError("t outside the trajectory")
    tau = traj.tau
    k = min(traj.step_index(t), traj.n_steps - 1)
    t0, t1 = k * tau, (k + 1) * tau
    left, right = t - t0, t1 - t
    if left > 1e-9 * tau and right > 1e-9 * tau:
        h = 0.5 * min(left, right)
        dA = (_moment_A(traj, t + h) - _moment_A(traj, t - h)) / (2 * h)
    elif right > 1e-9 * tau:
        h = 0.25 * right
        dA = (-3 * _moment_A(traj, t) + 4 * _moment_A(traj, t + h) - _moment_A(traj, t + 2 * h)) / (2 * h)
    else:
        h = 0.25 * left
        dA = (3 * _moment_A(traj, t) - 4 * _moment_A(traj, t - h) + _moment_A(traj, t - 2 * h)) / (2 * h)
    n_cells = n_cells or default_n_cells(traj.states[0].n)
    lin = sample(traj, t, PIECEWISE_LINEAR)
    con = _constant_for(traj, t)
    trace = acceleration(lin, con, traj.law, n_cells, traj.options.ghost_cells)
    return dA, trace


def _constant_for(traj: Trajectory, t: float) -> InterpolantSample:
    """Piecewise-constant sample matched to the linear one (left-continuous at t_end)."""
    k = min(traj.step_index(t), traj.n_steps - 1)
    return InterpolantSample(t, PIECEWISE_CONSTANT, traj.states[k].with_time(t))


def virial_residual(traj: Trajectory, t: float, n_cells: int | None = None) -> float:
    """Signed gap ``dA/dt - integral tr(U)`` of the virial identity."""
    dA, trace = virial_terms(traj, t, n_cells)
    return dA - trace


def relative_energy(field: CoarseField, R, W, law: GasLaw, defect_fields: DefectFields | None = None,
                    window=None) -> float:
    """Relative energy of a coarse state with respect to a reference ``(R, W)``.

    ``R`` and ``W`` are arrays on the cell centers or callables of ``x``.
    ``window`` restricts the sum to cells whose centers lie in an interval
    ``(lo, hi)``, or to the cells flagged by a boolean mask.
    """
    xc = field.centers
    Rv = np.asarray(R(xc) if callable(R) else R, dtype=float)
    Wv = np.asarray(W(xc) if callable(W) else W, dtype=float)
    sel = np.ones(xc.size, dtype=bool)
    if window is not None and np.asarray(window).dtype == bool:
        sel = np.asarray(window)
    elif window is not None:
        sel = (xc >= window[0]) & (xc <= window[1])
    if np.any(Rv[sel] <= 0):
        raise ValueError("reference density must be positive on the evaluation cells")
    dfs = defect_fields if defect_fields is not None else defects(field, law)
    w = field.widths
    g = law.gamma
    rf = field.rbar_fine
    kin = 0.5 * field.rbar * (Wv - field.ubar) ** 2
    pot = law.internal_energy_density(rf) - (law.dU(Rv) * (rf - Rv) + law.internal_energy_density(Rv))
    dens = 0.5 * dfs.Q + dfs.phi / (g - 1) + kin + pot
    return float(np.sum((dens * w)[sel]))


@dataclass(frozen=True)
class TensorTest:
    """Space-time test ``eta(t) zeta(x)`` with derivatives."""

    eta: Callable
    deta: Callable
    zeta: Callable
    dzeta: Callable
    support: tuple[float, float]


def bump_test(t0: float, t1: float, zeta: Callable | None = None, dzeta: Callable | None = None,
              ) -> TensorTest:
    """``eta = sin^2`` bump on ``(t0, t1)``; ``zeta`` defaults to the identity."""
    L = t1 - t0

    def eta(t):
        t = np.asarray(t, dtype=float)
        inside = (t > t0) & (t < t1)
        return np.where(inside, np.sin(np.pi * (t - t0) / L) ** 2, 0.0)

    def deta(t):
        t = np.asarray(t, dtype=float)
        inside = (t > t0) & (t < t1)
        return np.where(inside, (np.pi / L) * np.sin(2 * np.pi * (t - t0) / L), 0.0)

    if zeta is None:
        zeta, dzeta = (lambda x: np.asarray(x, dtype=float)), (lambda x: np.ones_like(np.asarray(x, dtype=float)))
    return TensorTest(eta, deta, zeta, dzeta, (t0, t1))


def weak_form_residual(traj: Trajectory, test: TensorTest, nodes: int = 8) -> tuple[float, float]:
    """Residuals of the time-integrated continuity and momentum equations.

    Momentum flux is ``[M^2/rho]`` from the linear interpolant plus ``[[P]]``
    from the piecewise-constant one.  Integrals in time use Gauss-Legendre
    quadrature with ``nodes`` points per step.
    """
    t0, t1 = test.support
    if t0 < 0 or t1 > traj.t_end + 1e-12:
        raise ValueError("test support must lie in [0, t_end]")
    gx, gw = leggauss(nodes)
    law = traj.law
    cont = mom = 0.0
    tau = traj.tau
    ghost = traj.options.ghost_cells
    for k, (st, sol) in enumerate(zip(traj.states[:-1], traj.solutions)):
        a, b = k * tau, min((k + 1) * tau, traj.t_end)
        if b <= t0 or a >= t1 or b <= a:
            continue
        ts = a + (gx + 1) * 0.5 * (b - a)
        ws = gw * 0.5 * (b - a)
        if st.n >= 2 and not law.pressureless:
            rec = reconstruct_density(st, ghost)
            dz = np.diff(test.zeta(rec.cell_edges))
            press = float(np.sum(law.pressure(rec.cell_densities) * dz))
        else:
            press = 0.0
        for t, wq in zip(ts, ws):
            s = (t - a) / tau
            X = st.positions + s * (sol.X - st.positions)
            Wt = (1 - s) * st.velocities + s * sol.W
            z, dz = test.zeta(X), test.dzeta(X)
            e, de = float(test.eta(t)), float(test.deta(t))
            m = st.masses
            cont += wq * (de * np.sum(m * z) + e * np.sum(m * dz * Wt))
            mom += wq * (de * np.sum(m * z * Wt) + e * (np.sum(m * dz * Wt * Wt) + press))
    return float(cont), float(mom)


@dataclass(frozen=True)
class DiagnosticSeries:
    times: np.ndarray
    E: np.ndarray
    N: np.ndarray
    a: np.ndarray
    f: np.ndarray
    virial_lhs: np.ndarray
    virial_rhs: np.ndarray
    defect_Q_total: np.ndarray
    defect_phi_total: np.ndarray
    defect_linear_total: np.ndarray
    defect_constant_total: np.ndarray
    M2: np.ndarray
    decomposition_gap: np.ndarray

    CSV_COLUMNS = ("t", "E", "N", "a", "f", "defect_Q_total", "defect_phi_total",
                   "virial_residual", "M2")

    @property
    def virial_residual(self) -> np.ndarray:
        return self.virial_lhs - self.virial_rhs

    def to_csv(self, path=None) -> str:
        cols = [self.times, self.E, self.N, self.a, self.f, self.defect_Q_total,
                self.defect_phi_total, self.virial_residual, self.M2]
        lines = [",".join(self.CSV_COLUMNS)]
        for row in zip(*cols):
            lines.append(",".join(f"{float(v):.17g}" for v in row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @staticmethod
    def read_csv(path) -> dict:
        data = np.genfromtxt(path, delimiter=",", names=True)
        return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def diagnose(traj: Trajectory, samples_per_step: int = 8, n_cells: int | None = None) -> DiagnosticSeries:
    """Evaluate all diagnostics on the uniform sample grid of a trajectory."""
    law = traj.law
    ghost = traj.options.ghost_cells
    n_cells = n_cells or default_n_cells(traj.states[0].n)
    times = sample_times(traj, samples_per_step)
    out = {k: [] for k in ("E", "N", "a", "vl", "vr", "Q", "phi", "dl", "dc", "M2", "gap")}
    for t in times:
        lin = sample(traj, t, PIECEWISE_LINEAR)
        con = sample(traj, t, PIECEWISE_CONSTANT)
        E = total_energy(con.state, law, ghost).total
        N = total_energy(lin.state, law, ghost).total
        fl = coarse_grain(lin, law, n_cells, ghost)
        fc = coarse_grain(con, law, n_cells, ghost)
        dfl, dfc = defects(fl, law), defects(fc, law)
        dA, trace = virial_terms(traj, t, n_cells)
        out["E"].append(E)
        out["N"].append(N)
        out["a"].append(trace)
        out["vl"].append(dA)
        out["vr"].append(trace)
        out["Q"].append(float(np.sum(dfc.Q * fc.widths)))
        out["phi"].append(float(np.sum(dfc.phi * fc.widths)))
        out["dl"].append(dfl.total(fl.widths, law.gamma))
        # both families share the barycenter carried by the linear interpolant
        out["dc"].append(defect_total_against(E, fl, law))
        out["M2"].append(second_moment(lin.state))
        out["gap"].append(E - resolved_energy(fc, law) - dfc.total(fc.widths, law.gamma))
    arr = {k: np.array(v) for k, v in out.items()}
    return DiagnosticSeries(times, arr["E"], arr["N"], arr["a"], arr["E"].copy(), arr["vl"],
                            arr["vr"], arr["Q"], arr["phi"], arr["dl"], arr["dc"], arr["M2"],
                            arr["gap"])
