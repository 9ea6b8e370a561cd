"""Reference solutions: a first-order finite-volume solver and closed-form fields.

The finite-volume scheme uses the local Lax-Friedrichs (Rusanov) flux with
forward Euler time stepping and zero-gradient outflow boundaries.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gas import GasLaw

DENSITY_FLOOR = 1e-14


@dataclass(frozen=True)
class GridSolution:
    cell_centers: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    time: float
    cfl: float

    @property
    def dx(self) -> float:
        return float(self.cell_centers[1] - self.cell_centers[0])

    @property
    def velocity(self) -> np.ndarray:
        return np.divide(self.m, self.rho, out=np.zeros_like(self.m), where=self.rho > DENSITY_FLOOR)

    def mass(self) -> float:
        return float(self.rho.sum() * self.dx)

    def momentum(self) -> float:
        return float(self.m.sum() * self.dx)

    def energy(self, law: GasLaw) -> float:
        kin = 0.5 * self.m * self.velocity
        return float(np.sum(kin + law.internal_energy_density(self.rho)) * self.dx)

    def quantile_particles(self, masses) -> np.ndarray:
        """Positions placing ``masses`` at the midpoints of their quantile ranges."""
        masses = np.asarray(masses, dtype=float)
        edges = self.edges()
        cell_mass = np.clip(self.rho, 0, None) * self.dx
        G = np.concatenate(([0.0], np.cumsum(cell_mass))) / cell_mass.sum()
        q = (np.cumsum(masses) - 0.5 * masses) / masses.sum()
        j = np.clip(np.searchsorted(G, q, side="left") - 1, 0, cell_mass.size - 1)
        frac = (q - G[j]) / np.where(cell_mass[j] > 0, G[j + 1] - G[j], 1.0)
        return edges[j] + np.clip(frac, 0, 1) * self.dx

    def edges(self) -> np.ndarray:
        h = self.dx
        return np.append(self.cell_centers - 0.5 * h, self.cell_centers[-1] + 0.5 * h)


def _flux(rho, m, law):
    u = np.divide(m, rho, out=np.zeros_like(m), where=rho > DENSITY_FLOOR)
    return m, m * u + law.pressure(rho), u


def _rusanov_step(rho, m, law, dt, dx):
    f1, f2, u = _flux(rho, m, law)
    speed = np.abs(u) + law.sound_speed(rho)
    # outflow: copy the boundary cells
    rp = np.concatenate(([rho[0]], rho, [rho[-1]]))
    mp = np.concatenate(([m[0]], m, [m[-1]]))
    f1p = np.concatenate(([f1[0]], f1, [f1[-1]]))
    f2p = np.concatenate(([f2[0]], f2, [f2[-1]]))
    sp = np.concatenate(([speed[0]], speed, [speed[-1]]))
    a = np.maximum(sp[:-1], sp[1:])
    F1 = 0.5 * (f1p[:-1] + f1p[1:]) - 0.5 * a * (rp[1:] - rp[:-1])
    F2 = 0.5 * (f2p[:-1] + f2p[1:]) - 0.5 * a * (mp[1:] - mp[:-1])
    return rho - dt / dx * np.diff(F1), m - dt / dx * np.diff(F2)


def _max_speed(rho, m, law):
    u = np.divide(m, rho, out=np.zeros_like(m), where=rho > DENSITY_FLOOR)
    return float(np.max(np.abs(u) + law.sound_speed(rho)))


def fv_solve(initial: GridSolution, law: GasLaw, t_end: float, cfl: float = 0.45,
             record_times=None):
    """Advance ``initial`` to ``t_end``.

    Parameters
    ----------
    initial : GridSolution
        Uniform-grid cell averages at ``initial.time``.
    law : GasLaw
    t_end : float
        Final time (absolute).
    cfl : float
        Courant number in ``(0, 1)``.
    record_times : sequence of float, optional
        Times at which snapshots are also returned; steps are shortened to
        land on them exactly.

    Returns
    -------
    GridSolution or (GridSolution, list of GridSolution)
        The final state, plus the snapshots when ``record_times`` is given.
    """
    if not 0 < cfl < 1:
        raise ValueError("cfl must lie in (0, 1)")
    if t_end < initial.time:
        raise ValueError("t_end precedes the initial time")
    dx = initial.dx
    rho = np.array(initial.rho, dtype=float)
    m = np.array(initial.m, dtype=float)
    if np.any(rho < 0):
        raise ValueError("negative initial density")
    targets = sorted(float(t) for t in (record_times or []))
    stops = sorted(set(targets + [float(t_end)]))
    snaps = {}
    t = float(initial.time)
    floored = False
    for stop in stops:
        while t < stop - 1e-14 * max(1.0, stop):
            smax = _max_speed(rho, m, law)
            dt = cfl * dx / smax if smax > 0 else stop - t
            dt = min(dt, stop - t)
            rho, m = _rusanov_step(rho, m, law, dt, dx)
            low = rho < DENSITY_FLOOR
            if np.any(low):
                if np.any(rho < -DENSITY_FLOOR) and not floored:
                    warnings.warn("density fell below the vacuum floor; clamping", RuntimeWarning)
                    floored = True
                rho = np.where(low, 0.0, rho)
                m = np.where(low, 0.0, m)
            t += dt
        t = stop
        snaps[stop] = GridSolution(initial.cell_centers, rho.copy(), m.copy(), stop, cfl)
    final = snaps[float(t_end)]
    if record_times is None:
        return final
    return final, [snaps[s] for s in targets]


def grid_from_profile(centers, rho, m, time: float = 0.0, cfl: float = 0.45) -> GridSolution:
    return GridSolution(np.asarray(centers, dtype=float), np.asarray(rho, dtype=float),
                        np.asarray(m, dtype=float), float(time), cfl)


@dataclass(frozen=True)
class SmoothReference:
    """Classical solution ``(R, W)`` at one time with its gradient bound.

    ``c`` is ``sup |dW/dx|`` at this time and ``integrated_c`` its integral
    over ``[0, t]``.
    """

    kind: str
    time: float
    R: Callable
    W: Callable
    c: float
    integrated_c: float
    support: tuple[float, float]


def _default_profile(xi):
    xi = np.asarray(xi, dtype=float)
    return np.where(np.abs(xi) < 1, (15.0 / 16.0) * (1 - xi**2) ** 2, 0.0)


def smooth_reference(kind: str, params: dict, t: float) -> SmoothReference:
    """Closed-form classical solutions.

    ``constant`` takes ``rho0`` and ``u0``.  ``free_transport`` (pressureless)
    takes ``a`` and ``b`` for the initial velocity ``a x + b`` and an optional
    density profile ``R0`` supported in ``[-1, 1]``; characteristics cross at
    ``t = -1/a`` when ``a < 0``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if kind == "constant":
        rho0, u0 = float(params.get("rho0", 1.0)), float(params.get("u0", 0.0))
        if rho0 <= 0:
            raise ValueError("rho0 must be positive")
        return SmoothReference(kind, t, lambda x: np.full_like(np.asarray(x, dtype=float), rho0),
                               lambda x: np.full_like(np.asarray(x, dtype=float), u0), 0.0, 0.0,
                               (-math.inf, math.inf))
    if kind == "free_transport":
        if float(params.get("kappa", 0.0)) != 0.0:
            raise ValueError("free transport reference requires kappa = 0")
        a, b = float(params.get("a", 1.0)), float(params.get("b", 0.0))
        R0 = params.get("R0", _default_profile)
        J = 1 + a * t
        if J <= 0:
            raise ValueError(f"t = {t} is beyond the classical lifespan {-1 / a}")

        def xi(x):
            return (np.asarray(x, dtype=float) - b * t) / J

        c = abs(a) / J
        if a == 0:
            ic = 0.0
        elif a > 0:
            ic = math.log(J)
        else:
            ic = -math.log(J)
        return SmoothReference(kind, t, lambda x: R0(xi(x)) / J, lambda x: a * xi(x) + b, c, ic,
                               (-J + b * t, J + b * t))
    raise ValueError(f"unknown reference kind {kind!r}")
