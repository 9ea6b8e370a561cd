"""Initial data: densities and velocities on the line, and their particle samples.

Particles are placed at quantile midpoints of the density, each carrying
mass ``1/n``.  The same profile can be averaged onto a uniform grid for the
finite-volume oracle, so both solvers start from one measure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gas import ParticleState, reconstruct_density

KINDS = ("riemann", "gaussian_blob", "two_blob", "custom_csv", "constant")
_FINE = 20001


@dataclass(frozen=True)
class InitialData:
    """Density and velocity profile with compact support ``[lo, hi]``.

    ``cdf_knots`` holds a monotone table ``(x, F(x))`` whose linear
    interpolation is the cumulative mass; for piecewise-constant densities it
    is exact.
    """

    kind: str
    lo: float
    hi: float
    density: Callable
    velocity: Callable
    cdf_knots: tuple
    params: dict = field(default_factory=dict)

    def cdf(self, x):
        xs, Fs = self.cdf_knots
        return np.interp(x, xs, Fs, left=0.0, right=1.0)

    def quantile(self, q):
        xs, Fs = self.cdf_knots
        # drop flat stretches so the inverse is single valued
        keep = np.concatenate(([True], np.diff(Fs) > 0))
        return np.interp(q, Fs[keep], xs[keep])

    def particles(self, n: int) -> ParticleState:
        if n < 2:
            raise ValueError("need at least two particles")
        q = (np.arange(n) + 0.5) / n
        x = self.quantile(q)
        return ParticleState(x, np.full(n, 1.0 / n), self.velocity(x))

    def grid(self, n_cells: int, lo: float | None = None, hi: float | None = None):
        """Cell averages ``(centers, rho, momentum, dx)`` on a uniform grid."""
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        edges = np.linspace(lo, hi, n_cells + 1)
        dx = edges[1] - edges[0]
        rho = np.diff(self.cdf(edges)) / dx
        centers = 0.5 * (edges[:-1] + edges[1:])
        return centers, rho, rho * self.velocity(centers), dx


def _table_from_density(density, lo, hi, n=_FINE):
    xs = np.linspace(lo, hi, n)
    d = np.maximum(density(xs), 0.0)
    F = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(xs))))
    if F[-1] <= 0:
        raise ValueError("density has no mass on its support")
    return xs, F / F[-1], F[-1]


def riemann(rho_left: float, u_left: float, rho_right: float, u_right: float,
            lo: float = -1.0, hi: float = 1.0, x0: float = 0.0) -> InitialData:
    """Two constant states joined at ``x0``, normalized to unit mass on ``[lo, hi]``."""
    if not (lo < x0 < hi) or rho_left <= 0 or rho_right <= 0:
        raise ValueError("need lo < x0 < hi and positive densities")
    total = rho_left * (x0 - lo) + rho_right * (hi - x0)
    rl, rr = rho_left / total, rho_right / total

    def density(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= lo) & (x <= hi), np.where(x < x0, rl, rr), 0.0)

    def velocity(x):
        return np.where(np.asarray(x, dtype=float) < x0, u_left, u_right).astype(float)

    knots = (np.array([lo, x0, hi]), np.array([0.0, rl * (x0 - lo), 1.0]))
    params = dict(rho_left=rho_left, u_left=u_left, rho_right=rho_right, u_right=u_right,
                  lo=lo, hi=hi, x0=x0)
    return InitialData("riemann", lo, hi, density, velocity, knots, params)


def constant(rho0: float = 1.0, u0: float = 0.0, lo: float = -1.0, hi: float = 1.0) -> InitialData:
    """Uniform state on ``[lo, hi]``; ``rho0`` only fixes the velocity scale since mass is one."""
    data = riemann(rho0, u0, rho0, u0, lo, hi, 0.5 * (lo + hi))
    return InitialData("constant", lo, hi, data.density, data.velocity, data.cdf_knots,
                       dict(rho0=rho0, u0=u0, lo=lo, hi=hi))


def _linear_velocity(u0, du):
    return lambda x: u0 + du * np.asarray(x, dtype=float)


def gaussian_blob(center: float = 0.0, width: float = 0.25, u0: float = 0.0, du: float = 0.0,
                  cutoff: float = 4.0) -> InitialData:
    """Gaussian truncated at ``cutoff`` widths, velocity ``u0 + du x``."""
    if width <= 0 or cutoff <= 0:
        raise ValueError("width and cutoff must be positive")
    lo, hi = center - cutoff * width, center + cutoff * width

    def raw(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= lo) & (x <= hi), np.exp(-0.5 * ((x - center) / width) ** 2), 0.0)

    xs, F, mass = _table_from_density(raw, lo, hi)
    params = dict(center=center, width=width, u0=u0, du=du, cutoff=cutoff)
    return InitialData("gaussian_blob", lo, hi, lambda x: raw(x) / mass,
                       _linear_velocity(u0, du), (xs, F), params)


def two_blob(separation: float = 1.0, width: float = 0.2, closing_speed: float = 0.5,
             weight: float = 0.5, cutoff: float = 4.0) -> InitialData:
    """Two Gaussian blobs at ``-+separation/2`` moving toward each other."""
    if not (0 < weight < 1) or width <= 0:
        raise ValueError("need 0 < weight < 1 and width > 0")
    c1, c2 = -0.5 * separation, 0.5 * separation
    lo, hi = c1 - cutoff * width, c2 + cutoff * width

    def raw(x):
        x = np.asarray(x, dtype=float)
        g1 = np.where(np.abs(x - c1) <= cutoff * width, np.exp(-0.5 * ((x - c1) / width) ** 2), 0.0)
        g2 = np.where(np.abs(x - c2) <= cutoff * width, np.exp(-0.5 * ((x - c2) / width) ** 2), 0.0)
        return weight * g1 + (1 - weight) * g2

    def velocity(x):
        return np.where(np.asarray(x, dtype=float) < 0, closing_speed, -closing_speed).astype(float)

    xs, F, mass = _table_from_density(raw, lo, hi)
    params = dict(separation=separation, width=width, closing_speed=closing_speed,
                  weight=weight, cutoff=cutoff)
    return InitialData("two_blob", lo, hi, lambda x: raw(x) / mass, velocity, (xs, F), params)


def from_state(state: ParticleState, kind: str = "custom_csv", params: dict | None = None) -> InitialData:
    """Profile of a particle state: gap-reconstructed density, interpolated velocity."""
    rec = reconstruct_density(state, ghost_cells=True)
    edges, dens = rec.cell_edges, rec.cell_densities
    F = np.concatenate(([0.0], np.cumsum(rec.cell_masses)))
    F /= F[-1]

    def density(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, dens.size - 1)
        return np.where((x >= edges[0]) & (x <= edges[-1]), dens[i], 0.0)

    xp, vp = state.positions, state.velocities

    def velocity(x):
        return np.interp(x, xp, vp)

    return InitialData(kind, edges[0], edges[-1], density, velocity, (edges, F), params or {})


def custom_csv(path) -> InitialData:
    state = ParticleState.from_csv(path)
    return from_state(state, "custom_csv", {"path": str(path)})


def build(kind: str, params: dict) -> InitialData:
    """Construct initial data by name (used by the config layer)."""
    factories = {"riemann": riemann, "gaussian_blob": gaussian_blob, "two_blob": two_blob,
                 "custom_csv": custom_csv, "constant": constant}
    if kind not in factories:
        raise ValueError(f"unknown initial condition kind {kind!r}; expected one of {KINDS}")
    return factories[kind](**params)


def from_reference(ref) -> InitialData:
    """Initial data sampled from a smooth reference with bounded support."""
    lo, hi = ref.support
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("reference must have bounded support")
    xs, F, mass = _table_from_density(ref.R, lo, hi)
    return InitialData("reference", lo, hi, lambda x: ref.R(x) / mass, ref.W, (xs, F),
                       {"kind": ref.kind})
