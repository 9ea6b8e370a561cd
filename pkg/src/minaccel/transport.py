"""Exact one-dimensional transport distances and the bounded-Lipschitz norm.

Wasserstein distances between atomic probability measures on the line are
computed by quantile matching: both cumulative distribution functions are
merged into a common partition of ``[0, 1]`` and matching quantile pieces are
paired (north-west corner rule on sorted atoms).

The bounded-Lipschitz norm of a signed atomic measure ``sum w_i delta_{x_i}``
is the value of the linear program

    maximize   sum_i zeta_i w_i
    subject to |zeta_i| <= t,  |zeta_{i+1} - zeta_i| <= s (x_{i+1} - x_i),
               t + s <= 1.

Only consecutive Lipschitz constraints are needed: values on sorted points
extend piecewise linearly to a function on the whole line with the same
Lipschitz constant and the same sup norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

PROB_TOL = 1e-10


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite sum of weighted Dirac masses on the real line.

    Atoms are sorted on construction and atoms at identical locations are
    merged, so ``support`` is strictly increasing.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise ValueError("support and weights must have the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("atomic measure must be finite")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if x.size > 1 and np.any(np.diff(x) == 0):
            x, idx = np.unique(x, return_inverse=True)
            w = np.bincount(idx, weights=w, minlength=x.size)
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return bool(np.all(self.weights >= -tol) and abs(self.total_mass - 1.0) <= tol)

    def scaled(self, c: float) -> "AtomicMeasure":
        return AtomicMeasure(self.support, c * self.weights)

    def __sub__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return AtomicMeasure(
            np.concatenate((self.support, other.support)),
            np.concatenate((self.weights, -other.weights)),
        )

    @classmethod
    def from_state(cls, state) -> "AtomicMeasure":
        """Density of a particle state as an atomic measure."""
        return cls(state.positions, state.masses)

    @classmethod
    def momentum_of(cls, state) -> "AtomicMeasure":
        return cls(state.positions, state.masses * state.velocities)


@dataclass(frozen=True)
class BLCertificate:
    """Optimal test function values for the bounded-Lipschitz program."""

    support: np.ndarray
    test_values: np.ndarray
    lip_part: float
    sup_part: float

    def violation(self) -> float:
        """Largest constraint violation (zero for a feasible certificate)."""
        viol = [self.sup_part + self.lip_part - 1.0]
        if self.test_values.size:
            viol.append(np.max(np.abs(self.test_values)) - self.sup_part)
        if self.test_values.size > 1:
            slope = np.abs(np.diff(self.test_values)) - self.lip_part * np.diff(self.support)
            viol.append(np.max(slope))
        return float(max(max(viol), 0.0))

    def pair(self, mu: AtomicMeasure) -> float:
        return float(np.dot(np.interp(mu.support, self.support, self.test_values), mu.weights))


def wasserstein_p(mu: AtomicMeasure, nu: AtomicMeasure, p: int = 2) -> float:
    """Exact ``W_p`` distance between two atomic probability measures.

    Parameters
    ----------
    mu, nu : AtomicMeasure
        Probability measures (nonnegative weights summing to one).
    p : {1, 2}
        Order of the distance.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    for m in (mu, nu):
        if not m.is_probability():
            raise ValueError("Wasserstein distance needs probability measures")
    cost = _quantile_matching_cost(mu.support, np.clip(mu.weights, 0, None),
                                   nu.support, np.clip(nu.weights, 0, None), p)
    return float(cost ** (1.0 / p))


def _quantile_matching_cost(x, a, y, b, p):
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca /= ca[-1]
    cb /= cb[-1]
    levels = np.union1d(ca, cb)
    pieces = np.diff(np.concatenate(([0.0], levels)))
    # each piece (q_{k-1}, q_k] maps to the atom whose cdf first reaches q_k
    ia = np.minimum(np.searchsorted(ca, levels, side="left"), x.size - 1)
    ib = np.minimum(np.searchsorted(cb, levels, side="left"), y.size - 1)
    return float(np.sum(pieces * np.abs(x[ia] - y[ib]) ** p))


def wasserstein_to_density(mu: AtomicMeasure, edges, density) -> float:
    """Exact ``W_2`` between an atomic measure and a piecewise-constant density.

    The density's quantile function is piecewise linear between the values of
    its cumulative mass at ``edges``; the atomic quantile is piecewise
    constant, so the cost integrates in closed form on the merged partition.
    """
    if not mu.is_probability():
        raise ValueError("Wasserstein distance needs probability measures")
    edges = np.asarray(edges, dtype=float)
    mass = np.clip(np.asarray(density, dtype=float), 0, None) * np.diff(edges)
    if mass.sum() <= 0:
        raise ValueError("density carries no mass")
    G = np.concatenate(([0.0], np.cumsum(mass))) / mass.sum()
    ca = np.cumsum(np.clip(mu.weights, 0, None))
    ca /= ca[-1]
    levels = np.union1d(ca, G[1:])
    lower = np.concatenate(([0.0], levels[:-1]))
    dq = levels - lower
    ia = np.minimum(np.searchsorted(ca, levels, side="left"), mu.support.size - 1)
    x = mu.support[ia]
    # each piece lies in one cell of positive mass
    j = np.clip(np.searchsorted(G, levels, side="left") - 1, 0, mass.size - 1)
    frac0 = (lower - G[j]) / np.where(mass[j] > 0, G[j + 1] - G[j], 1.0)
    frac1 = (levels - G[j]) / np.where(mass[j] > 0, G[j + 1] - G[j], 1.0)
    y0 = edges[j] + np.clip(frac0, 0, 1) * (edges[j + 1] - edges[j])
    y1 = edges[j] + np.clip(frac1, 0, 1) * (edges[j + 1] - edges[j])
    a, b = x - y0, x - y1
    cost = np.sum(dq * (a * a + a * b + b * b) / 3.0)
    return float(np.sqrt(max(cost, 0.0)))


def wasserstein_plan(mu: AtomicMeasure, nu: AtomicMeasure):
    """Monotone (north-west corner) coupling as ``(i, j, mass)`` triples."""
    ca = np.cumsum(mu.weights) / mu.total_mass
    cb = np.cumsum(nu.weights) / nu.total_mass
    levels = np.union1d(ca, cb)
    pieces = np.diff(np.concatenate(([0.0], levels)))
    ia = np.minimum(np.searchsorted(ca, levels, side="left"), mu.support.size - 1)
    ib = np.minimum(np.searchsorted(cb, levels, side="left"), nu.support.size - 1)
    keep = pieces > 0
    return ia[keep], ib[keep], pieces[keep]


def bl_norm(mu: AtomicMeasure) -> tuple[float, BLCertificate]:
    """Bounded-Lipschitz norm of a signed atomic measure and its optimal test.

    The program is solved with the HiGHS dual simplex; the returned value is
    the pairing of the certificate with ``mu`` so that value and certificate
    are consistent by construction.
    """
    x, w = mu.support, mu.weights
    n = x.size
    if n == 0 or not np.any(w):
        return 0.0, BLCertificate(x, np.zeros(n), 0.0, 0.0)
    if n == 1:
        zeta = np.array([np.sign(w[0])])
        return float(abs(w[0])), BLCertificate(x, zeta, 0.0, 1.0)

    # variables: zeta_0..zeta_{n-1}, s (Lipschitz part), t (sup part)
    gaps = np.diff(x)
    m = n - 1
    rows_d = np.repeat(np.arange(m), 2)
    cols_d = np.column_stack((np.arange(m) + 1, np.arange(m))).ravel()
    vals_d = np.tile([1.0, -1.0], m)
    diff = sparse.coo_matrix((vals_d, (rows_d, cols_d)), shape=(m, n))
    eye = sparse.identity(n, format="coo")
    col_s = sparse.coo_matrix(-gaps.reshape(-1, 1))
    col_t = sparse.coo_matrix(-np.ones((n, 1)))
    zero_m = sparse.coo_matrix((m, 1))
    zero_n = sparse.coo_matrix((n, 1))
    A = sparse.vstack(
        [
            sparse.hstack([diff, col_s, zero_m]),
            sparse.hstack([-diff, col_s, zero_m]),
            sparse.hstack([eye, zero_n, col_t]),
            sparse.hstack([-eye, zero_n, col_t]),
            sparse.coo_matrix(np.concatenate((np.zeros(n), [1.0, 1.0])).reshape(1, -1)),
        ]
    ).tocsc()
    b = np.concatenate((np.zeros(2 * m + 2 * n), [1.0]))
    c = np.concatenate((-w, [0.0, 0.0]))
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0), (0.0, 1.0)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    zeta = res.x[:n]
    cert = BLCertificate(x, zeta, float(res.x[n]), float(res.x[n + 1]))
    return float(np.dot(zeta, w)), cert


def curve_lipschitz_estimate(
    samples: Sequence[tuple[float, AtomicMeasure]], metric: str = "W2"
) -> float:
    """Largest ``distance / dt`` over consecutive samples of a curve.

    ``metric`` is ``"W2"`` (Wasserstein, for densities) or ``"BL"``
    (bounded-Lipschitz norm of the difference, for momenta).
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    times = np.array([t for t, _ in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    best = 0.0
    for (t0, m0), (t1, m1) in zip(samples[:-1], samples[1:]):
        if metric == "W2":
            d = wasserstein_p(m0, m1, 2)
        elif metric == "BL":
            d = bl_norm(m1 - m0)[0]
        else:
            raise ValueError(f"unknown metric {metric!r}")
        best = max(best, d / (t1 - t0))
    return best
