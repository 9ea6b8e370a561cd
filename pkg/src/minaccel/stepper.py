"""One timestep of the variational scheme: convex minimization over monotone maps.

Given particles ``x`` with masses ``m`` and velocities ``u``, the new positions
``X`` minimize

    f(X) = 3/(4 tau^2) sum_i m_i (X_i - x_i - tau u_i)^2
           + sum_c A_c (dX_c / dx_c)^(1 - gamma)

over nondecreasing ``X``, where ``c`` runs over the gaps between neighbouring
particles and ``A_c`` is the internal energy of the reconstruction cells that
deform with gap ``c`` (the interior cell plus any ghost cell attached to it).
The second sum is exactly the internal energy of the pushed-forward state, so
the energy identity

    E_before = E_after + 1/6 sum m |W - u|^2 + bregman + multiplier

holds up to solver accuracy.

With pressure the internal term is a barrier that keeps every gap open, and a
damped Newton method on the tridiagonal Hessian is used.  Without pressure the
problem is a weighted isotonic regression with a minimum gap, solved exactly
by pool-adjacent-violators.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import isotonic_regression

from .gas import GasLaw, ParticleState, total_energy


class SolverError(RuntimeError):
    """Step minimization failed; carries the last iterate and its residual."""

    def __init__(self, message, X=None, residual=None, step_index=None):
        super().__init__(message)
        self.X = X
        self.residual = residual
        self.step_index = step_index


@dataclass(frozen=True)
class SolverOptions:
    el_tol: float = 1e-7
    max_iters: int = 200
    degeneracy_eps: float = 1e-12
    ghost_cells: bool = True
    seed: int | None = None

    def __post_init__(self):
        if not self.el_tol > 0:
            raise ValueError("el_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.degeneracy_eps > 0:
            raise ValueError("degeneracy_eps must be positive")


@dataclass(frozen=True)
class StepProblem:
    state: ParticleState
    law: GasLaw
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class DissipationLedger:
    velocity_term: float
    bregman_term: float
    multiplier_term: float
    energy_before: float
    energy_after: float

    @property
    def margin(self) -> float:
        """``E_before - (E_after + dissipation)``; nonnegative up to round-off."""
        return self.energy_before - (
            self.energy_after + self.velocity_term + self.bregman_term + self.multiplier_term
        )

    def holds(self, tol: float = 1e-8) -> bool:
        return self.margin >= -tol


@dataclass(frozen=True)
class StepSolution:
    X: np.ndarray
    V: np.ndarray
    W: np.ndarray
    objective: float
    el_residual: float
    dissipation: DissipationLedger
    multipliers: np.ndarray
    pressures: np.ndarray
    iterations: int = 0
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def new_state(self, problem: StepProblem) -> ParticleState:
        s = problem.state
        return ParticleState(self.X, s.masses, self.W, s.time + problem.tau)


def bregman_divergence(law: GasLaw, gap_ratio, at: str = "identity"):
    """Bregman gap of the convex map ``a -> a**(1 - gamma)``.

    ``at="identity"`` linearizes at ``a = 1`` and evaluates at ``gap_ratio``:
    ``a**(1-g) - 1 + (g-1)(a-1)``.  ``at="deformed"`` linearizes at
    ``gap_ratio`` and evaluates at 1: ``1 - g a**(1-g) + (g-1) a**(-g)``,
    which is the form entering the energy identity of a step.
    """
    a = np.asarray(gap_ratio, dtype=float)
    if np.any(a <= 0) or np.any(~np.isfinite(a)):
        raise ValueError("gap ratio must be positive")
    g = law.gamma
    if at == "identity":
        out = a ** (1 - g) - 1 + (g - 1) * (a - 1)
    elif at == "deformed":
        out = 1 - g * a ** (1 - g) + (g - 1) * a ** (-g)
    else:
        raise ValueError("at must be 'identity' or 'deformed'")
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


class StepFunctional:
    """Objective, gradient and tridiagonal Hessian of one step problem."""

    def __init__(self, problem: StepProblem, ghost_cells: bool = True):
        s, law, tau = problem.state, problem.law, problem.tau
        self.problem = problem
        self.law = law
        self.tau = tau
        self.x = s.positions
        self.m = s.masses
        self.u = s.velocities
        self.y = self.x + tau * self.u
        self.c2 = 3.0 / (4.0 * tau * tau)
        self.dx = np.diff(self.x)
        self.gamma = law.gamma
        self.A = _gap_energies(s, law, ghost_cells)
        self.has_pressure = (not law.pressureless) and self.x.size > 1

    def value(self, X) -> float:
        X = np.asarray(X, dtype=float)
        kin = self.c2 * np.sum(self.m * (X - self.y) ** 2)
        if not self.has_pressure:
            return float(kin)
        dX = np.diff(X)
        if np.any(dX <= 0):
            return np.inf
        return float(kin + np.sum(self.A * (dX / self.dx) ** (1 - self.gamma)))

    def gap_derivative(self, dX):
        """``dI_c/d(dX_c)``, i.e. minus the gap pressure."""
        a = dX / self.dx
        return self.A * (1 - self.gamma) * a ** (-self.gamma) / self.dx

    def gradient(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = 2.0 * self.c2 * self.m * (X - self.y)
        if self.has_pressure:
            d = self.gap_derivative(np.diff(X))
            g[:-1] -= d
            g[1:] += d
        return g

    def hessian_bands(self, X):
        """Upper banded form of the Hessian for ``solveh_banded``."""
        n = X.size
        diag = 2.0 * self.c2 * self.m.copy()
        off = np.zeros(n - 1)
        if self.has_pressure:
            a = np.diff(X) / self.dx
            h = self.A * self.gamma * (self.gamma - 1) * a ** (-self.gamma - 1) / self.dx**2
            diag[:-1] += h
            diag[1:] += h
            off = -h
        ab = np.zeros((2, n))
        ab[0, 1:] = off
        ab[1] = diag
        return ab

    def pressures(self, X) -> np.ndarray:
        if not self.has_pressure:
            return np.zeros(max(self.x.size - 1, 0))
        return -self.gap_derivative(np.diff(X))


def _gap_energies(state: ParticleState, law: GasLaw, ghost_cells: bool) -> np.ndarray:
    """Internal energy carried by the cells that deform with each gap."""
    n = state.n
    if n < 2 or law.pressureless:
        return np.zeros(max(n - 1, 0))
    m = state.masses
    dx = np.diff(state.positions)
    r = 0.5 * (m[:-1] + m[1:]) / dx
    A = law.internal_energy_density(r) * dx
    if ghost_cells:
        # ghost widths equal the adjacent gap and scale with it
        A[0] += law.internal_energy_density(0.5 * m[0] / dx[0]) * dx[0]
        A[-1] += law.internal_energy_density(0.5 * m[-1] / dx[-1]) * dx[-1]
    return A


def step_objective(problem: StepProblem, X, ghost_cells: bool = True) -> float:
    """Value of the step functional at candidate positions ``X``.

    Returns ``inf`` when pressure is present and some gap is not positive.
    """
    return StepFunctional(problem, ghost_cells).value(X)


def step_gradient(problem: StepProblem, X, ghost_cells: bool = True) -> np.ndarray:
    return StepFunctional(problem, ghost_cells).gradient(X)


def _min_gap(problem: StepProblem, y, opts: SolverOptions) -> float:
    x = problem.state.positions
    width = max(x[-1] - x[0], np.max(y) - np.min(y), np.finfo(float).tiny)
    return 2.0 * opts.degeneracy_eps * width


def _solve_pressureless(fn: StepFunctional, opts: SolverOptions):
    y, m = fn.y, fn.m
    n = y.size
    active = np.zeros(max(n - 1, 0), dtype=bool)
    if n == 1:
        return y.copy(), active, 0
    delta = _min_gap(fn.problem, y, opts)
    if np.all(np.diff(y) >= delta):
        return y.copy(), active, 0
    offset = delta * np.arange(n)
    res = isotonic_regression(y - offset, weights=m, increasing=True)
    X = res.x + offset
    starts = np.asarray(res.blocks)
    sizes = np.diff(starts)
    for b0, sz in zip(starts[:-1], sizes):
        if sz == 1:
            X[b0] = y[b0]
        else:
            active[b0 : b0 + sz - 1] = True
    return X, active, 1


def _initial_point(fn: StepFunctional, opts: SolverOptions):
    x, y = fn.x, fn.y
    if opts.seed is None:
        return y.copy() if np.all(np.diff(y) > 0) else x.copy()
    rng = np.random.default_rng(opts.seed)
    theta = rng.uniform(0.2, 0.8)
    while theta > 1e-8:
        X0 = x + theta * (y - x)
        if np.all(np.diff(X0) > 0):
            return X0
        theta *= 0.5
    return x.copy()


def _solve_newton(fn: StepFunctional, opts: SolverOptions):
    X = _initial_point(fn, opts)
    f = fn.value(X)
    polish = 0
    for it in range(1, opts.max_iters + 1):
        g = fn.gradient(X)
        p = -solveh_banded(fn.hessian_bands(X), g)
        dX, dp = np.diff(X), np.diff(p)
        shrinking = dp < 0
        alpha = 1.0
        if np.any(shrinking):
            with np.errstate(over="ignore"):
                alpha = min(1.0, 0.995 * np.min(-dX[shrinking] / dp[shrinking]))
        slope = float(g @ p)
        accepted = False
        for _ in range(60):
            Xn = X + alpha * p
            fnew = fn.value(Xn)
            if fnew <= f + 1e-4 * alpha * slope or (
                np.isfinite(fnew) and abs(fnew - f) <= 1e-15 * (1 + abs(f))
            ):
                accepted = True
                break
            alpha *= 0.5
        gnorm = np.max(np.abs(g))
        small = gnorm <= opts.el_tol * (1 + abs(f))
        if not accepted:
            if small:
                return X, it
            raise SolverError("line search failed", X=X, residual=gnorm)
        step = np.max(np.abs(Xn - X))
        X, f = Xn, fnew
        if small:
            polish += 1
            if polish > 2 or step <= 4 * np.finfo(float).eps * (1 + np.max(np.abs(X))):
                return X, it
    g = fn.gradient(X)
    gnorm = np.max(np.abs(g))
    if gnorm <= opts.el_tol * (1 + abs(f)):
        return X, opts.max_iters
    raise SolverError(
        f"no convergence in {opts.max_iters} iterations", X=X, residual=gnorm
    )


def _multipliers(fn: StepFunctional, X, W, active) -> np.ndarray:
    """KKT multipliers of the active gap constraints (zero elsewhere)."""
    n = X.size
    lam = np.zeros(max(n - 1, 0))
    if not np.any(active):
        return lam
    force = fn.m * (W - fn.u) / fn.tau
    P = fn.pressures(X)
    c = 0
    while c < n - 1:
        if not active[c]:
            c += 1
            continue
        start = c
        while c < n - 1 and active[c]:
            c += 1
        # block of particles start..c (gaps start..c-1)
        cum = -np.cumsum(force[start:c])
        lam[start:c] = cum - P[start:c]
    return np.maximum(lam, 0.0)


def solve_step(problem: StepProblem, opts: SolverOptions | None = None) -> StepSolution:
    """Minimize the step functional and assemble velocities and the ledger."""
    opts = opts or SolverOptions()
    fn = StepFunctional(problem, opts.ghost_cells)
    state, law, tau = problem.state, problem.law, problem.tau
    if fn.has_pressure:
        X, iters = _solve_newton(fn, opts)
        active = np.zeros(state.n - 1, dtype=bool)
        delta = _min_gap(problem, fn.y, opts)
        if np.any(np.diff(X) < delta):
            raise SolverError(
                "gap collapsed below the degeneracy threshold; reduce tau",
                X=X, residual=float(np.min(np.diff(X))),
            )
    else:
        X, active, iters = _solve_pressureless(fn, opts)
    V = (X - state.positions) / tau
    W = 1.5 * V - 0.5 * state.velocities
    lam = _multipliers(fn, X, W, active)
    P = fn.pressures(X)

    ledger = _ledger(fn, problem, X, W, lam, opts.ghost_cells)
    sol = StepSolution(
        X=X, V=V, W=W,
        objective=fn.value(X),
        el_residual=0.0,
        dissipation=ledger,
        multipliers=lam,
        pressures=P,
        iterations=iters,
        active=active,
    )
    res = el_residual(problem, sol)
    return StepSolution(
        X=X, V=V, W=W, objective=sol.objective, el_residual=res,
        dissipation=ledger, multipliers=lam, pressures=P,
        iterations=iters, active=active,
    )


def _ledger(fn, problem, X, W, lam, ghost_cells) -> DissipationLedger:
    state, law = problem.state, problem.law
    before = total_energy(state, law, ghost_cells).total
    after_state = ParticleState(X, state.masses, W, state.time)
    after = total_energy(after_state, law, ghost_cells).total
    vel = float(np.sum(state.masses * (W - state.velocities) ** 2) / 6.0)
    breg = 0.0
    if fn.has_pressure:
        a = np.diff(X) / fn.dx
        breg = float(np.sum(fn.A * bregman_divergence(law, a, at="deformed")))
    mult = 0.0
    if lam.size:
        mult = float(np.sum(lam * (fn.dx - np.diff(X))))
    return DissipationLedger(vel, breg, mult, before, after)


def probe_family(positions, levels: int | None = None):
    """Identity plus normalized dyadic hat functions over the particle hull.

    Returns ``(values, bl_norms)`` where ``values[k, i]`` is test ``k`` at
    particle ``i`` and ``bl_norms[k]`` its sup norm plus Lipschitz constant on
    the hull.
    """
    x = np.asarray(positions, dtype=float)
    a, b = x[0], x[-1]
    width = max(b - a, np.finfo(float).tiny)
    if levels is None:
        levels = int(min(6, max(1, np.ceil(np.log2(max(x.size, 2))))))
    rows = [x.copy()]
    norms = [max(abs(a), abs(b)) + 1.0]
    for lev in range(levels + 1):
        h = width / 2**lev
        for k in range(2**lev + 1):
            c = a + k * h
            rows.append(np.maximum(0.0, 1.0 - np.abs(x - c) / h))
            norms.append(1.0 + 1.0 / h)
    return np.array(rows), np.array(norms)


def el_residual(problem: StepProblem, sol: StepSolution, tests=None) -> float:
    """Normalized Euler-Lagrange gap of a solved step.

    For each test function ``zeta`` the discrete optimality condition reads

        sum_i zeta(x_i) m_i (W_i - u_i)/tau = sum_c (zeta(x_{c+1}) - zeta(x_c)) (P_c + lambda_c)

    with ``P_c`` the gap pressure ``P(r_c) a_c**(-gamma)`` (plus ghost
    contributions on the end gaps).  The gap is divided by the test's
    bounded-Lipschitz norm and by ``1 + F`` where ``F`` is the total force
    magnitude, and the maximum over the family is returned.
    """
    s = problem.state
    if s.n < 2:
        return 0.0
    Z, norms = tests if tests is not None else probe_family(s.positions)
    force = s.masses * (sol.W - s.velocities) / problem.tau
    stress = sol.pressures + sol.multipliers
    lhs = Z @ force
    rhs = np.diff(Z, axis=1) @ stress
    scale = 1.0 + np.sum(np.abs(force)) + np.sum(np.abs(stress))
    return float(np.max(np.abs(lhs - rhs) / norms) / scale)
