"""Independent reference computations used by the test suite."""
import cvxpy
import numpy as np
from scipy.optimize import linprog


def coupling_lp(mu, nu, p):
    """W_p by linear programming over every coupling matrix."""
    a, b = mu.weights, nu.weights
    na, nb = a.size, b.size
    cost = np.abs(mu.support[:, None] - nu.support[None, :]) ** p
    A_eq = np.zeros((na + nb, na * nb))
    for i in range(na):
        A_eq[i, i * nb:(i + 1) * nb] = 1.0
    for j in range(nb):
        A_eq[na + j, j::nb] = 1.0
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate((a, b)), bounds=(0, None),
                  method="highs")
    assert res.status == 0
    return res.fun ** (1.0 / p)


def bl_all_pairs(mu):
    """BL norm with a Lipschitz constraint on every pair of atoms (cvxpy)."""
    x, w = mu.support, mu.weights
    n = x.size
    z, s, t = cvxpy.Variable(n), cvxpy.Variable(), cvxpy.Variable()
    cons = [cvxpy.abs(z) <= t, s + t <= 1, s >= 0, t >= 0]
    i, j = np.triu_indices(n, 1)
    if i.size:
        cons.append(cvxpy.abs(z[i] - z[j]) <= s * np.abs(x[i] - x[j]))
    prob = cvxpy.Problem(cvxpy.Maximize(w @ z), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-13,
               max_iter=500)
    return prob.value


def isotonic_bruteforce(y, m, delta):
    """Minimize sum m (X - y)^2 subject to X[i+1] - X[i] >= delta by enumerating active sets."""
    n = y.size
    best, best_X = np.inf, None
    for mask in range(2 ** (n - 1)):
        active = [(mask >> c) & 1 for c in range(n - 1)]
        X = np.empty(n)
        i = 0
        while i < n:
            j = i
            while j < n - 1 and active[j]:
                j += 1
            off = delta * np.arange(j - i + 1)
            w = m[i:j + 1]
            base = np.sum(w * (y[i:j + 1] - off)) / np.sum(w)
            X[i:j + 1] = base + off
            i = j + 1
        if np.all(np.diff(X) >= delta - 1e-12):
            val = float(np.sum(m * (X - y) ** 2))
            if val < best:
                best, best_X = val, X
    return best_X, best


def step_value(state, law, tau, X):
    """Step functional evaluated from its definition, with the internal part
    computed as the energy of the reconstructed pushed-forward state."""
    from minaccel.gas import ParticleState, internal_energy

    y = state.positions + tau * state.velocities
    kin = 0.75 / tau**2 * float(np.sum(state.masses * (np.asarray(X) - y) ** 2))
    if law.pressureless:
        return kin
    if np.any(np.diff(X) <= 0):
        return np.inf
    return kin + internal_energy(ParticleState(X, state.masses, state.velocities), law)


def coordinate_search(f, X0, h0, tol=1e-9, span=8):
    """Cyclic coordinate grid search with a shrinking mesh."""
    X = np.array(X0, dtype=float)
    fx = f(X)
    h = h0
    grid = np.arange(-span, span + 1)
    while h > tol:
        moved = False
        for i in range(X.size):
            trial = X.copy()
            vals = []
            for k in grid:
                trial[i] = X[i] + k * h
                vals.append(f(trial))
            k = int(np.argmin(vals))
            if vals[k] < fx:
                X[i] += grid[k] * h
                fx = vals[k]
                moved = moved or grid[k] != 0
        if not moved:
            h /= 4
    return X, fx


def minimal_bruteforce(values, ids, tol):
    """Members not strictly dominated by any other, by explicit loops."""
    keep = []
    for i, p in enumerate(values):
        dominated = False
        for j, q in enumerate(values):
            if i == j:
                continue
            below = True
            strictly = False
            for k in range(len(p)):
                if q[k] > p[k] + tol:
                    below = False
                    break
                if q[k] < p[k] - tol:
                    strictly = True
            if below and strictly:
                dominated = True
                break
        if not dominated:
            keep.append(ids[i])
    return sorted(keep)


def random_profiles(rng, n, grid):
    """Synthetic ensemble mixing ordered, crossing and tied profiles."""
    t = np.linspace(0, 1, grid)
    out = []
    for _ in range(n):
        kind = rng.integers(3)
        if kind == 0:
            v = rng.integers(0, 5) + 0 * t
        elif kind == 1:
            v = rng.integers(0, 3) + 0.5 * np.sin(2 * np.pi * (t + rng.integers(0, 4) / 4))
        else:
            v = rng.integers(0, 4) + rng.integers(0, 3, grid) * 0.5
        out.append(np.asarray(v, dtype=float))
    return t, out
