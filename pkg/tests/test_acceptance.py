"""Acceptance criteria 1-14.

Each criterion records one PASS/FAIL line (collected in ``RESULTS`` and
printed in the terminal summary by ``conftest.py``); the tests assert the
same conditions.  Criteria 1-5, 9 and 10 share one corpus of runs.
"""
import functools
import json
import math

import numpy as np
import pytest

from minaccel import cli, initial as ic
from minaccel.checks import lipschitz_bound, wasserstein_quotients
from minaccel.config import parse_config
from minaccel.diagnostics import (acceleration, coarse_grain, default_n_cells, relative_energy,
                                  virial_residual)
from minaccel.gas import GasLaw, ParticleState
from minaccel.oracle import fv_solve, grid_from_profile, smooth_reference
from minaccel.runner import execute
from minaccel.selection import (AccelerationProfile, Relation, compare, minimal_elements,
                                perturb_and_run)
from minaccel.stepper import StepProblem, step_gradient
from minaccel.trajectory import PIECEWISE_CONSTANT, PIECEWISE_LINEAR, march, sample
from minaccel.transport import AtomicMeasure, bl_norm, wasserstein_p, wasserstein_to_density

from conftest import random_state
from oracles import (bl_all_pairs, coupling_lp, minimal_bruteforce, random_profiles,
                     step_value)

RESULTS = {}


def record(number, part, passed, detail):
    """Fold one part of a criterion into its summary line."""
    entry = RESULTS.setdefault(number, {"passed": True, "parts": []})
    entry["passed"] &= bool(passed)
    entry["parts"].append(f"{part}: {detail}{'' if passed else ' [FAIL]'}")
    line = f"{'PASS' if entry['passed'] else 'FAIL'} criterion {number:2d} | " + "; ".join(entry["parts"])
    print(line)
    return passed


# corpus ----------------------------------------------------------------------------

_IC = {
    "riemann": 'ic_kind = "riemann"\nic_rho_left = 1.0\nic_u_left = 0.0\n'
               "ic_rho_right = 0.25\nic_u_right = 0.0\n",
    "blob": 'ic_kind = "gaussian_blob"\nic_width = 0.25\nic_u0 = 0.1\nic_du = -0.5\n',
    "two_blob": 'ic_kind = "two_blob"\nic_separation = 1.0\nic_width = 0.15\n'
                "ic_closing_speed = 1.0\n",
}


def corpus_configs():
    cases = []
    for gamma in (1.4, 2.0, 3.0):
        for n in (16, 64, 256):
            for kind in ("riemann", "blob"):
                cases.append((kind, 1.0, gamma, n))
    cases += [("two_blob", 0.5, 1.4, 64), ("two_blob", 0.5, 2.0, 256),
              ("two_blob", 0.0, 2.0, 64), ("blob", 0.0, 3.0, 64)]
    out = []
    for kind, kappa, gamma, n in cases:
        text = (f"kappa = {kappa}\ngamma = {gamma}\n{_IC[kind]}n_particles = {n}\n"
                "tau = 0.005\nt_end = 0.04\nsamples_per_step = 8\nbl_pairs = 4\n")
        out.append((f"{kind}-k{kappa}-g{gamma}-n{n}", parse_config(text)))
    return out


@functools.lru_cache(maxsize=1)
def corpus():
    return [(label, execute(cfg)) for label, cfg in corpus_configs()]


def test_corpus_shape():
    cfgs = corpus_configs()
    assert len(cfgs) >= 20
    assert {c.gamma for _, c in cfgs} >= {1.4, 2.0, 3.0}
    assert {c.n_particles for _, c in cfgs} >= {16, 64, 256}


def test_criterion_01_energy_monotone():
    worst = max(np.max(np.diff(r.trajectory.energies()), initial=0.0) / r.trajectory.initial_energy
                for _, r in corpus())
    ok = worst <= 1e-8
    record(1, "energy", ok, f"max step increase / E0 = {worst:.2e} over {len(corpus())} runs")
    assert ok


def test_criterion_02_dissipation_ledger():
    margins = [s.dissipation.margin for _, r in corpus() for s in r.trajectory.solutions]
    hard = sum(m < -1e-8 for m in margins)
    record(2, "ledger", hard == 0,
           f"{len(margins)} steps, min margin {min(margins):.2e}, hard violations {hard}")
    assert hard == 0


def test_criterion_03_interpolant_energy_ordering():
    worst_order, worst_step = -np.inf, -np.inf
    for _, r in corpus():
        ser, traj = r.series, r.trajectory
        E_nodes = traj.energies()
        k = np.minimum(np.floor(ser.times / traj.tau + 1e-9).astype(int), traj.n_steps - 1)
        worst_order = max(worst_order, np.max(ser.N - ser.E))
        worst_step = max(worst_step, np.max(ser.N - E_nodes[k]))
    ok = worst_order <= 1e-8 and worst_step <= 1e-8
    record(3, "N<=E", ok, f"max N-E {worst_order:.2e}, max N-E(t_k) {worst_step:.2e}")
    assert ok


def test_criterion_04_moment_bound():
    worst = -np.inf
    for _, r in corpus():
        ser = r.series
        bound = ser.M2[0] + ser.times * lipschitz_bound(r.trajectory) + 1e-6
        worst = max(worst, np.max(ser.M2 - bound))
    record(4, "moment", worst <= 0, f"max M - bound {worst:.2e}")
    assert worst <= 0


def test_criterion_05_wasserstein_lipschitz():
    worst = -np.inf
    for _, r in corpus():
        q = wasserstein_quotients(r.trajectory, r.series.times)
        worst = max(worst, np.max(q) - lipschitz_bound(r.trajectory))
    ok = worst <= 1e-6
    record(5, "W2 speed", ok, f"max quotient - sqrt(2E0) {worst:.2e}")
    assert ok


# criterion 6: acceleration identity on free transport --------------------------------

def _free_transport_errors():
    law = GasLaw(0.0, 2.0)
    n = 16
    x = -1 + (np.arange(n) + 0.5) * 2 / n
    s = ParticleState(x, np.full(n, 1 / n), 0.5 * x + 0.1)
    exact = float(np.sum(s.masses * s.velocities**2))
    t = 0.5
    rows = []
    for j in range(4):
        h, tau = 0.02 / 2**j, 0.05 / 2**j
        traj = march(s, law, tau, 1.0)
        a = acceleration(sample(traj, t), sample(traj, t, PIECEWISE_CONSTANT), law, 4)
        dM = AtomicMeasure.momentum_of(sample(traj, t + h).state) \
            - AtomicMeasure.momentum_of(sample(traj, t - h).state)
        bl = bl_norm(dM.scaled(1 / (2 * h)))[0]
        rows.append((h, tau, a, bl, abs(a - bl)))
    return exact, rows


def test_criterion_06_acceleration_bound():
    exact, rows = _free_transport_errors()
    Cs = [e / (h + tau) for h, tau, _, _, e in rows]
    exact_a = max(abs(a - exact) for _, _, a, _, _ in rows)
    # the constant must stay bounded as h and tau shrink together
    ok = max(Cs) <= 1.1 * Cs[0] and exact_a <= 1e-12
    record(6, "bound", ok, f"C = {max(Cs):.4f} (per level " + ", ".join(f"{c:.4f}" for c in Cs)
           + f"), |a - sum m v^2| <= {exact_a:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="error ratio per halving is (2+hv)/(1+hv) < 2; "
                                       "see the acceleration analysis in the README")
def test_criterion_06_error_halves():
    _, rows = _free_transport_errors()
    errs = np.array([r[4] for r in rows])
    ratios = errs[:-1] / errs[1:]
    ok = bool(np.all(ratios >= 2.0))
    record(6, "halving", ok, "ratios " + ", ".join(f"{q:.4f}" for q in ratios))
    assert ok


# criterion 7: virial identity -----------------------------------------------------------

def test_criterion_07_virial_free_transport():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(4, 40))
        x = np.sort(rng.uniform(-1, 1, n))
        s = ParticleState(x, rng.uniform(0.5, 1.5, n), 0.3 + 0.8 * (x - x[0]))
        traj = march(s, GasLaw(0.0, 2.0), 0.05, 0.5)
        worst = max(worst, max(abs(virial_residual(traj, t)) for t in np.linspace(0, 0.5, 41)))
    record(7, "free transport", worst <= 1e-10, f"max |residual| {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.parametrize("kind", ["constant", "riemann"])
def test_criterion_07_virial_decay(kind):
    data = ic.constant(0.5) if kind == "constant" else ic.riemann(1.0, 0.0, 0.25, 0.0)
    s = data.particles(64)
    res = []
    for tau in (0.02, 0.01, 0.005, 0.0025):
        traj = march(s, GasLaw(1.0, 2.0), tau, 0.1)
        res.append(max(abs(virial_residual(traj, t)) for t in (0.04, 0.05, 0.06, 0.08, 0.1)))
    ratios = np.array(res[:-1]) / np.array(res[1:])
    ok = bool(np.all(ratios >= 1.7))
    record(7, f"{kind} decay", ok, "ratios " + ", ".join(f"{q:.2f}" for q in ratios))
    assert ok


# criterion 8: metric oracles -----------------------------------------------------------

def test_criterion_08_wasserstein_vs_coupling_lp():
    rng = np.random.default_rng(8)
    worst, count = 0.0, 0
    for _ in range(200):
        na, nb = rng.integers(1, 6, 2)
        mu = AtomicMeasure(rng.normal(size=na), rng.dirichlet(np.ones(na)))
        nu = AtomicMeasure(rng.normal(size=nb), rng.dirichlet(np.ones(nb)))
        for p in (1, 2):
            worst = max(worst, abs(wasserstein_p(mu, nu, p) - coupling_lp(mu, nu, p)))
            count += 1
    record(8, "W_p", worst <= 1e-9, f"{count} cases, max diff {worst:.1e}")
    assert worst <= 1e-9


def test_criterion_08_bl_closed_form():
    worst = 0.0
    for h in np.geomspace(1e-4, 10.0, 60):
        mu = AtomicMeasure(np.array([0.3, 0.3 + h]), np.array([1.0, -1.0]))
        worst = max(worst, abs(bl_norm(mu)[0] - 2 * h / (2 + h)))
    record(8, "Dirac pair", worst <= 1e-9, f"max diff {worst:.1e}")
    assert worst <= 1e-9


def test_criterion_08_bl_vs_all_pairs():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 9))
        mu = AtomicMeasure(np.sort(rng.uniform(-2, 2, k)), rng.normal(size=k))
        worst = max(worst, abs(bl_norm(mu)[0] - bl_all_pairs(mu)))
    record(8, "BL all-pairs", worst <= 1e-9, f"100 cases, max diff {worst:.1e}")
    assert worst <= 1e-9


# criterion 9: Euler-Lagrange residual and gradient -------------------------------------

def test_criterion_09_el_residual():
    res = [s.el_residual for _, r in corpus() for s in r.trajectory.solutions]
    worst = max(res)
    record(9, "EL", worst <= 1e-7, f"{len(res)} steps, max residual {worst:.1e}")
    assert worst <= 1e-7


def test_criterion_09_gradient():
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(100):
        law = GasLaw(float(rng.uniform(0.1, 2.0)), (1.4, 2.0, 3.0)[k % 3])
        s = random_state(rng, int(rng.integers(2, 20)))
        tau = float(rng.uniform(0.01, 0.2))
        p = StepProblem(s, law, tau)
        gaps = np.diff(s.positions)
        X = s.positions + 0.2 * np.min(gaps) * rng.uniform(-1, 1, s.n)
        g = step_gradient(p, X)
        h = 1e-4 * np.min(gaps)
        fd = np.empty(s.n)
        for i in range(s.n):
            e = np.zeros(s.n)
            e[i] = h
            f = [step_value(s, law, tau, X + c * e) for c in (-2, -1, 1, 2)]
            fd[i] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
    record(9, "gradient", worst <= 1e-6, f"100 points, max relative error {worst:.1e}")
    assert worst <= 1e-6


# criterion 10: defects ---------------------------------------------------------------

def test_criterion_10_defects():
    min_Q = min_phi = np.inf
    worst_order = -np.inf
    for _, r in corpus():
        traj, law = r.trajectory, r.config.law
        n_cells = default_n_cells(traj.states[0].n)
        for t in r.series.times:
            for kind in (PIECEWISE_LINEAR, PIECEWISE_CONSTANT):
                f = coarse_grain(sample(traj, t, kind), law, n_cells)
                Q = f.second_moment_flux - f.rbar * f.ubar**2
                phi = f.pressure_avg - law.pressure(f.rbar_fine)
                min_Q = min(min_Q, np.min(Q / np.maximum(1.0, f.second_moment_flux)))
                min_phi = min(min_phi, np.min(phi / np.maximum(1.0, f.pressure_avg)))
        s = r.series
        worst_order = max(worst_order, np.max(s.defect_linear_total - s.defect_constant_total))
    # raw Jensen gaps, relative to the flux they are taken from
    ok = min_Q >= -1e-12 and min_phi >= -1e-12 and worst_order <= 1e-8
    record(10, "defects", ok, f"min Q {min_Q:.1e}, min phi {min_phi:.1e}, "
                              f"max linear - constant {worst_order:.1e}")
    assert ok


# criterion 11: relative energy -----------------------------------------------------

def test_criterion_11_constant_state():
    law = GasLaw(0.01, 2.0)
    rho0 = 0.5
    ref = smooth_reference("constant", {"rho0": rho0}, 1.0)
    margin = 1.2 * float(law.sound_speed(rho0)) * 1.0
    s = ic.constant(rho0).particles(256)
    peaks = []
    for tau in (0.04, 0.02, 0.01, 0.005):
        traj = march(s, law, tau, 1.0)
        peaks.append(max(relative_energy(coarse_grain(st, law, 16), ref.R, ref.W, law,
                                         window=(-1 + margin, 1 - margin))
                         for st in traj.states))
    ok = max(peaks) <= 1e-6 and all(a > b for a, b in zip(peaks, peaks[1:]))
    record(11, "constant", ok, "max Delta per tau " + ", ".join(f"{p:.2e}" for p in peaks))
    assert ok


def test_criterion_11_free_transport_gronwall():
    law = GasLaw(0.0, 2.0)
    beta = 2 + (law.gamma - 1)
    params = {"a": 0.5, "b": 0.1}
    data = ic.from_reference(smooth_reference("free_transport", params, 0.0))
    slacks, starts = [], []
    for n, tau in ((64, 0.04), (128, 0.02), (256, 0.01)):
        traj = march(data.particles(n), law, tau, 1.0)
        D, growth = [], []
        for k, st in enumerate(traj.states):
            ref = smooth_reference("free_transport", params, k * tau)
            lo, hi = ref.support
            mid, half = 0.5 * (lo + hi), 0.45 * (hi - lo)
            f = coarse_grain(st, law, default_n_cells(n))
            D.append(relative_energy(f, ref.R, ref.W, law, window=(mid - half, mid + half)))
            growth.append(math.exp(beta * ref.integrated_c))
        D = np.array(D)
        slacks.append(float(np.max(np.maximum(D - np.array(growth) * D[0], 0.0))))
        starts.append(D[0])
    ok = slacks[-1] <= 1e-12 and all(a >= b for a, b in zip(slacks, slacks[1:]))
    record(11, "free transport", ok,
           "slack " + ", ".join(f"{x:.1e}" for x in slacks)
           + "; Delta(0) " + ", ".join(f"{x:.2e}" for x in starts))
    assert ok


# criterion 12: selection -------------------------------------------------------------

def test_criterion_12_minimal_vs_bruteforce():
    rng = np.random.default_rng(12)
    mismatches = empties = 0
    for _ in range(50):
        n = int(rng.integers(1, 31))
        t, vals = random_profiles(rng, n, int(rng.integers(2, 12)))
        ids = [f"r{i:02d}" for i in range(n)]
        tol = 1e-9 * (1 + max(np.abs(v).max() for v in vals))
        got = minimal_elements([AccelerationProfile(t, v, i) for v, i in zip(vals, ids)], tol=tol)
        mismatches += got != minimal_bruteforce(vals, ids, tol)
        empties += not got
    ok = mismatches == 0 and empties == 0
    record(12, "synthetic", ok, f"50 ensembles, {mismatches} mismatches, {empties} empty")
    assert ok


def test_criterion_12_tau_sweep():
    base = parse_config(_IC["riemann"] + "kappa = 1.0\ngamma = 2.0\nn_particles = 32\n"
                        "tau = 0.02\nt_end = 0.1\nsamples_per_step = 4\nbl_pairs = 2\n")
    ens = perturb_and_run(base, "tau", 8)
    profs = ens.profiles()
    tol = 1e-9 * (1 + max(np.abs(p.values).max() for p in profs))
    got = minimal_elements(ens, tol=tol)
    want = minimal_bruteforce([p.values for p in profs], [p.run_id for p in profs], tol)
    ok = got == want and bool(got)
    record(12, "tau sweep", ok, f"8 members, minimal {got}")
    assert ok


def test_criterion_12_quasi_order():
    rng = np.random.default_rng(1212)
    t, vals = random_profiles(rng, 60, 6)
    profs = [AccelerationProfile(t, v, str(i)) for i, v in enumerate(vals)]
    le = {Relation.LESS_EQ, Relation.EQUIVALENT}
    failures = sum(compare(p, p, 0.0) is not Relation.EQUIVALENT for p in profs)
    for _ in range(1000):
        p, q, r = (profs[i] for i in rng.integers(0, len(profs), 3))
        if compare(p, q, 0.0) in le and compare(q, r, 0.0) in le:
            failures += compare(p, r, 0.0) not in le
    record(12, "quasi-order", failures == 0, f"1000 triples, {failures} failures")
    assert failures == 0


# criterion 13: determinism --------------------------------------------------------

def test_criterion_13_determinism(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(_IC["riemann"] + "kappa = 1.0\ngamma = 2.0\nn_particles = 24\ntau = 0.02\n"
                   "t_end = 0.06\nsamples_per_step = 4\nbl_pairs = 2\nseed = 5\n")
    for name in ("a", "b"):
        assert cli.main(["run", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert cli.main(["ensemble", str(cfg), "--k", "3", "--out", str(tmp_path / f"e{name}")]) == 0
        assert cli.main(["select", "--ensemble-dir", str(tmp_path / f"e{name}")]) == 0
    same_diag = (tmp_path / "a" / "diagnostics.csv").read_bytes() \
        == (tmp_path / "b" / "diagnostics.csv").read_bytes()
    sel = [(tmp_path / f"e{x}" / "selection.json").read_bytes() for x in "ab"]
    ok = same_diag and sel[0] == sel[1] and json.loads(sel[0])["minimal"]
    record(13, "bytes", ok, f"diagnostics.csv identical {same_diag}, "
                            f"selection.json identical {sel[0] == sel[1]}")
    assert ok


# criterion 14: finite-volume cross-check ---------------------------------------------

def test_criterion_14_riemann_refinement():
    law = GasLaw(1.0, 2.0)
    data = ic.riemann(1.0, 0.0, 0.25, 0.0)
    dists = []
    for n, tau, cells in ((64, 0.01, 128), (128, 0.005, 256), (256, 0.0025, 512),
                          (512, 0.00125, 1024)):
        traj = march(data.particles(n), law, tau, 0.2)
        centers, rho, mom, _ = data.grid(cells, -2.0, 2.0)
        fv = fv_solve(grid_from_profile(centers, rho, mom), law, 0.2)
        st = sample(traj, 0.2).state
        dists.append(wasserstein_to_density(AtomicMeasure.from_state(st), fv.edges(), fv.rho))
    ok = all(a > b for a, b in zip(dists, dists[1:]))
    record(14, "Riemann W2", ok, "at t=0.2: " + ", ".join(f"{d:.4f}" for d in dists))
    assert ok
