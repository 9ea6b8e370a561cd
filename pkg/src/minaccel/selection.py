"""Quasi-order on time profiles and minimal elements of finite ensembles.

A profile ``p`` precedes ``q`` when ``p(t) <= q(t)`` at every shared grid
time, up to a tolerance.  The relation is reflexive and transitive (for zero
tolerance) but not antisymmetric: distinct runs can be equivalent.
"""
from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

OBJECTIVES = ("acceleration", "energy")
STRATEGIES = ("tau", "n_particles", "seed", "n_cells", "mixed")


class Relation(str, enum.Enum):
    LESS_EQ = "LessEq"
    GREATER_EQ = "GreaterEq"
    EQUIVALENT = "Equivalent"
    INCOMPARABLE = "Incomparable"


@dataclass(frozen=True)
class AccelerationProfile:
    times: np.ndarray
    values: np.ndarray
    run_id: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("profile times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def scaled(self, c: float) -> "AccelerationProfile":
        return AccelerationProfile(self.times, c * self.values, self.run_id)

    def resampled(self, times) -> "AccelerationProfile":
        """Piecewise-linear interpolation onto ``times``."""
        return AccelerationProfile(times, np.interp(times, self.times, self.values), self.run_id)


def default_tol(p: AccelerationProfile, q: AccelerationProfile) -> float:
    top = max(float(np.max(np.abs(p.values), initial=0.0)), float(np.max(np.abs(q.values), initial=0.0)))
    return 1e-9 * (1.0 + top)


def _check_grid(p, q):
    if p.times.shape != q.times.shape or not np.array_equal(p.times, q.times):
        raise ValueError(f"profiles {p.run_id!r} and {q.run_id!r} live on different grids")


def compare(p: AccelerationProfile, q: AccelerationProfile, tol: float | None = None) -> Relation:
    """Relation of ``p`` to ``q`` under pointwise comparison up to ``tol``."""
    _check_grid(p, q)
    tol = default_tol(p, q) if tol is None else tol
    le = bool(np.all(p.values <= q.values + tol))
    ge = bool(np.all(q.values <= p.values + tol))
    if le and ge:
        return Relation.EQUIVALENT
    if le:
        return Relation.LESS_EQ
    if ge:
        return Relation.GREATER_EQ
    return Relation.INCOMPARABLE


def dominates(q: AccelerationProfile, p: AccelerationProfile, tol: float | None = None) -> bool:
    """``q`` strictly dominates ``p``: below it everywhere and below by more than ``tol`` somewhere."""
    _check_grid(p, q)
    tol = default_tol(p, q) if tol is None else tol
    return bool(np.all(q.values <= p.values + tol) and np.any(q.values < p.values - tol))


@dataclass(frozen=True)
class EnsembleMember:
    run_id: str
    manifest: dict
    times: np.ndarray
    acceleration: np.ndarray
    energy: np.ndarray

    def profile(self, objective: str = "acceleration") -> AccelerationProfile:
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        vals = self.acceleration if objective == "acceleration" else self.energy
        return AccelerationProfile(self.times, vals, self.run_id)


@dataclass(frozen=True)
class Ensemble:
    members: tuple
    initial_hash: str = ""
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [m.run_id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("run ids must be unique")
        if self.members:
            t0 = self.members[0].times
            for m in self.members[1:]:
                if not np.array_equal(m.times, t0):
                    raise ValueError("ensemble members must share one time grid")

    def profiles(self, objective: str = "acceleration") -> list:
        return [m.profile(objective) for m in self.members]

    @property
    def run_ids(self) -> list:
        return [m.run_id for m in self.members]

    # persistence -------------------------------------------------------------
    def profiles_csv(self) -> str:
        cols = ["t"]
        for m in self.members:
            cols += [f"a:{m.run_id}", f"f:{m.run_id}"]
        lines = [",".join(cols)]
        t = self.members[0].times
        for i in range(t.size):
            row = [t[i]]
            for m in self.members:
                row += [m.acceleration[i], m.energy[i]]
            lines.append(",".join(f"{float(v):.17g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_profiles_csv(cls, text: str, manifests: dict | None = None,
                          initial_hash: str = "") -> "Ensemble":
        rows = [ln.split(",") for ln in text.strip().splitlines()]
        header, data = rows[0], np.array(rows[1:], dtype=float)
        if header[0] != "t":
            raise ValueError("profiles table must start with column t")
        members = []
        for j in range(1, len(header), 2):
            run_id = header[j].split(":", 1)[1]
            members.append(EnsembleMember(run_id, (manifests or {}).get(run_id, {}), data[:, 0],
                                          data[:, j], data[:, j + 1]))
        return cls(tuple(members), initial_hash)


def _as_profiles(ens, objective):
    if isinstance(ens, Ensemble):
        return ens.profiles(objective)
    return list(ens)


def minimal_elements(ens, objective: str = "acceleration", tol: float | None = None) -> list:
    """Run ids of members not strictly dominated by any other member.

    ``ens`` is an ``Ensemble`` or a sequence of profiles.  The result is
    sorted by run id and nonempty for a nonempty ensemble: a positive ``tol``
    can make domination cyclic, and if every member is dominated the members
    of strongly connected components that nothing outside dominates are
    returned instead.
    """
    profs = _as_profiles(ens, objective)
    if not profs:
        raise ValueError("empty ensemble")
    if tol is None:
        top = max(float(np.max(np.abs(p.values), initial=0.0)) for p in profs)
        tol = 1e-9 * (1.0 + top)
    V = np.stack([p.values for p in profs])
    for p in profs[1:]:
        _check_grid(profs[0], p)
    # below[i, j]: member j lies below member i everywhere (within tol)
    below = np.all(V[None, :, :] <= V[:, None, :] + tol, axis=2)
    strict = np.any(V[None, :, :] < V[:, None, :] - tol, axis=2)
    edges = below & strict  # edges[i, j]: j dominates i
    dominated = np.any(edges, axis=1)
    if np.all(dominated):
        # tolerance made domination cyclic; keep the undominated components
        n_comp, label = connected_components(csr_matrix(edges.T), directed=True, connection="strong")
        entering = np.zeros(n_comp, dtype=bool)
        for i, j in zip(*np.nonzero(edges)):
            if label[i] != label[j]:
                entering[label[i]] = True
        dominated = entering[label]
    return sorted(p.run_id for p, d in zip(profs, dominated) if not d)


def _chain_order(tol):
    def cmp(p, q):
        rel = compare(p, q, tol)
        if rel is Relation.LESS_EQ:
            return -1
        if rel is Relation.GREATER_EQ:
            return 1
        return (p.run_id > q.run_id) - (p.run_id < q.run_id)
    return functools.cmp_to_key(cmp)


def maximal_chain(ens, tol: float | None = None, objective: str = "acceleration",
                  seed: str | None = None) -> list:
    """Greedy maximal totally ordered subset, listed from smallest to largest.

    Candidates are scanned in run-id order (after ``seed`` if given); each is
    kept when it is comparable with everything kept so far.  Members skipped
    stay incomparable to some chain element, so the chain cannot be extended.
    """
    profs = sorted(_as_profiles(ens, objective), key=lambda p: p.run_id)
    if not profs:
        raise ValueError("empty ensemble")
    if seed is not None:
        profs.sort(key=lambda p: (p.run_id != seed, p.run_id))
    chain = []
    for p in profs:
        if all(compare(p, c, tol) is not Relation.INCOMPARABLE for c in chain):
            chain.append(p)
    chain.sort(key=_chain_order(tol))
    return [p.run_id for p in chain]


def pairwise_matrix(ens, objective: str = "acceleration", tol: float | None = None) -> dict:
    profs = _as_profiles(ens, objective)
    return {p.run_id: {q.run_id: compare(p, q, tol).value for q in profs} for p in profs}


def selection_report(ens: Ensemble, objective: str = "acceleration", tol: float | None = None) -> dict:
    """Minimal set, one maximal chain through each minimal element, and the relation table."""
    minimal = minimal_elements(ens, objective, tol)
    chains = []
    for seed in minimal:
        ch = maximal_chain(ens, tol, objective, seed=seed)
        if ch not in chains:
            chains.append(ch)
    return {"objective": objective, "tol": tol, "minimal": minimal, "chains": chains,
            "pairwise": pairwise_matrix(ens, objective, tol)}


def selection_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# ensemble generation ----------------------------------------------------------

def perturbed_configs(base, strategy: str, k: int) -> list:
    """Member configurations for a perturbation ``strategy``.

    These are heuristics for producing distinct approximate solutions from one
    initial measure: geometric sweeps of the timestep or particle count,
    optimizer seeds, or coarse-graining resolution; ``mixed`` cycles through
    the four.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    out = []
    for j in range(k):
        s = STRATEGIES[j % 4] if strategy == "mixed" else strategy
        jj = j // 4 + 1 if strategy == "mixed" and j > 0 else j
        if j == 0:
            cfg = base
        elif s == "tau":
            cfg = replace(base, tau=base.tau * 2.0 ** (-jj / 4))
        elif s == "n_particles":
            cfg = replace(base, n_particles=int(round(base.n_particles * 2.0 ** (jj / 4))))
        elif s == "seed":
            cfg = replace(base, seed=(base.seed or 0) + jj)
        else:
            n0 = base.n_cells or int(np.ceil(np.sqrt(base.n_particles)))
            cfg = replace(base, n_cells=max(1, int(round(n0 * 2.0 ** (jj / 2)))))
        out.append((f"m{j:03d}", s, cfg))
    return out


class PartialEnsembleError(RuntimeError):
    def __init__(self, failures: dict, ensemble: Ensemble | None = None):
        self.failures = failures
        self.ensemble = ensemble
        listing = "; ".join(f"{k}: {v}" for k, v in failures.items())
        super().__init__(f"{len(failures)} ensemble member(s) failed: {listing}")


def perturb_and_run(base, strategy: str, k: int, sink=None) -> Ensemble:
    """Run ``k`` perturbed copies of ``base`` and collect their profiles.

    All members start from the same initial measure.  Profiles are resampled
    by linear interpolation onto the first member's diagnostic grid.
    ``sink(run_id, config, result)``, if given, receives each finished run.
    """
    from .runner import execute, initial_data_hash

    results, failures = {}, {}
    for run_id, label, cfg in perturbed_configs(base, strategy, k):
        try:
            res = execute(cfg)
            results[run_id] = (label, cfg, res)
            if sink is not None:
                sink(run_id, cfg, res)
        except Exception as err:  # collected and reported together
            failures[run_id] = f"{type(err).__name__}: {err}"
    members = []
    grid = None
    for run_id, (label, cfg, res) in results.items():
        s = res.series
        if grid is None:
            grid = s.times
        members.append(EnsembleMember(
            run_id,
            {"strategy": label, "tau": cfg.tau, "n_particles": cfg.n_particles, "seed": cfg.seed,
             "n_cells": cfg.n_cells, "heuristic": True},
            grid, np.interp(grid, s.times, s.a), np.interp(grid, s.times, s.f)))
    ens = Ensemble(tuple(members), initial_data_hash(base)) if members else None
    if failures:
        raise PartialEnsembleError(failures, ens)
    return ens

