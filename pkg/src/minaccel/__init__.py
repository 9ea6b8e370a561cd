"""Variational particle scheme for 1D isentropic gas dynamics.

The submodules carry the full API; the names below are the usual entry points.
"""
from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import ConsistencyError, DiagnosticSeries, diagnose
from .gas import GasLaw, ParticleState, total_energy
from .runner import execute, run
from .selection import (AccelerationProfile, Ensemble, compare, maximal_chain, minimal_elements,
                        perturb_and_run)
from .stepper import SolverError, SolverOptions, StepProblem, solve_step
from .trajectory import Trajectory, march, sample
from .transport import AtomicMeasure, bl_norm, wasserstein_p

__all__ = [
    "AccelerationProfile", "AtomicMeasure", "ConfigError", "ConsistencyError", "DiagnosticSeries",
    "Ensemble", "GasLaw", "ParticleState", "RunConfig", "SolverError", "SolverOptions",
    "StepProblem", "Trajectory", "bl_norm", "compare", "diagnose", "execute", "load_config",
    "march", "maximal_chain", "minimal_elements", "parse_config", "perturb_and_run", "run",
    "sample", "solve_step", "total_energy", "wasserstein_p",
]
