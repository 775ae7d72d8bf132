"""Discrete nonlinear Schrodinger equation on expanding lattices.

Finite-lattice geometry, the sine eigenbasis, difference calculus, Strang
splitting solvers, norms and an experiment harness for continuum-limit
studies.  The most used names are re-exported here; everything else lives in
the submodules.
"""
from .analysis import energy, hs_norm, lp_norm, mass, strichartz_norm
from .dynamics import SolverConfig, Trajectory, continuum_solve, linear_flow, nls_solve
from .harness import ConfigError, ExperimentConfig, ExperimentReport, run
from .lattice import ContinuumGrid, GridFunction, LatticeSpec, PeriodicLattice, make_lattice
from .spectral import SpectralCoeffs, forward, inverse, project_band

__version__ = "0.1.0"

__all__ = [
    "LatticeSpec",
    "PeriodicLattice",
    "ContinuumGrid",
    "GridFunction",
    "make_lattice",
    "SpectralCoeffs",
    "forward",
    "inverse",
    "project_band",
    "SolverConfig",
    "Trajectory",
    "linear_flow",
    "nls_solve",
    "continuum_solve",
    "lp_norm",
    "hs_norm",
    "mass",
    "energy",
    "strichartz_norm",
    "ExperimentConfig",
    "ExperimentReport",
    "ConfigError",
    "run",
]
