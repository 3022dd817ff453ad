"""Pseudo-spectral solver for a Q-tensor / Navier-Stokes system on the
periodic box, with diagnostics for decay, continuous dependence and
partial-regularity quantities."""

from .qtensor import PotentialParams, TracelessSym3, derive_constants
from .grid import Grid
from .dynamics import Model
from .timestepper import SolverConfig, State, run, step

__all__ = ["PotentialParams", "TracelessSym3", "derive_constants", "Grid",
           "Model", "SolverConfig", "State", "run", "step"]
__version__ = "0.1.0"
