"""Numerical lab for steady capillary-gravity water waves carrying a vortex spike.

A strongly localized vortex in a finite-depth channel, built from the radial
ground state of Delta U = U - U^3 scaled by delta, balanced between the bed
and a free surface with gravity and surface tension.
"""

from .ground_state import GroundState, Nonlinearity, shoot
from .pipeline import RunConfig, cmd_solve, cmd_sweep
from .solution import WaveSolution, assemble_solution, diagnostics
from .strip import StripGrid
from .wave import PhysicalParams, find_tau_root, ls_fixed_point, probe

__all__ = [
    "GroundState", "Nonlinearity", "shoot", "StripGrid", "PhysicalParams", "probe", "ls_fixed_point",
    "find_tau_root", "assemble_solution", "diagnostics", "WaveSolution", "RunConfig", "cmd_solve", "cmd_sweep",
]
