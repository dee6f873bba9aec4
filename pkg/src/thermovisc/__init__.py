"""Desk-scale 2D nonlinear thermoviscoelasticity simulator and check suite.

Subpackages:
  constitutive   two-well free energy family, dissipation, conductivity,
                 truncations/regularizers, linearized tensors, certification
  grid           structured Q1 grid, quadrature operators, heat-step assembly
  nonlinear_sim  incremental minimization + semi-implicit heat stepping
  linear_sim     implicit solver for the linearized system
  diagnostics    energy balances, temperature floors, scaling reports
  config / cli   plain-text configuration and the `thermovisc` command
"""

__version__ = "0.1.0"

from .constitutive import MaterialModel, LinearizedTensors  # noqa: F401
from .grid import Grid2, State  # noqa: F401
from .nonlinear_sim import SimConfig, Trajectory, run  # noqa: F401
from .linear_sim import run_linear  # noqa: F401
