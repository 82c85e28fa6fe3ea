"""Phase-field model of lipid rafts on a nearly spherical membrane, with
P1 surface finite elements, a secant-controlled reduced gradient flow and
adaptive red-green refinement."""

from .analysis import count_rafts, deformation_surface, diagnose, el_residual, poincare_check
from .constraints import gsolve, project_V
from .dynamics import (
    AdaptSettings,
    RunSettings,
    SimState,
    SolverSettings,
    TimeControl,
    adaptive_tau,
    cap_initial,
    full_step,
    random_initial,
    reduced_step,
    run,
)
from .femcore import P1Space, assemble_mass, assemble_stiffness, integrate, lumped_mass, mean_value, space
from .geometry import AdaptMarks, SurfaceMesh, build_octasphere, mark_for_adaptation, refine_elements, transfer_field
from .physics import Params, energy_full, energy_reduced

__version__ = "0.1.0"
