"""Cahn-Hilliard equations on prescribed evolving surfaces, discretised with transported P1 elements."""
from .diagnostics import (AdmissibilityReport, admissibility_profile, energy, gronwall_bound,
                          hminus1_distance, observables)
from .errors import (ConfigError, DomainError, EvosurfError, GeometryError, MeanValueError,
                     NewtonError, SimulationError)
from .fem import AssembledForms, assemble_forms, inverse_laplacian, l2_project
from .geometry import (AnisotropicScaling, CustomVelocity, EvolvingSurface, MovingMesh, RadialScaling,
                       Stationary, TangentialRotation, advect_mesh, density_rho, element_jacobian,
                       icosphere, make_surface, read_off)
from .potentials import LogPotential, ObstaclePenalty, SmoothPotential, check_assumptions, eval_potential
from .solver import (SchemeConfig, SimState, SimulationResult, run_simulation, step_ch1,
                     step_ch1_obstacle, step_ch_rho)

__version__ = "0.1.0"
