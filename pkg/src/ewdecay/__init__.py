"""Damped semilinear anisotropic elastic waves: hypothesis checkers, explicit
P1 simulation and energy-decay diagnostics."""

from .config import ConfigError, RunConfig
from .diagnostics import (CutoffSpec, DecayFit, MorawetzAccumulator, MultiplierReport,
                          ObservabilityReport, dissipation_residual, fit_decay, morawetz_check,
                          observability_ratio)
from .dynamics import (BlowUpError, EnergyTrace, Forcing, LeapfrogIntegrator, NonlinearityParams,
                       SimState, initial_data, stable_dt, step)
from .fem import AssembledSystem, assemble, energy_quadrature, nonlinear_force, strain, stress
from .geometry import (GAMMA0, GAMMA1, DampingField, Mesh, bump_damping, check_boundary_signs,
                       check_omega_cover, gen_annulus_mesh, gen_shell_mesh, load_mesh, save_mesh)
from .mms import MMSConfig, convergence_study
from .pipeline import observability_ensemble, simulate
from .tensor import (AssumptionAResult, ElasticityTensorField, EllipticityBounds,
                     assumption_a_margin, ellipticity_bounds, lame_tensor, max_delta,
                     radial_derivative, scalar_condition_check, voigt_matrix)

__version__ = "0.1.0"
