"""Controllability of a 1D quasilinear heat equation under nonnegative controls.

The state solves ``y_t - (a(y) y_x)_x = v * rho`` on (0, L) with zero
Dirichlet data. The package provides the forward solver, steady states,
penalized HUM local control, stair-case and tracking strategies that keep
the control nonnegative, and lower-bound certificates for the minimal time.
"""
from .errors import *  # noqa: F401,F403
from .fields import ControlSchedule, Trajectory, concatenate, time_ladder
from .grid import (ControlMask, Grid, build_control_mask, build_grid, c2_proxy, full_mask, gradient, inner,
                   l1_norm, l2_norm, sup_norm)
from .laws import (DiffusionLaw, constant_law, custom_law, get_law, kirchhoff, kirchhoff_inverse,
                   rational_bump, two_plus_sine)
from .solvers import (StepOperators, check_comparison, solve_adjoint_discrete, solve_forward,
                      solve_linearized)
from .steady import SteadyState, build_path, path_modulus, solve_steady
from .local import (build_linearization, carleman_weights, empirical_observability,
                    exact_control_to_trajectory, hum_null_control, hum_objective)
from .staircase import (control_between_steady_states, plan_staircase, run_staircase,
                        verify_nonnegativity)
from .tracking import (check_gradient_condition, manufacture_target, stabilization_phase,
                       track_trajectory)
from .mintime import (build_terminal_datum, certify_mintime_lower, dirichlet_eigenfunction, duality_gap,
                      search_constrained_time)
from .report import ReportBundle, emit_report
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"
