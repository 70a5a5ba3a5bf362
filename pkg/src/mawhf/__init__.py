"""Wiener-Hopf factorization for Markov-modulated processes with exponential upward jumps.

The main entry points are :func:`solve_sup` and :func:`solve_inf` for a killed
process, :func:`ruin_curve` for the all-time infimum and
:func:`simulate_paths` for the Monte Carlo oracle.
"""

__version__ = "0.1.0"

from .asymptotics import (AsymptoticsError, RuinCurve, inf_transform_limit, limit_R_check, ruin_curve,
                          zero_drift_atoms)
from .factorize import (FactorizationError, InfFactorization, NonConvergenceError, SupFactorization,
                        first_passage_transforms, identity_residuals, phi_plus_general, solve_inf, solve_sup)
from .inversion import (GriddedDistribution, GridError, exp_smooth_convolution, invert_xi_distribution,
                        minus_projection_moment)
from .model import (Atom, Erlang, ModelError, ModelSpec, NegativeMixture, SwitchJumpLaw, load_model,
                    mirror_model, scalar_model, stationary_distribution, validate_model)
from .montecarlo import SimBatch, compare_report, simulate_paths
from .spectral import CumulantEvaluator

__all__ = [
    "AsymptoticsError", "Atom", "CumulantEvaluator", "Erlang", "FactorizationError", "GridError",
    "GriddedDistribution", "InfFactorization", "ModelError", "ModelSpec", "NegativeMixture",
    "NonConvergenceError", "RuinCurve", "SimBatch", "SupFactorization", "SwitchJumpLaw",
    "compare_report", "exp_smooth_convolution", "first_passage_transforms", "identity_residuals",
    "inf_transform_limit", "invert_xi_distribution", "limit_R_check", "load_model",
    "minus_projection_moment", "mirror_model", "phi_plus_general", "ruin_curve", "scalar_model",
    "simulate_paths", "solve_inf", "solve_sup", "stationary_distribution", "validate_model",
    "zero_drift_atoms",
]
