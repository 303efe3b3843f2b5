"""Data-driven synthesis of LQ-integral tracking controllers.

The package covers the full pipeline for linear time-invariant plants
whose model is unknown but which can be probed with a persistently
exciting input: data collection (derivative or integral sampling),
sample-covariance summaries with rank diagnostics, a purely data-based
parameterization of the integral-augmented closed loop, optimal gain
synthesis by a semidefinite program or by a projected policy-gradient
flow, model-based Riccati cross-checks, and closed-loop tracking
simulation with load and reference steps.
"""

from ._kernels import backend_name
from .data import (CovariancePack, DataBatch, ExcitationSignal, PeRankReport,
                   build_covariances, check_pe_rank, collect_derivative_data,
                   collect_integral_data, pe_sample_bound, random_excitation,
                   simulate_zoh)
from .errors import (AssumptionError, ConfigError, ConsistencyError,
                     ConvergenceError, DdlqiError, DimensionError,
                     DomainError, InfeasibleError, NumericalError, RankError,
                     SingularMatrixError)
from .flow import (FlowOptions, FlowSample, FlowTrajectory, integrate_flow,
                   lqr_cost, lqr_cost_gradient, model_based_gradient,
                   tangent_projection)
from .linalg import (is_hurwitz, matrix_exponential, solve_care,
                     solve_lyapunov, spectral_abscissa, stabilizing_gain)
from .models import (AugmentedModel, LtiModel, WeightSpec, augment,
                     check_aug_detectable, check_aug_stabilizable,
                     pid_to_augmented_gain)
from .param import (closed_loop_from_data, constraint_residual,
                    gain_to_parameterizer, is_admissible, is_stabilizing,
                    parameterizer_to_gain, reconstruct_model,
                    stabilizing_gain_from_data)
from .protocol import DemoOptions, DemoResult, run_dgu_demo
from .sdp import (SdpOptions, SdpProblem, SdpSolution, assemble_sdp,
                  extract_gain, solve_sdp)
from .tracking import (AdaptiveFlowController, ReferenceProfile, Scenario,
                       TrackingRecord, dgu_model, equilibrium_state,
                       integrator_residual, overshoot, simulate_lqi,
                       tracking_error)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveFlowController",
    "AssumptionError",
    "AugmentedModel",
    "ConfigError",
    "ConsistencyError",
    "ConvergenceError",
    "CovariancePack",
    "DataBatch",
    "DdlqiError",
    "DemoOptions",
    "DemoResult",
    "DimensionError",
    "DomainError",
    "ExcitationSignal",
    "FlowOptions",
    "FlowSample",
    "FlowTrajectory",
    "InfeasibleError",
    "LtiModel",
    "NumericalError",
    "PeRankReport",
    "RankError",
    "ReferenceProfile",
    "Scenario",
    "SdpOptions",
    "SdpProblem",
    "SdpSolution",
    "SingularMatrixError",
    "TrackingRecord",
    "WeightSpec",
    "assemble_sdp",
    "augment",
    "backend_name",
    "build_covariances",
    "check_aug_detectable",
    "check_aug_stabilizable",
    "check_pe_rank",
    "closed_loop_from_data",
    "collect_derivative_data",
    "collect_integral_data",
    "constraint_residual",
    "dgu_model",
    "equilibrium_state",
    "extract_gain",
    "gain_to_parameterizer",
    "integrate_flow",
    "integrator_residual",
    "is_admissible",
    "is_hurwitz",
    "is_stabilizing",
    "lqr_cost",
    "lqr_cost_gradient",
    "matrix_exponential",
    "model_based_gradient",
    "overshoot",
    "parameterizer_to_gain",
    "pe_sample_bound",
    "pid_to_augmented_gain",
    "random_excitation",
    "reconstruct_model",
    "run_dgu_demo",
    "simulate_lqi",
    "simulate_zoh",
    "solve_care",
    "solve_lyapunov",
    "solve_sdp",
    "spectral_abscissa",
    "stabilizing_gain",
    "stabilizing_gain_from_data",
    "tangent_projection",
    "tracking_error",
    "__version__",
]
