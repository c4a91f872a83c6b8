"""Escape speed and correlation structure of the 1d weakly self-avoiding
walk, computed two independent ways: Nystrom discretization of the
local-time transfer operator, and direct Monte Carlo over trajectories.
"""

from .config import RunConfig
from .criticality import BracketError, CriticalPoint, OperatorFamily, find_nu_c, speed, sweep
from .discretize import (
    DiscretizedOperator,
    QuadGrid,
    QuadratureRule,
    assemble,
    build_grid,
    default_grid,
    figure1_grid,
    with_s_max,
)
from .greenfn import (
    DivergenceError,
    FixedPoint,
    MomentSums,
    critical_exponent_fit,
    exponent_fit,
    finite_volume_two_point,
    fixed_point_q,
    moment_sums,
    susceptibility_plus,
    two_point,
    two_point_table,
)
from .kernels import KernelKind, bessel_i0_scaled, bessel_i1_scaled, kernel_eval
from .mcsim import (
    MCError,
    Trajectory,
    WeightedEstimate,
    estimate_concentration,
    estimate_conditional_moment,
    estimate_laplace_two_point,
    gibbs_weight,
    sample_trajectory,
)
from .model import ModelParams, PhiSpec, phi_eval
from .monotonicity import (
    Certificate,
    CnSequence,
    Hn_consistency,
    L_lambda,
    cn_sequence,
    dominance_check,
    theta_derivative,
)
from .spectral import (
    CriticalityError,
    EigenConvergenceError,
    Resolvent,
    SpectralResult,
    lambda_first_derivs,
    lambda_second_derivs,
    leading_eigenpair,
    resolvent_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "Certificate",
    "CnSequence",
    "CriticalPoint",
    "CriticalityError",
    "DiscretizedOperator",
    "DivergenceError",
    "EigenConvergenceError",
    "FixedPoint",
    "Hn_consistency",
    "KernelKind",
    "L_lambda",
    "MCError",
    "ModelParams",
    "MomentSums",
    "OperatorFamily",
    "PhiSpec",
    "QuadGrid",
    "QuadratureRule",
    "Resolvent",
    "RunConfig",
    "SpectralResult",
    "Trajectory",
    "WeightedEstimate",
    "assemble",
    "bessel_i0_scaled",
    "bessel_i1_scaled",
    "build_grid",
    "cn_sequence",
    "default_grid",
    "dominance_check",
    "estimate_concentration",
    "estimate_conditional_moment",
    "estimate_laplace_two_point",
    "critical_exponent_fit",
    "exponent_fit",
    "figure1_grid",
    "find_nu_c",
    "finite_volume_two_point",
    "fixed_point_q",
    "gibbs_weight",
    "kernel_eval",
    "lambda_first_derivs",
    "lambda_second_derivs",
    "leading_eigenpair",
    "moment_sums",
    "phi_eval",
    "resolvent_solve",
    "sample_trajectory",
    "speed",
    "susceptibility_plus",
    "sweep",
    "theta_derivative",
    "two_point",
    "two_point_table",
    "with_s_max",
]
