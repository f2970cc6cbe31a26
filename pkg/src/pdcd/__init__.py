"""Randomized coordinate-descent primal-dual solvers for f(x) + g(x) + h(Mx).

The package solves convex problems of the form

    minimize  f(x) + g(x) + h(Mx)

over a product space of coordinate blocks, where f is smooth with
coordinate-wise Lipschitz gradients, g and h are proximable, and M is a
sparse block linear operator. The main solver updates one randomly
chosen coordinate block per iteration with coordinate-wise step sizes,
using a duplicated dual variable so that each iteration touches only the
dual rows coupled to the chosen block. Deterministic full-update and
forward-backward variants, a literal duplicated-space reference
iteration, Lyapunov diagnostics, and problem builders (TV + l1
deblurring, dual SVM, Lasso) are included.
"""

from .blocks import (
    BlockStructure,
    BlockVector,
    BlockLinearOperator,
    DuplicatedDual,
    weighted_norm_sq,
    block_dot,
    build_duplication,
    dual_reduce_S,
    dual_expand,
)
from .functions import (
    ConjugateUnavailable,
    ProxFunction,
    SmoothFunction,
    ConjugateProx,
    least_squares_f,
    svm_dual_f,
    l1_norm,
    group_l21_norm,
    box_indicator,
    hyperplane_indicator,
    zero_function,
    conjugate_prox,
)
from .stepsize import (
    StepSizes,
    coordinate_spectral_term,
    max_tau,
    default_sigma,
    make_stepsizes,
    default_steps,
    duplicated_sigma,
)
from .solver import (
    SolverConfig,
    SolverState,
    RunResult,
    DivergenceError,
    iterate_cd_primal_dual,
    iterate_cd_pd_mj1,
    iterate_cd_forward_backward,
    iterate_unrolled_oracle,
    iterate_full_vu_condat,
    t_map,
    run,
)
from .diagnostics import (
    Checkpoint,
    Trace,
    objective_value,
    lagrangian,
    V_lyapunov,
    V_tilde,
    S_bregman,
    saddle_residual,
    svm_duality_gap,
    enumerate_conditional_expectation,
)
from .problems import (
    ProblemSpec,
    gradient_operator_3d,
    build_tv_l1,
    build_svm_dual,
    build_lasso,
    build_toy_counterexample,
    read_libsvm,
    synth_regression,
    synth_classification,
    svm_class_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BlockStructure",
    "BlockVector",
    "BlockLinearOperator",
    "DuplicatedDual",
    "weighted_norm_sq",
    "block_dot",
    "build_duplication",
    "dual_reduce_S",
    "dual_expand",
    "ConjugateUnavailable",
    "ProxFunction",
    "SmoothFunction",
    "ConjugateProx",
    "least_squares_f",
    "svm_dual_f",
    "l1_norm",
    "group_l21_norm",
    "box_indicator",
    "hyperplane_indicator",
    "zero_function",
    "conjugate_prox",
    "StepSizes",
    "coordinate_spectral_term",
    "max_tau",
    "default_sigma",
    "make_stepsizes",
    "default_steps",
    "duplicated_sigma",
    "SolverConfig",
    "SolverState",
    "RunResult",
    "DivergenceError",
    "iterate_cd_primal_dual",
    "iterate_cd_pd_mj1",
    "iterate_cd_forward_backward",
    "iterate_unrolled_oracle",
    "iterate_full_vu_condat",
    "t_map",
    "run",
    "Checkpoint",
    "Trace",
    "objective_value",
    "lagrangian",
    "V_lyapunov",
    "V_tilde",
    "S_bregman",
    "saddle_residual",
    "svm_duality_gap",
    "enumerate_conditional_expectation",
    "ProblemSpec",
    "gradient_operator_3d",
    "build_tv_l1",
    "build_svm_dual",
    "build_lasso",
    "build_toy_counterexample",
    "read_libsvm",
    "synth_regression",
    "synth_classification",
    "svm_class_weights",
]
