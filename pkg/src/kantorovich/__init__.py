"""Iterates of generalized Kantorovich operators and their duals on measures."""

from ._validation import AccuracyError, DomainError, WorkLimitError
from .analysis import (
    ConvergenceReport,
    acu_rasa_verdict,
    affine_limit_probe,
    cesaro_check,
    dual_convergence_probe,
    gap02_survey,
    kernel_stochasticity_check,
    rate_estimate,
    ratio_bound_check,
    uniform_convergence_probe,
    zero_two_echo,
)
from .discsim import DiscState, disc_cesaro, disc_step, disc_trajectory
from .measures import (
    CertifiedValue,
    PartitionMeasure,
    delta_image,
    dirac_one,
    dual_apply,
    gamma_weights,
    gap02,
    lattice_min_mass,
    lebesgue_measure,
    moments,
    tv_distance,
    wedge_lower_bound,
)
from .observables import OBSERVABLE_BANK, parse_polynomial
from .operators import (
    BernsteinOperator,
    GridFunction,
    KantorovichOperator,
    MKZOperator,
    OperatorSpec,
    ProjectionOperator,
    apply_bernstein,
    apply_kantorovich,
    apply_mkz,
    apply_projection,
    bernstein_node_matrix,
    cesaro_on_grid,
    iterate_on_grid,
    subinterval_integrals,
)
from .seqcore import (
    KantorovichWeights,
    alpha_weights,
    argmax_indices,
    beta_weights,
    kantorovich_weights,
    log_binomial,
    pivot_index,
    truncation_index,
    window_mass,
)

__version__ = "0.1.0"
