"""Preference-based Bayesian optimization from rankings, pairwise choices, and ties."""

__version__ = "0.1.0"

from .acquisition import (
    AcquisitionConfig,
    MaximizerSet,
    best_guess,
    build_maximizer_set,
    mpes_score,
    mpes_score_stochastic,
    select_query_ei_pair,
    select_query_mpes,
    select_query_random,
)
from .gp import (
    CandidatePool,
    GaussianBelief,
    KernelParams,
    NumericalError,
    kernel_matrix,
    posterior_predict,
    sample_joint,
)
from .inference import (
    FitConfig,
    FitResult,
    VariationalPosterior,
    elbo_estimate,
    fit,
    kl_gaussian,
)
from .likelihood import (
    Observation,
    choice_log_prob,
    dataset_log_likelihood,
    observation_log_likelihood,
    tie_log_prob,
    topk_log_prob,
)
from .oracle import (
    Objective,
    OracleConfig,
    default_pool,
    generate_observation,
    load_tabular,
    sample_gumbel_utilities,
)

__all__ = [
    "AcquisitionConfig",
    "CandidatePool",
    "FitConfig",
    "FitResult",
    "GaussianBelief",
    "KernelParams",
    "MaximizerSet",
    "NumericalError",
    "Objective",
    "Observation",
    "OracleConfig",
    "VariationalPosterior",
    "best_guess",
    "build_maximizer_set",
    "choice_log_prob",
    "dataset_log_likelihood",
    "default_pool",
    "elbo_estimate",
    "fit",
    "generate_observation",
    "kernel_matrix",
    "kl_gaussian",
    "load_tabular",
    "mpes_score",
    "mpes_score_stochastic",
    "observation_log_likelihood",
    "posterior_predict",
    "sample_gumbel_utilities",
    "sample_joint",
    "select_query_ei_pair",
    "select_query_mpes",
    "select_query_random",
    "tie_log_prob",
    "topk_log_prob",
]
