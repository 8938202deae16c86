"""Mixed-model and cluster-level ANCOVA for cluster randomized trials."""

from ._core import (
    ConfigError,
    CrtError,
    InvalidArgument,
    MetricsTable,
    MixedFit,
    NoConvergedReps,
    ParseError,
    ScenarioConfig,
    SingularDesign,
    TrialDataset,
    analyze,
    compare_ml_reml,
    fit,
    fit_cluster_ancova,
    gen_trial,
    gls_beta,
    icc_estimate,
    influence_values,
    model_based_variance,
    profile_loglik,
    projection_gap,
    read_trial,
    run_study,
    sandwich_variance,
)

__version__ = "0.1.0"


def delta_se(fit_result, data, variance="model"):
    """Standard error of the treatment effect from a mixed fit."""
    if variance == "model":
        cov = model_based_variance(fit_result, data)
    elif variance == "sandwich":
        cov = sandwich_variance(fit_result, data)
    else:
        raise ValueError("variance must be 'model' or 'sandwich'")
    return float(cov[1, 1]) ** 0.5
