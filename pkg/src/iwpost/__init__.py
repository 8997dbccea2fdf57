"""Importance-weighted variational bounds and their implicit posteriors.

Reweighting a simple Gaussian proposal toward an unnormalized target
with a batch of importance samples yields a family of increasingly
flexible implicit distributions. This package evaluates and samples
those distributions on tractable 1-D/2-D targets, estimates the
associated lower bounds on the log normalizer, and checks every claimed
ordering and normalization property against deterministic grid
quadrature.
"""

from .bounds import (
    BoundEstimate,
    expected_qiw_vae_bound,
    iwae_elbo_mc,
    vae_bound_of_qiw_quadrature,
    vae_elbo_mc,
    vae_elbo_qew_quadrature,
)
from .errors import CapabilityError, DiagnosticError, DivergenceError, NumericError
from .fields import DensityField, Grid, default_grid
from .implicit import (
    QiwContext,
    plot_qew_grid,
    qew_density_mc,
    qiw_unnorm_density,
    sir_sample,
)
from .model import (
    GaussianProposal,
    LatentPoint,
    TargetModel,
    builtin_target,
    proposal_log_density,
    proposal_sample,
    target_log_density,
)
from .optim import (
    FitStep,
    FitTrace,
    IwaeGradient,
    fit_proposal,
    iwae_gradient,
    reparam_sample,
)
from .oracle import (
    field_mass,
    kl_field,
    log_marginal,
    max_abs_error,
    quadrature,
    sample_mass,
    true_posterior_field,
    tv_distance,
)
from .rng import RngStream, make_rng, substreams
from .weights import log_mean_exp, log_weight, normalize_weights

__version__ = "0.1.0"

__all__ = [
    "BoundEstimate",
    "CapabilityError",
    "DensityField",
    "DiagnosticError",
    "DivergenceError",
    "FitStep",
    "FitTrace",
    "GaussianProposal",
    "Grid",
    "IwaeGradient",
    "LatentPoint",
    "NumericError",
    "QiwContext",
    "RngStream",
    "TargetModel",
    "builtin_target",
    "default_grid",
    "expected_qiw_vae_bound",
    "field_mass",
    "fit_proposal",
    "iwae_elbo_mc",
    "iwae_gradient",
    "kl_field",
    "log_marginal",
    "log_mean_exp",
    "log_weight",
    "make_rng",
    "max_abs_error",
    "normalize_weights",
    "plot_qew_grid",
    "proposal_log_density",
    "proposal_sample",
    "qew_density_mc",
    "qiw_unnorm_density",
    "quadrature",
    "reparam_sample",
    "sample_mass",
    "sir_sample",
    "substreams",
    "target_log_density",
    "true_posterior_field",
    "tv_distance",
    "vae_bound_of_qiw_quadrature",
    "vae_elbo_mc",
    "vae_elbo_qew_quadrature",
]
