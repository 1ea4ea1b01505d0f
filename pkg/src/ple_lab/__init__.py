"""Penalized likelihood estimation (PLE) next to MLE, at desk scale.

PLE picks the estimator ``H`` that maximizes the likelihood of the data
while keeping ``E[H(Y)] = H(X)`` for data ``Y`` drawn from the fitted
model, so refitting a model to its own samples does not drift.
"""

__version__ = "0.1.0"

from .autophagy import ConfigurationError, GenerationTrace, LoopConfig, collapse_rate, run_loop
from .density import (
    DensityGrid,
    LocalEstimateMap,
    binned_l1,
    estimator_density,
    pushforward,
    self_convolve,
)
from .distributions import (
    FAMILIES,
    ParameterDomainError,
    SeededRng,
    get_family,
    log_likelihood,
    logpdf,
    pdf,
    sample,
)
from .estimators import (
    ESTIMATORS,
    BiasReport,
    EstimatorFn,
    analytic_bias,
    get_estimator,
    mle_gaussian,
    mle_uniform,
    monte_carlo_bias,
    ple_gaussian,
    ple_uniform_linear,
    ple_uniform_max,
)
from .gmm_lab import (
    EmConfig,
    FairnessReport,
    GridResult,
    GridSpec,
    em_fit,
    fairness_report,
    kl_divergence,
    run_grid,
)
from .hypernet import HyperNet, TrainConfig, forward, train
from .solver import (
    ConstraintEstimate,
    EstimatorClass,
    InfeasibleError,
    PenaltyConfig,
    estimate_constraint,
    ple_fit,
    ple_point_estimate,
)
