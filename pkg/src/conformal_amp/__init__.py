"""Full conformal prediction for ridge/lasso regression, accelerated by
approximate message passing.

The package provides: data handling in the 1/d feature-variance
convention (`data`), closed-form channels/denoisers (`glm`), the AMP
fixed point with one-fit leave-one-out extraction (`amp`), its
first-order expansion in the test label (`taylor`), exact solvers and
the brute-force leave-one-out oracle (`exact`), relaxed belief
propagation as a small-scale cross-check (`rbp`), prediction-set
construction and metrics (`conformal`), Bayes-optimal reference
intervals (`bayes`), and the experiment harness behind the
`conformal-amp` command line (`bench`, `cli`).
"""

from ._version import __version__
from .amp import (
    AmpOptions,
    AmpState,
    DivergenceError,
    NotConvergedError,
    amp_fit,
    conformity_scores_amp,
    loo_coefficients,
    loo_predictions,
)
from .bayes import (
    BayesConfig,
    bayes_interval_gaussian,
    bayes_interval_laplace,
    gaussian_posterior_mean,
    laplace_posterior_mean,
    mmse_amp_fit,
)
from .bench import (
    EXPERIMENTS,
    ExperimentConfig,
    MethodMetrics,
    Report,
    emit_report,
    run_experiment,
)
from .conformal import (
    BACKENDS,
    ConformalConfig,
    LabelGrid,
    Metrics,
    PredictionSet,
    conformal_rank,
    conformal_threshold,
    default_grid,
    evaluate,
    fcp_predict,
    jaccard,
    scp_predict,
)
from .data import (
    Dataset,
    RealDataConfig,
    SplitSpec,
    SyntheticConfig,
    augment,
    generate_synthetic,
    load_csv,
    split,
)
from .exact import ErmSolution, erm_solve, exact_loo_predictions, exact_loo_scores
from .glm import (
    ChannelOutput,
    DenoiserOutput,
    GlmSpec,
    channel_squared,
    denoiser,
    prox_generic,
)
from .rbp import RbpState, rbp_fit, rbp_loo_prediction, rbp_loo_predictions
from .taylor import (
    TaylorState,
    taylor_fit,
    taylor_loo_derivative,
    taylor_loo_derivatives,
    taylor_scores,
)

__all__ = [
    "__version__",
    "AmpOptions", "AmpState", "DivergenceError", "NotConvergedError",
    "amp_fit", "conformity_scores_amp", "loo_coefficients", "loo_predictions",
    "BayesConfig", "bayes_interval_gaussian", "bayes_interval_laplace",
    "gaussian_posterior_mean", "laplace_posterior_mean", "mmse_amp_fit",
    "EXPERIMENTS", "ExperimentConfig", "MethodMetrics", "Report",
    "emit_report", "run_experiment",
    "BACKENDS", "ConformalConfig", "LabelGrid", "Metrics", "PredictionSet",
    "conformal_rank", "conformal_threshold", "default_grid", "evaluate",
    "fcp_predict", "jaccard", "scp_predict",
    "Dataset", "RealDataConfig", "SplitSpec", "SyntheticConfig",
    "augment", "generate_synthetic", "load_csv", "split",
    "ErmSolution", "erm_solve", "exact_loo_predictions", "exact_loo_scores",
    "ChannelOutput", "DenoiserOutput", "GlmSpec",
    "channel_squared", "denoiser", "prox_generic",
    "RbpState", "rbp_fit", "rbp_loo_prediction", "rbp_loo_predictions",
    "TaylorState", "taylor_fit", "taylor_loo_derivative",
    "taylor_loo_derivatives", "taylor_scores",
]
