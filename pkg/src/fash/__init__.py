"""Empirical Bayes adaptive shrinkage for noisy effect functions.

Units carrying effect estimates over a continuous condition are shrunk
toward a polynomial baseline through a mixture of process priors whose
weights are learned from all units jointly, with a conservative
Bayes-factor correction of the null weight, exact state-space smoothing,
and Monte-Carlo tests of arbitrary functionals of the effect function.
"""

__version__ = "0.1.0"

from .bfadjust import (
    BfAdjustConfig,
    BfAdjustResult,
    UnitDesign,
    adjust_pi0,
    bf_adjust,
    bf_moment_check,
    collapse_bayes_factors,
    collapse_log_bayes_factors,
)
from .ebayes import FitResult, PenaltyConfig, default_grid, em_update, fit_weights
from .errors import DataError, FashError, InvalidArgumentError, NumericError
from .ingest import adjust_se, read_long_csv, write_long_csv
from .lgp import LgpSpec, StateTransition, iwp_covariance, psd, psd_to_sigma, sample_prior_paths, transition
from .likelihood import (
    LikelihoodMatrix,
    MixturePrior,
    ObservationUnit,
    likelihood_matrix,
    marginal_loglik,
    marginal_loglik_dense,
)
from .pipeline import FitModel, default_diffuse_variance, fit_model, null_posterior_weights
from .posterior import (
    FunctionalSpec,
    PosteriorMixture,
    TestTable,
    build_posterior,
    build_test_table,
    builtin_functional,
    fdr_curve,
    lfdr,
    lfsr_functional,
    posterior_weights,
    sample_posterior,
    smooth,
)
from .simulate import GroundTruth, SimulationConfig, StudySettings, generate_dataset, run_calibration, run_pi0_sweep

__all__ = [
    "BfAdjustConfig",
    "BfAdjustResult",
    "DataError",
    "FashError",
    "FitModel",
    "FitResult",
    "FunctionalSpec",
    "GroundTruth",
    "InvalidArgumentError",
    "LgpSpec",
    "LikelihoodMatrix",
    "MixturePrior",
    "NumericError",
    "ObservationUnit",
    "PenaltyConfig",
    "PosteriorMixture",
    "SimulationConfig",
    "StateTransition",
    "StudySettings",
    "TestTable",
    "UnitDesign",
    "adjust_pi0",
    "adjust_se",
    "bf_adjust",
    "bf_moment_check",
    "build_posterior",
    "build_test_table",
    "builtin_functional",
    "collapse_bayes_factors",
    "collapse_log_bayes_factors",
    "default_diffuse_variance",
    "default_grid",
    "em_update",
    "fdr_curve",
    "fit_model",
    "fit_weights",
    "generate_dataset",
    "iwp_covariance",
    "lfdr",
    "lfsr_functional",
    "likelihood_matrix",
    "marginal_loglik",
    "marginal_loglik_dense",
    "null_posterior_weights",
    "posterior_weights",
    "psd",
    "psd_to_sigma",
    "read_long_csv",
    "run_calibration",
    "run_pi0_sweep",
    "sample_posterior",
    "sample_prior_paths",
    "smooth",
    "transition",
    "write_long_csv",
]
