"""Exact closed-form Bayesian inference for balanced linear mixed models.

The posterior of (delta, 1/sigma^2, beta) under the conjugate prior is a
compound beta-gamma-normal law whose first stage is a four-parameter
generalized beta distribution. Everything downstream of that fact lives
here: the distribution kernels, the conjugate update, model evidence with
empirical-Bayes tuning, a closed-form frequentist comparator, numerical
verification of the general-model matrix identities, and the simulation
harness that compares the two approaches.
"""

from . import errors
from .balanced_model import (
    BalancedDataset,
    ModelParams,
    ParamSummary,
    PosteriorBGN,
    PosteriorSummary,
    PriorHyper,
    SufficientStats,
    delta_from_variances,
    marginal_log_likelihood,
    posterior,
    posterior_summaries,
    prior_log_pdf,
    suff_stats,
)
from .bgn import BGNParams, delta_marginal
from .evidence import EbConfig, empirical_bayes, evidence_identity_gap, log_evidence
from .freq_comparator import FreqFit, fit_freq
from .gbeta4 import G4BParams
from .general_identities import (
    GeneralDesign,
    GeneralStats,
    identity_report,
    verify_quadratic_decomposition,
)
from .numkernel import QuadratureSpec, RngStream, SpdMatrix, kernel_backend
from .simstudy import SimConfig, SimulationReport, gen_replicate, run_study

__version__ = "0.1.0"

__all__ = [
    "BGNParams",
    "BalancedDataset",
    "EbConfig",
    "FreqFit",
    "G4BParams",
    "GeneralDesign",
    "GeneralStats",
    "ModelParams",
    "ParamSummary",
    "PosteriorBGN",
    "PosteriorSummary",
    "PriorHyper",
    "QuadratureSpec",
    "RngStream",
    "SimConfig",
    "SimulationReport",
    "SpdMatrix",
    "SufficientStats",
    "__version__",
    "delta_from_variances",
    "delta_marginal",
    "empirical_bayes",
    "errors",
    "evidence_identity_gap",
    "fit_freq",
    "gen_replicate",
    "identity_report",
    "kernel_backend",
    "log_evidence",
    "marginal_log_likelihood",
    "posterior",
    "posterior_summaries",
    "prior_log_pdf",
    "run_study",
    "suff_stats",
    "verify_quadratic_decomposition",
]
