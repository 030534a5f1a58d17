"""Bayesian Gaussian copula factor models for mixed continuous, ordinal and binary data."""

from .data import (
    EmpiricalCdf,
    MarginKind,
    MarginSpec,
    MixedDataMatrix,
    TieGroups,
    build_tie_groups,
    empirical_cdf,
    empirical_cdfs,
    pseudo_inverse_cdf,
)
from .errors import InputError, NumericalError
from .gibbs import (
    ChainState,
    Identification,
    McmcConfig,
    PosteriorDraws,
    effective_sample_size,
    init_state,
    run_chain,
    sweep,
)
from .posterior import (
    conditional_predictive,
    correlation_from_loadings,
    hpd_interval,
    kendall_tau,
    marginal_independence_test,
    precision_woodbury,
    sample_predictive,
    scale_loadings,
    summarize,
)
from .stochastic import GdpParams, NormalPrior, make_rng, parse_prior
from .baselines import gaussian_fm_sampler, parametric_fm_sampler, probit_fm_sampler
from .simulation import (
    LossReport,
    SyntheticSpec,
    conditional_dependence_demo,
    efficiency_study,
    generate_synthetic,
    loss_suite,
    misspecification_study,
)
from .io import ingest_csv, load_perisk, read_archive, write_archive

__version__ = "0.1.0"
