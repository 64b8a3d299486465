"""Semiparametric Bayesian detection of synchrony among spiking neurons."""

from .copula import (
    CopulaLikelihood,
    MultiFitResult,
    beta_from_zeta,
    copula_loglik,
    copula_loglik_grad_beta,
    fgm_binary_pmf,
    fgm_cdf,
    fgm_pmf_table,
    fit_multi,
    pair_indices,
    zeta_from_beta,
)
from .data import (
    Ensemble,
    EventTimesRecord,
    SpikeTrainSet,
    as_ensemble,
    discretize,
    jpsth,
    load_ensemble,
    psth,
    save_ensemble,
)
from .errors import NumericalError, ValidationError
from .estimators import CopulaSynchronyEstimator, LatentRateEstimator, PairSynchronyEstimator
from .gp import (
    CovFactor,
    GPHyperParams,
    bernoulli_loglik,
    bernoulli_loglik_grad,
    build_covariance,
    gp_logpdf,
    hyperprior_logdensity,
    logistic_rate,
    sample_gp_prior,
)
from .pairwise import (
    PairFitResult,
    PairLikelihood,
    fit_pair,
    joint_table,
    pair_loglik_at_lag,
    synchrony_decision,
    zeta_bounds,
    zeta_support,
)
from .samplers import (
    ChainOutput,
    EssState,
    SamplerConfig,
    SingleNeuronFit,
    ball_to_sphere,
    equal_tailed_interval,
    ess_step,
    fit_single,
    gibbs_sweep,
    l1_ball_to_l2,
    l2_ball_to_l1,
    make_l1_ball_target,
    slice_step,
    slice_step_bounded,
    sphere_to_ball,
    spherical_hmc_step,
)
from .simulate import (
    ExperimentReport,
    PowerSpec,
    RateSpec,
    ScenarioSpec,
    power_experiment,
    preset,
    sensitivity_experiment,
    sensitivity_noise,
    simulate,
    simulate_copula,
    simulate_pair,
    simulate_regression_pair,
    simulate_single,
)

__version__ = "0.1.0"
