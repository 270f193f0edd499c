"""Semi-supervised logistic learning with exponential tilt mixture models."""

from .baselines import ClassifierCoefficients, fit_entropy_reg, fit_ridge_logistic, fit_soft_cem
from .data import (
    FitResult,
    LabeledSample,
    ModelParams,
    PenaltyConfig,
    Responsibilities,
    SemiDataset,
    Standardizer,
    fit_standardizer,
    load_csv,
    split_train_test,
)
from .em import EmConfig, fit_dslr, fit_pslr
from .evaluation import CvGrid, CvReport, accuracy, auc, binomial_deviance, cross_validate, default_grids
from .objectives import direct_objective, kappa, profile_objective, slr_probs, solve_alpha_hat
from .simulate import EtmSpec, mc_consistency, mc_efficiency, sample_etm, sample_gaussian_illustration

__version__ = "0.1.0"
