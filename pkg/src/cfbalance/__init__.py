"""Individualized treatment effect estimation with covariate balancing weights."""

__version__ = "0.1.0"

from .balance import BalanceConfig, BalancingWeights, Norm, balance_report, solve_weights
from .data import ObservationalDataset, load_dataset, save_dataset, split_dataset
from .estimator import EstimatorConfig, IteModel, Method, estimate_ite, fit
from .evaluate import bound_diagnostics, pehe, replicate_experiment
from .regress import fit_anchored_ridge, fit_cv_elastic_net, fit_weighted_elastic_net
from .simulate import gen_complex_outcome, gen_ihdp_style, gen_linear_outcome

__all__ = [
    "BalanceConfig",
    "BalancingWeights",
    "EstimatorConfig",
    "IteModel",
    "Method",
    "Norm",
    "ObservationalDataset",
    "balance_report",
    "bound_diagnostics",
    "estimate_ite",
    "fit",
    "fit_anchored_ridge",
    "fit_cv_elastic_net",
    "fit_weighted_elastic_net",
    "gen_complex_outcome",
    "gen_ihdp_style",
    "gen_linear_outcome",
    "load_dataset",
    "pehe",
    "replicate_experiment",
    "save_dataset",
    "solve_weights",
    "split_dataset",
]
