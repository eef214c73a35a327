"""Batch design of combinatorial sequence libraries by constraint-set optimization."""

from .campaign import CampaignConfig, run_campaign
from .constraint_space import ConstraintSet, GroundSet, library_size
from .ds_decompose import decompose
from .ds_optimize import OptimizerConfig, dsopt, optimize
from .gp_model import GpHyperparameters, compute_rewards, fit_hyperparameters, fit_posterior
from .objective import ObjectiveContext, mc_objective, surrogate_objective

__all__ = [
    "CampaignConfig",
    "ConstraintSet",
    "GpHyperparameters",
    "GroundSet",
    "ObjectiveContext",
    "OptimizerConfig",
    "compute_rewards",
    "decompose",
    "dsopt",
    "fit_hyperparameters",
    "fit_posterior",
    "library_size",
    "mc_objective",
    "optimize",
    "run_campaign",
    "surrogate_objective",
]
__version__ = "0.1.0"
