"""Bayesian marketing-mix modeling engine.

Learns per-channel carryover, saturation, and time-varying effectiveness from
spend/performance series, attributes outcomes to channels with uncertainty,
and optimizes budget allocation under constraints.
"""

__version__ = "0.1.0"

from .allocator import AllocationConstraints, AllocationResult, optimize_greedy, optimize_sqp
from .attribution import ContributionReport, contributions
from .core import ColumnSchema, Dataset, FunnelSegment, ScalePair, load_dataset, max_abs_scale
from .decomposition import Decomposition, decompose, detrend
from .evalkit import MetricReport, mape, mase, r2, sliding_window_cv
from .forecast import BudgetPlan, ScenarioResult, even_spread, predict
from .layer1 import AdstockPosterior, Layer1Config, compute_beta_prior, fit_layer1, log_posterior
from .layer2 import KnotGrid, KtrModel, Layer2Config, build_kernel, fit_layer2
from .pipeline import FitConfig, compare_models, fit
from .snapshot import ModelSnapshot, load_model, save_model
from .synthgen import GroundTruth, generate, paper_ground_truth
from .transforms import AdstockParams, adstock, carryover, reach

__all__ = [
    "__version__",
    "AdstockParams",
    "AdstockPosterior",
    "AllocationConstraints",
    "AllocationResult",
    "BudgetPlan",
    "ColumnSchema",
    "ContributionReport",
    "Dataset",
    "Decomposition",
    "FitConfig",
    "FunnelSegment",
    "GroundTruth",
    "KnotGrid",
    "KtrModel",
    "Layer1Config",
    "Layer2Config",
    "MetricReport",
    "ModelSnapshot",
    "ScalePair",
    "ScenarioResult",
    "adstock",
    "build_kernel",
    "carryover",
    "compare_models",
    "compute_beta_prior",
    "contributions",
    "decompose",
    "detrend",
    "even_spread",
    "fit",
    "fit_layer1",
    "fit_layer2",
    "generate",
    "load_dataset",
    "load_model",
    "log_posterior",
    "mape",
    "mase",
    "max_abs_scale",
    "optimize_greedy",
    "optimize_sqp",
    "paper_ground_truth",
    "predict",
    "r2",
    "reach",
    "save_model",
    "sliding_window_cv",
]
