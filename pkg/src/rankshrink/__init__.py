"""Bayesian low-rank matrix and tensor completion with shrinkage priors."""

__version__ = "0.1.0"

from .engine import ChainConfig, PosteriorEstimate
from .priors import ColumnStats, PriorSpec, PriorState
from .store import ObservedTensor, build, coverage_check, holdout_split, slice_index

__all__ = [
    "ChainConfig",
    "ColumnStats",
    "ObservedTensor",
    "PosteriorEstimate",
    "PriorSpec",
    "PriorState",
    "build",
    "coverage_check",
    "holdout_split",
    "slice_index",
    "__version__",
]
