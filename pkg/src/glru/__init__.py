"""Certified low-rank-update bounds for regularized empirical risk models.

Train once, then bound the retrained optimum after removing or adding
instances or features, without retraining: a duality-gap certificate of the
old solution on the modified problem yields norm balls and coordinate boxes
for the new primal and dual optima, and interval bounds for predictions.
The workflows module applies these to leave-one-out cross-validation and
backward feature elimination with exact agreement to the naive loops.
"""

from .convex import Interval, LossSpec, RegSpec
from .data import Dataset, ModificationSpec, load_libsvm, normalize
from .erm import PrecomputeCache, TrainedModel, duality_gap, train
from .errors import (
    AssumptionError,
    ConfigError,
    ConvergenceError,
    GlruError,
    NormalizationError,
    ParseError,
    SpecializationError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "Interval",
    "LossSpec",
    "RegSpec",
    "Dataset",
    "ModificationSpec",
    "load_libsvm",
    "normalize",
    "PrecomputeCache",
    "TrainedModel",
    "duality_gap",
    "train",
    "GlruError",
    "ParseError",
    "ValidationError",
    "NormalizationError",
    "AssumptionError",
    "SpecializationError",
    "ConfigError",
    "ConvergenceError",
    "__version__",
]
