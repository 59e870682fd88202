"""Learned Bregman divergences: a convex generating function made of Softplus
units, trained jointly with an encoder and classifier, used as a kNN distance."""

from .errors import (BregmanMetricError, ConfigError, ConvexityError, DegenerateInputError,
                     DimensionError, NumericError, ParseError)
from .phi import GnmPhi, bregman_div, pairwise_divergence, phi_grad, phi_value
from .trainer import BregmanModel, TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "BregmanMetricError", "ConfigError", "ConvexityError", "DegenerateInputError",
    "DimensionError", "NumericError", "ParseError",
    "GnmPhi", "bregman_div", "pairwise_divergence", "phi_grad", "phi_value",
    "BregmanModel", "TrainConfig", "fit",
]
