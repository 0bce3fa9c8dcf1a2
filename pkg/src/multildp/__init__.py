"""Local differential privacy for multidimensional numeric and categorical data.

Mechanisms for single values (Laplace, Duchi et al., Piecewise, Hybrid,
staircase-shaped noise), a multidimensional collector with attribute
sampling, unbiased aggregation, private SGD and an experiment harness.
"""

from .core import (AttributeSpec, ConfigError, DomainError, PrivacyBudget, RandomSource, Schema,
                   UserTuple, make_rng)
from .mech1d import perturb_1d, variance_1d, worst_case_variance_1d
from .mechmulti import collect, duchi_multi, perturb_numeric_multi, perturb_record
from .aggregate import Accumulator, compare_worst_case, variance_multi
from .sgd import Model, SgdConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Accumulator", "AttributeSpec", "ConfigError", "DomainError", "Model", "PrivacyBudget",
    "RandomSource", "Schema", "SgdConfig", "UserTuple", "collect", "compare_worst_case",
    "duchi_multi", "evaluate", "make_rng", "perturb_1d", "perturb_numeric_multi",
    "perturb_record", "train", "variance_1d", "variance_multi", "worst_case_variance_1d",
]
