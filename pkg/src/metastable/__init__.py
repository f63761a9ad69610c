"""Metastability hierarchy and large-deviation expansion for exponentially scaled Markov chains."""
from .errors import (AmbiguityError, CapacityError, ConditioningError, ConvergenceError,
                     DomainError, MetastabilityError, MisidentifiedScaleError, ModelError,
                     PrecisionError, SpecParseError, UnsupportedOperationError)
from .scale_algebra import ZERO, AsymScalar, RateSpec
from .finite_chain import Distribution, FiniteChain, instantiate
from .hierarchy import MetastableTree, Tolerances, build_tree, limit_chain
from .gamma_expansion import RateExpansion
from .models import fig1_spec, landscape_spec, random_reversible_spec

__version__ = "0.1.0"
