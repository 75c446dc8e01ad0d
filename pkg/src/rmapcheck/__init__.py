"""Numerical geometry of maps between chart-defined Riemannian manifolds.

Evaluates curvature, soliton and harmonicity identities at sampled points
using exact truncated-Taylor (jet) differentiation of chart expressions.
"""

from .errors import (
    EmptyDistributionError,
    EvalDomainError,
    ExprSyntaxError,
    ExtensionRequiredError,
    NotPositiveDefiniteError,
    NotSpaceFormError,
    OrderExceededError,
    OrderTooLargeError,
    RankUnstableError,
    SchemaError,
    UnknownIdentifierError,
    UnknownSceneError,
)
from .expr import Expression, parse_expression, render
from .jets import Jet, derivative_coefficient, eval_jet

__version__ = "0.1.0"

__all__ = [
    "Expression",
    "Jet",
    "parse_expression",
    "render",
    "eval_jet",
    "derivative_coefficient",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "EvalDomainError",
    "OrderTooLargeError",
    "OrderExceededError",
    "NotPositiveDefiniteError",
    "RankUnstableError",
    "ExtensionRequiredError",
    "EmptyDistributionError",
    "NotSpaceFormError",
    "SchemaError",
    "UnknownSceneError",
    "__version__",
]
