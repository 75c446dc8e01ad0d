"""Exception types shared across the package."""


class RmapError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(RmapError):
    """Malformed expression source.

    Carries the character position and a description of what was expected.
    """

    def __init__(self, message, position, expected=None):
        self.position = position
        self.expected = expected
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class UnknownIdentifierError(RmapError):
    """Identifier not declared in the enclosing scope."""

    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")


class EvalDomainError(RmapError):
    """A function was evaluated outside its domain (log, sqrt, division, power)."""

    def __init__(self, function, value=None):
        self.function = function
        self.value = value
        detail = f"domain error in '{function}'"
        if value is not None:
            detail += f" (argument value {value})"
        super().__init__(detail)


class OrderTooLargeError(RmapError):
    """Requested jet order exceeds the configured cap."""

    def __init__(self, order, cap):
        self.order = order
        self.cap = cap
        super().__init__(f"jet order {order} exceeds cap {cap}")


class OrderExceededError(RmapError):
    """Requested a derivative beyond the order stored in a jet."""

    def __init__(self, requested, available):
        self.requested = requested
        self.available = available
        super().__init__(
            f"derivative of total degree {requested} not stored (jet order {available})"
        )


class NotPositiveDefiniteError(RmapError):
    """Metric failed the positive-definiteness check at a point."""

    def __init__(self, point, eigenvalues):
        self.point = point
        self.eigenvalues = eigenvalues
        super().__init__(
            f"metric not positive definite at {tuple(point)}: eigenvalues {list(eigenvalues)}"
        )


class RankUnstableError(RmapError):
    """A singular value sits inside the ambiguity band around rank_tol."""

    def __init__(self, singular_values, rank_tol):
        self.singular_values = singular_values
        self.rank_tol = rank_tol
        super().__init__(
            f"rank ambiguous: singular values {list(singular_values)} near tolerance {rank_tol}"
        )


class ExtensionRequiredError(RmapError):
    """The requested derivative needs ambient extension fields the scene does not declare."""


class EmptyDistributionError(RmapError):
    """A check was requested on a zero-dimensional distribution."""


class NotSpaceFormError(RmapError):
    """Target curvature does not match the declared constant-curvature model."""

    def __init__(self, c, residual):
        self.c = c
        self.residual = residual
        super().__init__(
            f"curvature deviates from constant-curvature model c={c} by {residual}"
        )


class SchemaError(RmapError):
    """Scene file is structurally invalid."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class UnknownSceneError(RmapError):
    """Requested built-in scene name does not exist."""


# Non-fatal condition markers attached to check results.
FLAG_ASSUMPTION_VIOLATED = "assumption-violated"
FLAG_HYPOTHESIS_UNMET = "hypothesis-unmet"
FLAG_DEGENERATE_FIT = "degenerate-fit"
FLAG_DIMENSION_DEGENERATE = "dimension-degenerate"
