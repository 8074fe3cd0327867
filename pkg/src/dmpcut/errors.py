"""Exception types shared across the toolkit."""


class DmpcutError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(DmpcutError):
    """Invalid user-supplied parameter (mesh family, quadrature degree, exponent, ...)."""


class MeshFormatError(DmpcutError):
    """Malformed mesh or field file; message carries the offending line number."""


class MeshValidationError(DmpcutError):
    """Geometric or combinatorial mesh invariant violated."""


class DataError(DmpcutError):
    """User callback returned non-finite or mis-shaped data."""


class SignConditionError(DmpcutError):
    """Reaction coefficient < 0 or source density > 0 sampled at a quadrature point."""


class SolverError(DmpcutError):
    """Linear solver failed to reach the requested residual within the iteration cap."""


class ConvergenceError(DmpcutError):
    """Nonlinear iteration exceeded its cap; message carries the last energy gap."""


class PreconditionError(DmpcutError):
    """An operation's documented precondition does not hold for the given inputs."""


class CapacityError(DmpcutError):
    """Problem size exceeds a documented desk-scale cap."""


class UnsupportedFieldError(DmpcutError):
    """Operation does not support this field kind (e.g. vector input to a scalar cutoff)."""
