"""Exception types shared across the package."""


class PatchwaveError(Exception):
    """Base class for all package-specific failures."""


class ParameterError(PatchwaveError, ValueError):
    """A constructor argument violates a documented constraint."""


class GeometryError(ParameterError):
    """Grid parameters describe an impossible geometry (e.g. overlapping patches)."""


class ContractError(PatchwaveError, ValueError):
    """An operation was called with inputs that break its contract."""


class NumericalConsistencyError(PatchwaveError, RuntimeError):
    """An internal numerical self-check failed (signals a bug, not bad input)."""


class NumericalError(PatchwaveError, RuntimeError):
    """An established numerical routine failed to converge or produced NaNs."""


class SimulationError(PatchwaveError, RuntimeError):
    """Time integration aborted (instability or NaN)."""
