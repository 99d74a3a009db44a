"""Exception types shared across the laboratory."""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LabError):
    """Invalid input data: particle censuses, grids, configs."""


class ConvergenceError(LabError):
    """A solver failed to converge or failed a cross-check."""


class NonSelfAdjointRisk(LabError):
    """Raised when an operator with no nuclear kinetic term is used as if it
    had a discrete spectrum.  Carries the status token reported by scans."""

    status = "NON_SELF_ADJOINT_RISK"
