"""
Errors

- One base class for everything the solvers raise on bad input
- Subclasses of ValueError so callers can catch the standard type
"""


class PcptError(ValueError):
    """Base error for the solver library."""


class MeshError(PcptError):
    pass


class InterpolationError(PcptError):
    pass


class DiscretizationError(PcptError):
    pass


class ConfigError(PcptError):
    pass
