"""Exception hierarchy.

Each class maps to one CLI exit code (see :mod:`fracgreen.cli`).
"""

from __future__ import annotations


class FracGreenError(Exception):
    """Base class for all package errors."""


class ValidationError(FracGreenError, ValueError):
    """A problem datum violates a standing assumption.

    ``assumption`` names the violated hypothesis, e.g. ``"order"`` or
    ``"subcritical"``.
    """

    def __init__(self, assumption: str, message: str):
        super().__init__(f"[{assumption}] {message}")
        self.assumption = assumption


class SchemaError(ValidationError):
    """A JSON problem document does not match the schema."""

    def __init__(self, pointer: str, message: str):
        super().__init__("schema", f"{pointer or '/'}: {message}")
        self.pointer = pointer


class AssemblyError(FracGreenError):
    pass


class GridMismatchError(FracGreenError, ValueError):
    pass


class KernelSingularityError(FracGreenError, ValueError):
    pass


class WrongOperatorError(FracGreenError, ValueError):
    pass


class InconsistencyError(FracGreenError):
    """Two independent evaluation routes disagree beyond tolerance."""


class NoRootError(FracGreenError):
    """The smallness function has no positive root.

    ``c_max`` is the largest growth coefficient for which a root exists,
    or ``None`` if it was not computed.
    """

    def __init__(self, message: str, c_max: float | None = None):
        super().__init__(message)
        self.c_max = c_max


class NonConvergenceError(FracGreenError):
    pass


class BallEscapeError(NonConvergenceError):
    """An iterate left the gradient ball certified by ``lambda_star``."""


class DivergingSequenceError(NonConvergenceError):
    pass
