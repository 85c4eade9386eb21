"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FluidsError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameters(FluidsError, ValueError):
    pass


class FamilyNotStressExplicit(FluidsError):
    """The model cannot be evaluated as S = S(D); use rate_of_stress or graph_residual."""


class FamilyNotExplicit(FluidsError):
    """A boundary graph is multivalued in the requested direction."""


class NotInvertible(FluidsError):
    """The requested branch of a graph is multivalued or empty at the input."""


class NoConvergence(FluidsError):
    def __init__(self, message: str, *, stage: int | None = None, iters: int | None = None,
                 step: int | None = None, partial=None):
        super().__init__(message)
        self.stage = stage
        self.iters = iters
        self.step = step
        self.partial = partial


class SingularJacobian(FluidsError):
    def __init__(self, message: str, *, degenerate_mask=None, stage: int | None = None,
                 step: int | None = None, partial=None):
        super().__init__(message)
        self.degenerate_mask = degenerate_mask
        self.stage = stage
        self.step = step
        self.partial = partial


class DegenerateC(FluidsError):
    pass


class UnsupportedFluid(FluidsError):
    pass


class DomainMismatch(FluidsError):
    pass


class FamilyNotSampleable(FluidsError):
    pass


class InvalidAxis(FluidsError):
    pass
