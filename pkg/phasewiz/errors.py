"""Exceptions raised by phasewiz operations."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from typing import Iterable, Sequence


class PhaseWizError(Exception):
    """Base class for every error raised on purpose by phasewiz."""


class DomainError(PhaseWizError, ValueError):
    """An argument lies outside the domain of an operation."""


class GridError(DomainError):
    """A grid is malformed, or a stencil/cube does not fit in it."""


class StepSizeError(DomainError):
    """An integration step is too large for the requested table."""


class AdmissibilityError(DomainError):
    """A user supplied function violates its admissibility condition."""

    def __init__(self, message: str, points: Sequence[float] = ()) -> None:
        self.points = list(points)
        if self.points:
            shown = ", ".join(f"{p:.6g}" for p in self.points[:8])
            more = "" if len(self.points) <= 8 else f" (+{len(self.points) - 8} more)"
            message = f"{message}; violating points: {shown}{more}"
        super().__init__(message)


class ManifestError(DomainError):
    """A manifest failed validation. Holds every issue found."""

    def __init__(self, issues: Iterable[str]) -> None:
        self.issues = list(issues)
        super().__init__("\n".join(self.issues))


class HypothesisError(PhaseWizError):
    """A potential violates a clause of the double-well hypotheses."""

    def __init__(self, clause: str, points: Sequence[float] = ()) -> None:
        self.clause = clause
        self.points = list(points)
        shown = ", ".join(f"{p:.6g}" for p in self.points[:8])
        super().__init__(f"clause '{clause}' fails at u = [{shown}]")


class QuadratureError(PhaseWizError):
    """The profile quadrature cannot be carried out."""


class EmptyRegionError(PhaseWizError):
    """A band, ball or region selects no grid nodes."""


class LevelNotCrossedError(PhaseWizError):
    """The requested level is not crossed by the field."""


class MissingLevelSetError(LevelNotCrossedError):
    """A level set needed for a distance computation is absent."""


class RadiusGuardError(PhaseWizError):
    """A ball is too large for a locally minimizing weight."""


class UndefinedDensityError(PhaseWizError):
    """A density cannot be evaluated at a facet."""


class SchemaMismatchError(PhaseWizError):
    """A report and a baseline do not share the same columns."""
