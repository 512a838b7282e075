"""Exception taxonomy shared by all modules."""

from __future__ import annotations


class DynamicsError(Exception):
    """Base class for all package-specific failures."""


class DomainError(DynamicsError):
    """A point, interval, or parameter lies outside its valid domain."""


class ConfigurationError(DynamicsError):
    """An option is unsupported or outside its documented range."""


class PrecisionError(DynamicsError):
    """Requested certainty could not be reached within the precision budget.

    ``partial`` optionally carries the longest certified result (an orbit
    prefix, a partially refined bracket, ...).
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class NotMultimodalError(DynamicsError):
    """The map has no interior critical point."""


class MapInvariantError(DynamicsError):
    """A structural invariant of a map definition is violated."""


class GeometryError(DynamicsError):
    """A probe's geometry is inconsistent (grid touches another critical
    point, interval leaves the domain, ...)."""


class CapacityError(DynamicsError):
    """A component tree exceeded its configured size cap.

    ``partial`` carries the tree built so far.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientDataError(DynamicsError):
    """Too few usable samples to run a fit."""


class HypothesisError(DynamicsError):
    """A verified precondition of a distortion/chain construction fails."""


class StructureError(DynamicsError):
    """Two maps are structurally incompatible (critical counts, ...)."""


class ConjugacyMismatchError(StructureError):
    """Itineraries or preimage addresses of two maps disagree.

    ``witness`` holds the offending address word, ``depth`` the level at
    which the disagreement was found.
    """

    def __init__(self, message: str, witness=None, depth: int | None = None):
        super().__init__(message)
        self.witness = witness
        self.depth = depth


class ConfigError(DynamicsError):
    """An experiment configuration failed validation.

    ``field_path`` names the offending entry, e.g. ``tasks[2].map``.
    """

    def __init__(self, message: str, field_path: str | None = None):
        super().__init__(message)
        self.field_path = field_path
