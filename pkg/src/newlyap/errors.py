"""Exception hierarchy shared by all modules."""


class NewLyapError(Exception):
    """Base class for every error raised by the package."""


class DomainViolation(NewLyapError, ValueError):
    """A point lies outside the phase space it is claimed to belong to."""


class NotDifferentiable(NewLyapError):
    """An analytic derivative was requested where none exists."""


class DegenerateSeparation(NewLyapError, ValueError):
    """Two points are too close for a distance ratio to carry any signal."""


class EmptyCandidateSet(NewLyapError):
    """No perturbed point survived inside the dynamical ball."""


class NoHyperbolicity(NewLyapError):
    """The positive-exponent gate for the Oseledets splitting failed."""


class DiscOverlap(NewLyapError):
    """Disc placement produced intersecting discs or left the ambient domain."""


class BoundaryMismatch(NewLyapError):
    """A disc map does not fix the boundary circle pointwise."""


class BaseMapNotChaotic(NewLyapError):
    """The disc base map has a measured integrated exponent too close to zero."""


class ConfigError(NewLyapError, ValueError):
    """Invalid run configuration."""
