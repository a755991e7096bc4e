"""Error hierarchy shared by the numerical modules."""


class PreconditionerError(Exception):
    """Base class for every error raised by the library."""


class InvalidArgumentError(PreconditionerError, ValueError):
    """A size, parameter or array length is out of range."""


class UnsupportedSpaceError(PreconditionerError, ValueError):
    """The element family or value rank cannot be used by this operation."""


class UnsupportedPairError(UnsupportedSpaceError):
    """A velocity/pressure pair is not one of the supported combinations."""


class MisalignedMeshError(PreconditionerError):
    """Domain facets on the interface do not match the interface mesh."""


class FactorizationError(PreconditionerError):
    """A direct factorization hit a (numerically) zero pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotPositiveDefiniteError(FactorizationError):
    """A Cholesky-type factorization met a non-positive pivot."""


class EigensolverError(PreconditionerError):
    """A symmetric eigensolve failed or did not converge."""
