"""Exception hierarchy shared by every module in the package.

All errors raised on purpose derive from :class:`FsdcError`, so callers (and
the command line front end) can catch one type and report the message.  Plain
``OSError`` from the filesystem is deliberately left alone.
"""


class FsdcError(Exception):
    """Base class for every error this package raises intentionally."""


class SpecError(FsdcError, ValueError):
    """A configuration or parameter value is invalid (bad k, dim, counts...)."""


class FormatError(FsdcError):
    """A file does not conform to its on-disk format (magic, version, layout)."""


class DimensionError(FsdcError):
    """Shapes or dimensionalities disagree."""


class DataError(FsdcError):
    """Values are outside the domain (non-finite, negative where forbidden)."""


class EmptyClassError(FsdcError):
    """A per-class operation received zero samples."""


class InsufficientSamplesError(FsdcError):
    """An operation needs more samples than a class can provide."""


class MissingClassError(FsdcError):
    """A referenced class id is absent from the dataset or statistics table."""


class UndefinedStatisticError(FsdcError):
    """A statistic has no defined value (zero variance, zero-norm vector)."""


class FactorizationError(FsdcError):
    """A covariance could not be Cholesky-factorized even after jitter."""


class DivergenceError(FsdcError):
    """Training produced a non-finite loss or gradient."""


class EpisodeError(FsdcError):
    """An episode specification cannot be satisfied by the dataset."""
