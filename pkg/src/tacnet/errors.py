"""Exception taxonomy shared by every tacnet module.

All library errors derive from :class:`TacnetError` so callers (and the CLI)
can catch one base class and map it to a nonzero exit code.
"""


class TacnetError(Exception):
    """Base class for all tacnet errors."""


class InvalidDimensionError(TacnetError):
    """Array shapes are incompatible with the requested operation."""


class DegenerateVectorError(TacnetError):
    """A vector that must be normalized has (near-)zero norm."""


class InvalidEpisodeError(TacnetError):
    """An episode violates a structural precondition (empty class, etc.)."""


class InvalidStateError(TacnetError):
    """A cached or accumulated state does not match its inputs."""


class NumericalFailureError(TacnetError):
    """An iterative numerical routine failed to converge or produced non-finite values."""


class InvalidDatasetError(TacnetError):
    """A dataset cannot support the requested split or sampling."""


class InvalidSpecError(TacnetError):
    """An episode or generator spec is infeasible for the given pools."""
