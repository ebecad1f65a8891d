"""Exception types raised by the library."""


class TetheredFollowerError(Exception):
    """Base class for all library errors."""


class SingularConfiguration(TetheredFollowerError):
    """Raised when the two cables are (nearly) collinear.

    Cable tension and the reduced input map both scale with
    ``sin(phi_0 - phi_1)``; below the guard threshold they are undefined.
    """


class NonFinite(TetheredFollowerError):
    """Raised when a state, covariance or derivative leaves the reals."""


class InvalidRange(TetheredFollowerError):
    """Raised when an argument is outside the domain where a formula holds."""


class NoConvergence(TetheredFollowerError):
    """Raised when an iterative solver exhausts its iteration budget."""


class EmptyWindow(TetheredFollowerError):
    """Raised when a metrics window contains no samples."""


class ConfigError(TetheredFollowerError):
    """Raised for unparsable or invalid run configuration values.

    The message starts with the dotted field path, e.g. ``params.m``.
    """
