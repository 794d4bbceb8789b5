"""Exception types shared across the package.

Every failure mode the library reports deliberately gets its own class so
callers (and the CLI exit-code mapping) can distinguish configuration
problems from numerical breakdowns from transport faults.
"""


class ScorePnpError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ScorePnpError, ValueError):
    """Shapes or dimensions of inputs are incompatible."""


class ParameterError(ScorePnpError, ValueError):
    """A scalar or structural parameter is out of its legal domain."""


class ConditionError(ScorePnpError, ValueError):
    """A conditioning input (time index, noise level tag) is invalid."""


class SigmaRangeError(ConditionError):
    """Requested noise level lies outside the achievable schedule range."""


class NumericsError(ScorePnpError, ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge."""


class TrainingError(ScorePnpError, RuntimeError):
    """Score-network training diverged or was misconfigured."""


class ConfigError(ScorePnpError, ValueError):
    """An experiment or solver configuration failed validation."""


class TransportError(ScorePnpError, ConnectionError):
    """The remote score server could not be reached or the channel broke."""


class ProtocolError(ScorePnpError, RuntimeError):
    """The remote score server spoke a different protocol version/contract."""
