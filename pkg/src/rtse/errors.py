"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see ``rtse.cli``).
"""


class RtseError(Exception):
    exit_code = 1


class ConfigError(RtseError, ValueError):
    """Invalid configuration value or unknown config key."""

    exit_code = 1


class ContractError(RtseError, ValueError):
    """An argument violates a documented precondition (range, sign, shape)."""

    exit_code = 1


class FrameSizeError(ContractError):
    pass


class StateError(ContractError):
    """Streaming state does not belong to the given configuration."""


class UninitializedStatsError(RtseError, RuntimeError):
    exit_code = 1


class DataError(RtseError):
    """Unreadable, malformed or unusable audio/data on disk."""

    exit_code = 2


class NumericError(RtseError, FloatingPointError):
    """Non-finite loss or gradient during training."""

    exit_code = 3
