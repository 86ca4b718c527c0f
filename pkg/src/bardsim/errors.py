"""Exception types raised by the simulator."""
from __future__ import annotations


class BardSimError(Exception):
    pass


class ConfigError(BardSimError):
    """Invalid or inconsistent configuration.

    ``key`` names the offending JSON key when known, so loaders can point at
    the line where it appears.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ParameterError(BardSimError, ValueError):
    pass


class TemporalOrderError(BardSimError):
    """A stateful process was queried at a time earlier than its last update."""


class DuplicateTransmissionError(BardSimError):
    pass


class EncodingError(BardSimError, KeyError):
    pass


class NumericError(BardSimError, ArithmeticError):
    pass
