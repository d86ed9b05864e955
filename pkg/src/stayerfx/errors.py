"""Exception taxonomy shared across the package.

The split mirrors the command-line exit codes: configuration problems,
unusable input data, and numerical failures are distinct so callers can
react differently to each.
"""


class StayerfxError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(StayerfxError):
    """Invalid or inconsistent configuration (bad options, mismatched fits)."""


class DataError(StayerfxError):
    """Input data cannot be used (malformed file, too few units, ...)."""


class NumericalError(StayerfxError):
    """A numerical routine failed (solver did not converge, singular system)."""
