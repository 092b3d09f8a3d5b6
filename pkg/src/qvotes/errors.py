"""Exception hierarchy shared across the package.

The split between :class:`DataError` and :class:`ConfigError` mirrors the
CLI exit-code contract: input/validation problems exit with 1,
configuration problems with 2.
"""


class QvotesError(Exception):
    """Base class for all qvotes errors."""


class DataError(QvotesError):
    """Invalid, malformed, or insufficient input data."""


class DegenerateDataError(DataError):
    """A statistic is mathematically undefined for the given input
    (e.g. rank correlation of a constant vector)."""


class ConfigError(QvotesError):
    """Invalid configuration: bad sweep values, unknown metric names,
    inconsistent flags."""
