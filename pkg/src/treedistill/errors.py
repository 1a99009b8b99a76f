"""Exception types shared across the toolkit.

The CLI maps these onto exit codes (data problems vs. numerical failures),
so library code should raise the most specific type that applies.
"""


class TreedistillError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TreedistillError):
    """Invalid pipeline configuration or command usage."""


class DataError(TreedistillError):
    """Malformed or inconsistent input data (files, shapes, labels)."""


class NumericalError(TreedistillError):
    """Training or evaluation produced non-finite or degenerate numbers."""
