"""Exception taxonomy shared across the toolkit.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies rather than bare ValueError when the
failure concerns user-supplied configuration, input data, or numerics.
"""


class DiffbankError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DiffbankError):
    """Invalid configuration: bad schema, out-of-range budgets, unknown names."""


class DataError(DiffbankError):
    """Invalid input data: malformed files, bad indices, non-finite values."""


class NumericalError(DiffbankError):
    """A numerical procedure failed: degenerate density, no convergence."""
