"""Exception classes shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
numerical failures exit 2, output/I-O failures exit 3.
"""


class ConfigurationError(ValueError):
    """Invalid grid, pulse, absorber, or run configuration."""


class NumericalError(RuntimeError):
    """Breakdown inside a solver (zero pivot, non-convergence, NaN)."""


class OutputError(OSError):
    """Failure writing or reading a result file; carries path context."""
