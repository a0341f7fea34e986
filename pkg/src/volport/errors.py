"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage problems exit 1,
data problems exit 2, numerical failures exit 3.
"""


class VolportError(Exception):
    """Base class for package-specific errors."""


class UsageError(VolportError):
    """Bad invocation: unknown flag, malformed config, inconsistent options."""


class DataError(VolportError):
    """Input data violates a contract: missing file, bad header, bad value."""


class NumericalError(VolportError):
    """A numerical procedure failed: degenerate likelihood, non-finite result."""
