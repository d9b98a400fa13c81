"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 1,
``ConvergenceError`` -> 2, ``GuardError`` -> 3.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent input parameters."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


class GuardError(ValueError):
    """A desk-scale size guard (enumeration, codebook size, ...) was exceeded."""
