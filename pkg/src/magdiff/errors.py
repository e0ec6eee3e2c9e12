"""Error types shared across the package.

Keeping these in one place lets the HTTP service map each failure class
to a status code without matching on message strings.
"""


class MagdiffError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(MagdiffError, ValueError):
    """An array's dimensions do not match what the operation requires."""


class InputError(MagdiffError, ValueError):
    """A value (dataset, label, argument) is unusable."""


class ConfigError(MagdiffError, ValueError):
    """A configuration value or combination of values is invalid."""


class ParseError(MagdiffError, ValueError):
    """A file's bytes do not conform to the expected format."""
