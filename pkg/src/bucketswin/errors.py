"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration, parsing, range and
numeric errors are usage problems (exit 2); integrity errors mean a
pipeline invariant was violated at runtime (exit 3).
"""


class ConfigError(ValueError):
    """A parameter or configuration value is out of contract."""


class ParseError(ValueError):
    """An input file could not be parsed; message carries the line number."""


class EmptyInputError(ValueError):
    """An operation received zero points where at least one is required."""


class RangeError(ValueError):
    """A coordinate component is outside the representable range."""


class NumericError(ValueError):
    """Non-finite values reached a numeric kernel."""


class IntegrityError(RuntimeError):
    """A structural invariant (bijection, capacity, partition) failed."""
