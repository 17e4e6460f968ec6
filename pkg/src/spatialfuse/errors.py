"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with an operation."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ConfigError(ValueError):
    """A configuration value is invalid or infeasible."""


class FormatError(ValueError):
    """A binary container does not conform to the on-disk format."""
