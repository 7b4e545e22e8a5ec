"""Exception types shared across the toolkit."""


class CatnmtError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(CatnmtError, ValueError):
    """Operand shapes or ranks are incompatible with an operation."""


class EmptyInputError(CatnmtError, ValueError):
    """An operation received no usable data (empty corpus, all-masked batch, ...)."""


class ConfigError(CatnmtError, ValueError):
    """A configuration is internally inconsistent or violates a constraint."""


class DegenerateDistributionError(CatnmtError, ValueError):
    """A softmax slice had every entry masked, so no distribution exists."""


class UnsupportedArchitectureError(CatnmtError, ValueError):
    """The requested operation is not defined for this architecture variant."""


class DivergenceError(CatnmtError, RuntimeError):
    """Training produced a non-finite loss."""


class UndefinedCorrelationError(CatnmtError, ValueError):
    """A correlation is undefined because one input sequence is constant."""


class DataError(CatnmtError, ValueError):
    """An input file is missing, malformed, or inconsistent."""
