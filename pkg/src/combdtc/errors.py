"""Exception hierarchy shared by all modules."""


class CombDtcError(Exception):
    """Base class for library errors."""


class ShapeError(CombDtcError, ValueError):
    """Tensor extents do not match the requested operation."""


class ContractError(CombDtcError, ValueError):
    """A documented precondition of an operation was violated."""


class InvalidParameter(CombDtcError, ValueError):
    """A model or run parameter is out of its allowed range."""


class ResourceGuardError(CombDtcError, RuntimeError):
    """The requested simulation exceeds a dimension or memory guard."""


class NumericalFailure(CombDtcError, ArithmeticError):
    """Norm drift exceeded the accumulated truncation budget."""


class ConfigError(CombDtcError, ValueError):
    """Invalid experiment configuration.

    Parameters
    ----------
    message : str
        Human readable diagnostic.
    line : int, optional
        1-based line number in the configuration text.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
