"""Exception types shared across the package."""


class EdgeKdError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(EdgeKdError, ValueError):
    """Array shapes do not agree; the message names both shapes."""


class ParameterError(EdgeKdError, ValueError):
    """A scalar argument is outside its allowed range."""


class ContractError(EdgeKdError, ValueError):
    """An input or intermediate value violates a documented precondition."""


class ConfigError(EdgeKdError, ValueError):
    """Invalid configuration; ``field`` holds the offending key path."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


class FormatError(EdgeKdError, ValueError):
    """Malformed serialized payload; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset
