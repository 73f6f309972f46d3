"""Exception hierarchy shared by every stage of the pipeline."""


class BaselineCEAError(Exception):
    """Base class for all package errors."""


class ParseError(BaselineCEAError):
    """A data or config file could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ValidationError(BaselineCEAError):
    """Parsed values violate a domain constraint."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigurationError(BaselineCEAError):
    """An analysis or model configuration is invalid."""


class InsufficientDataError(BaselineCEAError):
    """Too few cases to fit or summarise."""


class NumericalError(BaselineCEAError):
    """A numerical routine failed (non-finite values, singular systems)."""

    def __init__(self, message, block=None):
        self.block = block
        if block is not None:
            message = f"[{block}] {message}"
        super().__init__(message)
