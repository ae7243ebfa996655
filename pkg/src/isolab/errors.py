"""Exception hierarchy shared by all isolab modules."""


class IsolabError(Exception):
    """Base class for every error raised by the library."""


class ParseError(IsolabError, ValueError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class DomainError(IsolabError, ValueError):
    """An input lies outside the region where an operation is defined."""


class ConvergenceError(IsolabError, ArithmeticError):
    def __init__(self, message, achieved=None):
        if achieved is not None:
            message = f"{message} (achieved {achieved:.3e})"
        super().__init__(message)
        self.achieved = achieved


class ConfigError(IsolabError):
    """Invalid command-line or config-file input."""
