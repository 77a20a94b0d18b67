"""Exception hierarchy shared by the library modules and the CLI."""

from typing import Optional


class AluSafeError(Exception):
    """Base class for every error raised by the library."""


class UsageError(AluSafeError):
    """Caller passed something of the wrong shape: arity, width, unknown name, bad flag."""


class DomainError(AluSafeError):
    """A value-level precondition does not hold."""


class ResourceLimitError(AluSafeError):
    """A configured budget was exceeded and no partial answer makes sense."""


class OperatorFileError(AluSafeError):
    """Malformed operator file."""

    def __init__(self, message: str, path: Optional[str] = None, location: Optional[str] = None) -> None:
        self.path = path
        self.location = location
        prefix = path or "<operator>"
        if location:
            prefix = f"{prefix}: {location}"
        super().__init__(f"{prefix}: {message}")


class FormulaSyntaxError(AluSafeError):
    """Formula text does not follow the s-expression grammar."""

    def __init__(self, message: str, position: int) -> None:
        self.position = position
        super().__init__(f"{message} (at position {position})")
