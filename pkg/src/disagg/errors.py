"""Exception types shared across the package."""


class DisaggError(Exception):
    """Base class for all package errors."""


class ValidationError(DisaggError):
    """An input violates a documented precondition or invariant."""


class IllPosedFitError(DisaggError):
    """Least-squares fit has a rank-deficient regressor matrix."""

    def __init__(self, device_name: str, detail: str = ""):
        self.device_name = device_name
        msg = f"cannot fit device {device_name!r}: rank-deficient regressors"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class LibraryFormatError(DisaggError):
    """A library file failed to parse or validate.

    Carries enough context (field / device) to locate the problem.
    """

    def __init__(self, message: str, *, path=None, device=None, field=None):
        self.path = path
        self.device = device
        self.field = field
        ctx = []
        if path is not None:
            ctx.append(f"file {path}")
        if device is not None:
            ctx.append(f"device {device!r}")
        if field is not None:
            ctx.append(f"field {field!r}")
        if ctx:
            message = f"{message} [{', '.join(ctx)}]"
        super().__init__(message)


class EnumerationCapError(ValidationError):
    """Exhaustive search refused: horizon exceeds the hard cap."""
