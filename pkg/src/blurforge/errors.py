"""Exception types shared by all modules, mapped to CLI exit codes."""


class ArgumentError(ValueError):
    """Caller violated a precondition (bad shape, range, or option). Exit code 1."""


class FormatError(ValueError):
    """A file failed to parse. Carries the byte offset of the failure. Exit code 2."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(message)


class NumericalError(RuntimeError):
    """An optimization produced a non-finite value. Exit code 3."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
