"""Exception hierarchy. The CLI maps each family to an exit code."""


class FotvalError(Exception):
    exit_code = 1


class ValidationError(FotvalError, ValueError):
    """An input violates a documented range or invariant."""

    exit_code = 2


class IngestionError(ValidationError):
    """A data file does not match its schema. Message names the location."""


class InsufficientDataError(ValidationError):
    pass


class DegenerateDataError(ValidationError):
    pass


class CoverageError(ValidationError):
    """A stratum with natural exposure was never driven, so bias cannot be undone."""


class PreconditionError(ValidationError):
    pass


class IntegrityError(FotvalError):
    """A stored factor trail no longer reproduces the stored rate."""

    exit_code = 2


class NumericalError(FotvalError, ArithmeticError):
    exit_code = 3


class ProtocolError(FotvalError, RuntimeError):
    """A test procedure was used in a way that voids its error guarantee."""

    exit_code = 4
