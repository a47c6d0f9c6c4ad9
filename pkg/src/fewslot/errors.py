"""Exception hierarchy shared across the library."""


class FewslotError(Exception):
    """Base class for all library errors."""


class DimensionError(FewslotError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(FewslotError):
    """A documented precondition was violated by the caller."""


class CapacityError(FewslotError):
    """A collection cannot supply the requested episode geometry."""


class NumericError(FewslotError):
    """A computation produced or would produce non-finite values."""


class CollectionFormatError(FewslotError):
    """A collection or manifest file failed to parse.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(FewslotError):
    """A collection violates its invariants."""


class AmbiguityError(FewslotError):
    """A slot label is claimed by more than one domain."""
