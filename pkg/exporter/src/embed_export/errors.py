"""Exporter exception types."""


class ExportError(Exception):
    """Base class for exporter errors."""


class SetupError(ExportError):
    """A required pretrained model or resource is missing or unusable."""


class BioFormatError(ExportError):
    """A BIO corpus file is malformed.

    Carries the source file and 1-based line number when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


class AmbiguityError(ExportError):
    """A slot label is claimed by more than one domain."""
