"""Exception hierarchy shared by every module of the package."""


class MrqError(Exception):
    """Base class for all errors raised by mrq."""


class ParseError(MrqError):
    """A dataset file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(MrqError):
    """The dataset layout does not match what was requested."""


class SplitError(MrqError):
    """A resampling scheme would produce an empty side or is degenerate."""


class ParameterError(MrqError, ValueError):
    """An argument is outside its valid range."""


class EmptyInputError(MrqError, ValueError):
    """An operation received zero rows."""


class MetricError(MrqError):
    """A metric is undefined on the given data."""


class ModelFormatError(MrqError):
    """Base class for model-file loading errors."""


class VersionError(ModelFormatError):
    """Unknown or corrupted model-file header."""


class TruncationError(ModelFormatError):
    """The model file ends before its checksum line."""


class IntegrityError(ModelFormatError):
    """The model file's checksum does not match its contents."""
