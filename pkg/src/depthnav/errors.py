"""Exception hierarchy shared across the package."""


class DepthNavError(Exception):
    """Base class for every error raised by depthnav."""


# depth pipeline
class PipelineError(DepthNavError):
    pass


class NonIntegerFactorError(PipelineError):
    pass


class RatioTooLargeError(PipelineError):
    pass


class EmptyFieldError(PipelineError):
    pass


class OutOfRangeValueError(PipelineError):
    pass


# array store
class ArrayStoreError(DepthNavError):
    pass


class HeaderTooLongError(ArrayStoreError):
    pass


class BadMagicError(ArrayStoreError):
    pass


class UnsupportedDtypeError(ArrayStoreError):
    pass


class UnsupportedShapeError(ArrayStoreError):
    pass


class FortranOrderUnsupportedError(ArrayStoreError):
    pass


class TruncatedPayloadError(ArrayStoreError):
    pass


class DuplicateEntryError(ArrayStoreError):
    pass


class MissingEntryError(ArrayStoreError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class NotAZipError(ArrayStoreError):
    pass


class EntryError(ArrayStoreError):
    """An NPY error inside an NPZ member; ``entry`` names the member."""

    def __init__(self, entry: str, cause: Exception):
        super().__init__(f"entry {entry!r}: {cause}")
        self.entry = entry
        self.cause = cause


# model clients
class ClientError(DepthNavError):
    pass


class BackendUnreachableError(ClientError):
    """Transport failure or non-200 status. Retryable."""


class MissingReplayFileError(ClientError):
    pass


class ShapeMismatchError(ClientError):
    pass


class MalformedResponseError(ClientError):
    pass


class UnrecognizedActionError(ClientError):
    def __init__(self, raw: str):
        super().__init__(f"unrecognized action: {raw!r}")
        self.raw = raw


# episodes
class SchemaError(DepthNavError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.message = message
        self.line = line
        self.field = field


class MissingFrameError(DepthNavError):
    def __init__(self, refs: list[str]):
        super().__init__("unresolvable frame refs: " + ", ".join(refs))
        self.refs = refs


# controller
class MissingArtifactForModeError(DepthNavError):
    pass


# metrics
class EmptyPoolError(DepthNavError):
    pass


class CardinalityMismatchError(DepthNavError):
    pass
