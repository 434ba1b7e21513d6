"""Exception hierarchy shared by all evosynth modules."""


class EvosynthError(Exception):
    """Base class for every error raised by this package."""


class InvalidTopologyError(EvosynthError, ValueError):
    pass


class LineageMismatchError(EvosynthError, ValueError):
    """Networks do not descend from a compatible ancestor topology."""


class MalformedInputError(EvosynthError, ValueError):
    """A serialized architecture could not be decoded.

    ``offset`` is the byte position in the input where decoding failed.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class VersionMismatchError(EvosynthError, ValueError):
    pass


class NoSignalError(EvosynthError, ValueError):
    """All strengths are zero, so no survival distribution can be formed."""


class UndefinedOverlapError(EvosynthError, ValueError):
    pass


class InsufficientPopulationError(EvosynthError, ValueError):
    pass


class WidthMismatchError(EvosynthError, ValueError):
    pass


class IdxFormatError(EvosynthError, ValueError):
    """Base for IDX parsing failures; carries the file path and byte offset."""

    def __init__(self, message, path=None, offset=0):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.path = path
        self.offset = offset


class BadMagicError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class StageError(EvosynthError, RuntimeError):
    """A harness stage failed; ``stage`` names it for diagnostics."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
