"""Exception types raised across the engine.

Every error that names a file carries the offending path so batch runs can
report exactly what broke.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class MissingFile(EngineError):
    def __init__(self, path):
        super().__init__(f"missing required input: {path}")
        self.path = str(path)


class DimensionMismatch(EngineError):
    def __init__(self, message, expected=None, actual=None):
        if expected is not None:
            message = f"{message}: expected shape {expected}, got {actual}"
            self.expected = tuple(expected)
            self.actual = tuple(actual) if actual is not None else None
        super().__init__(message)


class ValueOutOfRange(EngineError):
    def __init__(self, path, detail):
        super().__init__(f"{path}: {detail}")
        self.path = str(path)


class ParseError(EngineError):
    def __init__(self, path, detail):
        super().__init__(f"{path}: {detail}")
        self.path = str(path)


class MissingField(EngineError):
    def __init__(self, path, field):
        super().__init__(f"{path}: missing field '{field}'")
        self.path = str(path)
        self.field = field


class IoError(EngineError):
    pass


class ConfigError(EngineError):
    pass


class InvalidDepth(EngineError):
    def __init__(self, anchor_index, detail="no valid depth"):
        super().__init__(f"anchor {anchor_index}: {detail}")
        self.anchor_index = anchor_index


class Degenerate(EngineError):
    pass


class DegenerateDepth(EngineError):
    pass


class EmptyMask(EngineError):
    pass


class ImageTooSmall(EngineError):
    pass


class EnhancerFailure(EngineError):
    pass


class InterpolatorFailure(EngineError):
    pass


class StageError(EngineError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
