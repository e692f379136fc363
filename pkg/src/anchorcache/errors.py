"""Exception types shared across the engine."""

from __future__ import annotations


class CacheEngineError(Exception):
    """Base class for all anchorcache errors."""


class FrameRangeError(CacheEngineError):
    """Frame index or offset outside its valid range."""


class SequenceError(CacheEngineError):
    """Out-of-order frame pushed into the rolling cache."""


class ShapeError(CacheEngineError):
    """Junction refresh called with the wrong number or span of frames."""


class StateError(CacheEngineError):
    """Cache state inconsistent with the requested operation."""


class DimensionError(CacheEngineError):
    """Vector or matrix dimensions incompatible with the model config."""


class ConsistencyError(CacheEngineError):
    """Position map does not cover the assembled memory."""


class SchemaError(CacheEngineError):
    """Invalid input document. Carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class TraceParseError(CacheEngineError):
    """Malformed trace file. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        self.message = message
        super().__init__(f"line {line_no}: {message}")


class InvariantViolation(CacheEngineError):
    """A checked-mode run hit an invariant breach at a specific frame."""

    def __init__(self, invariant: str, frame: int, detail: str = ""):
        self.invariant = invariant
        self.frame = frame
        self.detail = detail
        msg = f"invariant '{invariant}' violated at t={frame}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
