"""Diagnostics shared by the parser, the validators, the verifier and the simulator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class ErrorClass(str, Enum):
    # frontend
    LEX_ERROR = "lex-error"
    SYNTAX_ERROR = "syntax-error"
    DUPLICATE_NAME = "duplicate-name"
    UNDEFINED_NAME = "undefined-name"
    UNKNOWN_TYPE = "unknown-type"
    NEGATIVE_OFFSET = "negative-offset"
    UNKNOWN_FUNCTION = "unknown-function"
    # structure
    USE_BEFORE_DEF = "use-before-def"
    TIME_SCOPE = "time-scope"
    YIELD_COUNT = "yield-count"
    RETURN_COUNT = "return-count"
    MISSING_SCHEDULE = "missing-schedule"
    DISTRIBUTED_INDEX = "distributed-index-not-const"
    UNROLL_BOUNDS = "unroll-bounds-not-const"
    INVALID_LOOP_STEP = "invalid-loop-step"
    TYPE_MISMATCH = "type-mismatch"
    PORT_PERMISSION = "port-permission"
    RECURSIVE_CALL = "recursive-call"
    # schedule verification
    TIMING_MISMATCH = "timing-mismatch"
    STALE_ITERATION_VALUE = "stale-iteration-value"
    CROSS_ITERATION_VALUE = "cross-iteration-value"
    PIPELINE_IMBALANCE = "pipeline-imbalance"
    PORT_CONFLICT = "port-conflict"
    PORT_CONFLICT_POSSIBLE = "port-conflict-possible"
    # optimizer / backend
    UNKNOWN_PASS = "unknown-pass"
    INTERNAL = "internal-error"
    PORT_LIMIT = "port-limit"
    UNSUPPORTED_EXTERN = "unsupported-extern"
    RAM_STYLE_CONFLICT = "ram-style-conflict"
    # driver
    IO_ERROR = "io-error"


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __post_init__(self):
        if not self.end_line:
            object.__setattr__(self, "end_line", self.line)
            object.__setattr__(self, "end_col", max(self.end_col, self.col))

    def encloses(self, line: int, col: int) -> bool:
        return (self.line, self.col) <= (line, col) <= (self.end_line, self.end_col)

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


UNKNOWN_SPAN = SourceSpan("<unknown>", 0, 0)

_ANSI = {Severity.ERROR: "\x1b[1;31m", Severity.WARNING: "\x1b[1;35m"}
_RESET = "\x1b[0m"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    error_class: ErrorClass
    location: SourceSpan
    message: str
    related: tuple[SourceSpan, ...] = field(default_factory=tuple)

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def format(self, color: bool = False) -> str:
        tag = f"{self.severity.value}[{self.error_class.value}]"
        if color:
            tag = f"{_ANSI[self.severity]}{tag}{_RESET}"
        text = f"{self.location}: {tag}: {self.message}"
        for rel in self.related:
            text += f"\n{rel}: note: related location"
        return text

    def to_json(self) -> dict:
        return {
            "class": self.error_class.value,
            "severity": self.severity.value,
            "file": self.location.file,
            "line": self.location.line,
            "col": self.location.col,
            "message": self.message,
        }


def error(cls: ErrorClass, loc: Optional[SourceSpan], message: str, related=()) -> Diagnostic:
    return Diagnostic(Severity.ERROR, cls, loc or UNKNOWN_SPAN, message, tuple(related))


def warning(cls: ErrorClass, loc: Optional[SourceSpan], message: str, related=()) -> Diagnostic:
    return Diagnostic(Severity.WARNING, cls, loc or UNKNOWN_SPAN, message, tuple(related))


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def render(diags: Iterable[Diagnostic], json_lines: bool = False, color: bool = False) -> str:
    """One diagnostic per line, either as text or as JSON objects."""
    if json_lines:
        return "\n".join(json.dumps(d.to_json(), sort_keys=True) for d in diags)
    return "\n".join(d.format(color) for d in diags)
