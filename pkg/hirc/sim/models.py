from __future__ import annotations

from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class UBKind(str, Enum):
    OUT_OF_BOUNDS = "out-of-bounds"
    PORT_CONFLICT = "port-conflict"
    UNINITIALIZED_READ = "uninitialized-read"
    BOUND_INVERSION = "bound-inversion"
    LOOP_REENTRY = "loop-reentry"
    TIMING_VIOLATION = "timing-violation"


class UBEvent(BaseModel):
    kind: UBKind
    cycle: int
    location: str
    details: str = ""


class PortWrite(BaseModel):
    """An externally driven write, visible to reads from `cycle` on."""
    cycle: int = Field(ge=0)
    index: list[int]
    data: int


class SimInputs(BaseModel):
    scalars: dict[str, int] = Field(default_factory=dict)
    tensors: dict[str, Any] = Field(default_factory=dict)
    port_scripts: dict[str, list[PortWrite]] = Field(default_factory=dict)
    max_cycles: Optional[int] = None

    def lookup(self, table: dict, name: str):
        bare = name.lstrip("%")
        if bare in table:
            return table[bare]
        return table.get("%" + bare)


class SimResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    top: str
    outputs: list[Optional[int]] = Field(default_factory=list)
    tensors: dict[str, Any] = Field(default_factory=dict)
    completion_cycle: Optional[int] = None
    cycles: int = 0
    timed_out: bool = False
    ub_events: list[UBEvent] = Field(default_factory=list)
    trace: Any = Field(default=None, exclude=True)

    def ub_kinds(self) -> list[str]:
        return [e.kind.value for e in self.ub_events]
