"""Time canonicalization, the per-op latency model and static loop timing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

from hirc.core.diagnostics import ErrorClass, error
from hirc.core.errors import TimeResolutionError
from hirc.ir.ops import (COMPUTE_OPS, Function, Opcode, Operation, Region, TimeExpr,
                         TimeOrigin, TimeVar, const_value)
from hirc.ir.types import MemrefType

logger = logging.getLogger(__name__)

# A canonical instant is a TimeExpr whose base has no parent link.
CanonicalInstant = TimeExpr


@dataclass(frozen=True)
class TargetModel:
    ram_read_latency: int = 1
    reg_read_latency: int = 0
    write_latency: int = 1


DEFAULT_TARGET = TargetModel()


def defining_region(tv: TimeVar) -> Optional[Region]:
    if tv.owner is not None:
        return tv.owner.parent
    return tv.region


def resolve_time(e: Union[TimeExpr, TimeVar], scope: Optional[Region] = None) -> CanonicalInstant:
    """Fold constant parent links into a (root, total offset) pair.

    With `scope`, the base must be defined in that region.
    """
    if isinstance(e, TimeVar):
        e = TimeExpr(e, 0)
    if scope is not None and defining_region(e.base) is not scope:
        raise TimeResolutionError(
            f"time variable {e.base.name} is not visible here",
            [error(ErrorClass.TIME_SCOPE, e.base.span,
                   f"time variable {e.base.name} is not visible in this region")])
    tv, offset = e.base, e.offset
    seen = set()
    while tv.parent is not None:
        if id(tv) in seen:
            raise TimeResolutionError(f"cyclic time definition through {tv.name}")
        seen.add(id(tv))
        offset += tv.parent.offset
        tv = tv.parent.base
    if tv is e.base and offset == e.offset:
        return e
    return TimeExpr(tv, offset)


def comparable(a: CanonicalInstant, b: CanonicalInstant) -> bool:
    return a.base is b.base


def latency_of(op: Operation, target: TargetModel = DEFAULT_TARGET) -> int:
    """Cycles from an op's schedule until its results are valid / its effect is visible.

    For calls this is the largest result delay of the callee signature.
    """
    code = op.opcode
    if code is Opcode.MEM_WRITE:
        return target.write_latency
    if code is Opcode.MEM_READ:
        mt: MemrefType = op.memref.type
        return target.ram_read_latency if mt.storage.is_ram else target.reg_read_latency
    if code is Opcode.DELAY:
        return op.attrs["by"]
    if code is Opcode.CALL:
        delays = [r.delay or 0 for r in op.attrs["signature"].results]
        return max(delays, default=0)
    if code in COMPUTE_OPS:
        return 0
    return 0


def result_latency(op: Operation, index: int, target: TargetModel = DEFAULT_TARGET) -> int:
    if op.opcode is Opcode.CALL:
        return op.attrs["signature"].results[index].delay or 0
    return latency_of(op, target)


def trip_count(op: Operation) -> Optional[int]:
    lb, ub, step = (const_value(v) for v in op.operands[:3])
    if lb is None or ub is None or step is None or step <= 0:
        return None
    return max(0, math.ceil((ub - lb) / step))


@dataclass(frozen=True)
class LoopTiming:
    ii: Optional[int]
    body_latency: Optional[int]
    trip_count: Optional[int]

    @property
    def drain(self) -> int:
        if self.ii is None or self.body_latency is None:
            return 0
        return max(0, self.body_latency - self.ii)

    @property
    def is_variable(self) -> bool:
        return self.ii is None


def _offset_in(region: Region, e: TimeExpr) -> Optional[int]:
    try:
        c = resolve_time(e)
    except TimeResolutionError:
        return None
    return c.offset if c.base is region.root else None


def loop_timing(op: Operation, target: TargetModel = DEFAULT_TARGET) -> LoopTiming:
    body = op.body
    yop = op.yield_op()
    ii = _offset_in(body, yop.schedule) if yop is not None and yop.schedule else None
    latency: Optional[int] = ii if ii is not None else 0
    for inner in body.ops:
        if inner.opcode is Opcode.YIELD:
            continue
        if inner.is_loop:
            end = _offset_in(body, TimeExpr(inner.tend, 0))
        elif inner.schedule is None:
            continue
        else:
            start = _offset_in(body, inner.schedule)
            end = None if start is None else start + latency_of(inner, target)
        if end is None:
            latency = None
            break
        latency = max(latency, end)
    if ii is None and latency is not None and yop is not None:
        # yield off the iteration root: the body latency is not static either
        latency = None
    return LoopTiming(ii, latency, trip_count(op))


def settle_loop_timing(fn: Function, target: TargetModel = DEFAULT_TARGET) -> None:
    """Attach static parent links to loop-completion time variables, innermost first."""

    def visit(region: Region) -> None:
        for op in region.ops:
            for reg in op.regions:
                visit(reg)
            if not op.is_loop:
                continue
            timing = loop_timing(op, target)
            tend = op.tend
            tend.origin = TimeOrigin.LOOP_COMPLETION
            if (op.schedule is not None and timing.ii is not None
                    and timing.body_latency is not None and timing.trip_count is not None):
                total = (timing.trip_count - 1) * timing.ii + timing.body_latency
                tend.parent = op.schedule.shifted(total)
                logger.debug("loop %s completes at %s", op.iv.name, tend.parent)
            else:
                tend.parent = None

    if fn.body is not None:
        visit(fn.body)
