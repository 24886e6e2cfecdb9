"""IR-to-IR optimizations.

Each pass takes a function, works on a clone and returns the clone with a PassReport.
"""

from __future__ import annotations

import logging
from typing import Callable, Iterator, Optional

from pydantic import BaseModel, Field

from hirc.ir.ops import (COMPUTE_OPS, Function, Opcode, Operation, Region, TimeExpr, TimeVar,
                         Value, const_value)
from hirc.ir.timing import resolve_time
from hirc.ir.types import CONST, IntType, bit_width, wrap

logger = logging.getLogger(__name__)


class PassReport(BaseModel):
    name: str
    function: str = ""
    removed: int = 0
    added: int = 0
    rewritten: int = 0
    locations: list[str] = Field(default_factory=list)

    def touch(self, op: Operation, kind: str):
        setattr(self, kind, getattr(self, kind) + 1)
        if op.location is not None:
            self.locations.append(str(op.location))

    def summary(self) -> str:
        return (f"@{self.function} {self.name}: removed {self.removed}, added {self.added}, "
                f"rewritten {self.rewritten}")


PassFn = Callable[[Function], tuple[Function, PassReport]]


# rewriting helpers

def count_uses(fn: Function) -> dict[int, int]:
    uses: dict[int, int] = {}
    for op in fn.walk():
        for v in op.operands:
            uses[id(v)] = uses.get(id(v), 0) + 1
    return uses


def replace_uses(fn: Function, old: Value, new: Value) -> int:
    n = 0
    for op in fn.walk():
        for i, v in enumerate(op.operands):
            if v is old:
                op.operands[i] = new
                n += 1
    return n


def replace_time(fn: Function, old: TimeVar, new: TimeVar):
    for op in fn.walk():
        if op.schedule is not None and op.schedule.base is old:
            op.schedule = TimeExpr(new, op.schedule.offset)
        if op.opcode is Opcode.TIME:
            if op.operands[0] is old:
                op.operands[0] = new
            tv = op.results[0]
            if tv.parent is not None and tv.parent.base is old:
                tv.parent = TimeExpr(new, tv.parent.offset)


def erase(op: Operation):
    op.parent.ops.remove(op)
    op.parent = None


def regions(fn: Function) -> Iterator[Region]:
    if fn.body is None:
        return
    yield fn.body
    for op in fn.walk():
        yield from op.regions


def _instant_key(op: Operation) -> Optional[tuple[int, int]]:
    if op.schedule is None:
        return None
    c = resolve_time(op.schedule)
    return id(c.base), c.offset


# constant propagation

def fold(op: Operation, args: list[int]) -> int:
    code = op.opcode
    if code is Opcode.ADD:
        value = args[0] + args[1]
    elif code is Opcode.SUB:
        value = args[0] - args[1]
    elif code is Opcode.MULT:
        value = args[0] * args[1]
    elif code is Opcode.BIT_SLICE:
        hi, lo = op.attrs["hi"], op.attrs["lo"]
        value = (args[0] >> lo) & ((1 << (hi - lo + 1)) - 1)
    elif code is Opcode.SELECT:
        value = args[1] if args[0] != 0 else args[2]
    else:
        raise ValueError(f"cannot fold {code.value}")
    ty = op.results[0].type
    if isinstance(ty, IntType):
        return wrap(value, ty.width)
    return value


def _identity_operand(op: Operation) -> Optional[Value]:
    """The operand `op` reduces to, when an identity element makes it a plain copy."""
    code = op.opcode
    res = op.results[0]
    if code is Opcode.SELECT:
        c = const_value(op.operands[0])
        if c is None:
            return None
        pick = op.operands[1] if c != 0 else op.operands[2]
        return pick if pick.type == res.type or pick.is_const and res.is_const else None
    if code not in (Opcode.ADD, Opcode.SUB, Opcode.MULT):
        return None
    a, b = op.operands
    neutral = 1 if code is Opcode.MULT else 0
    if const_value(b) == neutral and a.type == res.type:
        return a
    if code is not Opcode.SUB and const_value(a) == neutral and b.type == res.type:
        return b
    return None


def constant_propagation(fn: Function) -> tuple[Function, PassReport]:
    fn = fn.clone()
    report = PassReport(name="constprop")
    changed = True
    while changed:
        changed = False
        for op in list(fn.walk()):
            if op.opcode not in COMPUTE_OPS or op.parent is None:
                continue
            res = op.results[0]
            args = [const_value(v) for v in op.operands]
            if all(a is not None for a in args):
                op.attrs = {"value": fold(op, args)}
                op.opcode = Opcode.CONSTANT
                op.operands, op.operand_spans, op.schedule = [], [], None
                res.type = CONST
                report.touch(op, "rewritten")
                changed = True
                continue
            if op.opcode is Opcode.MULT and 0 in args:
                op.attrs = {"value": 0}
                op.opcode = Opcode.CONSTANT
                op.operands, op.operand_spans, op.schedule = [], [], None
                res.type = CONST
                report.touch(op, "rewritten")
                changed = True
                continue
            same = _identity_operand(op)
            if same is not None:
                replace_uses(fn, res, same)
                erase(op)
                report.touch(op, "removed")
                changed = True
        uses = count_uses(fn)
        for op in list(fn.walk()):
            if op.opcode is Opcode.CONSTANT and op.parent is not None and not uses.get(id(op.results[0])):
                erase(op)
                report.touch(op, "removed")
                changed = True
    return fn, report


# common sub-expression elimination

_CSE_OPS = COMPUTE_OPS | {Opcode.CONSTANT, Opcode.MEM_READ}


def _cse_key(op: Operation):
    if op.opcode is Opcode.CONSTANT:
        return "constant", op.attrs["value"]
    attrs = tuple(sorted((k, v) for k, v in op.attrs.items() if isinstance(v, (int, str))))
    return (op.opcode, tuple(id(v) for v in op.operands), attrs, _instant_key(op),
            str(op.results[0].type))


def cse(fn: Function) -> tuple[Function, PassReport]:
    fn = fn.clone()
    report = PassReport(name="cse")

    def visit(region: Region, outer: list[dict]):
        seen: dict = {}
        scopes = outer + [seen]
        for op in list(region.ops):
            if op.opcode in _CSE_OPS:
                key = _cse_key(op)
                prior = next((s[key] for s in reversed(scopes) if key in s), None)
                if prior is not None:
                    replace_uses(fn, op.results[0], prior.results[0])
                    erase(op)
                    report.touch(op, "removed")
                    continue
                seen[key] = op
            for reg in op.regions:
                visit(reg, scopes)

    if fn.body is not None:
        visit(fn.body, [])
    return fn, report


# strength reduction

def strength_reduce(fn: Function) -> tuple[Function, PassReport]:
    fn = fn.clone()
    report = PassReport(name="strength_reduce")
    for loop in [op for op in fn.walk() if op.opcode is Opcode.FOR]:
        lb, step, ub = const_value(loop.lb), const_value(loop.step), const_value(loop.ub)
        if lb is None or step is None:
            continue
        iv = loop.iv
        for op in list(loop.body.ops):
            if op.opcode is not Opcode.MULT or op.schedule is None:
                continue
            at = resolve_time(op.schedule)
            if at.base is not loop.body.root or at.offset != 0:
                continue
            a, b = op.operands
            if a is iv and const_value(b) is not None:
                c = const_value(b)
            elif b is iv and const_value(a) is not None:
                c = const_value(a)
            else:
                continue
            res = op.results[0]
            non_negative = lb >= 0 and (ub is None or ub >= 0) and step > 0
            if not isinstance(res.type, IntType) or not (non_negative or iv.type == res.type):
                continue
            acc = Value(res.name, res.type, span=res.span)
            acc.region = loop.body
            loop.body.args.append(acc)
            loop.attrs.setdefault("accums", []).append(
                (wrap(lb * c, res.type.width), wrap(step * c, res.type.width)))
            replace_uses(fn, res, acc)
            erase(op)
            report.touch(op, "rewritten")
    return fn, report


# precision narrowing

def counter_width(lb: int, ub: int, step: int) -> int:
    """Bits needed by an unsigned counter that must reach the guard-failure value."""
    n = max(0, -(-(ub - lb) // step))
    last = lb + (n - 1) * step if n else lb
    return max(1, max(ub, lb, last + step if n else lb).bit_length())


def narrow_precision(fn: Function) -> tuple[Function, PassReport]:
    fn = fn.clone()
    report = PassReport(name="narrow_precision")
    for loop in [op for op in fn.walk() if op.opcode is Opcode.FOR]:
        bounds = [const_value(v) for v in (loop.lb, loop.ub, loop.step)]
        if None in bounds or min(bounds) < 0 or bounds[2] == 0:
            continue
        iv = loop.iv
        if not isinstance(iv.type, IntType):
            continue
        width = counter_width(*bounds)
        if width >= iv.type.width:
            continue
        narrowed = IntType(width)
        iv.type = narrowed
        report.touch(loop, "rewritten")
        frontier = [iv]
        while frontier:
            v = frontier.pop()
            for op in fn.walk():
                if op.opcode is Opcode.DELAY and op.operands[0] is v \
                        and bit_width(op.results[0].type) > width:
                    op.results[0].type = narrowed
                    frontier.append(op.results[0])
                    report.touch(op, "rewritten")
        logger.debug("narrowed %s to %s", iv.name, narrowed)
    return fn, report


# time-variable and delay de-duplication

def dedup_time_and_delays(fn: Function) -> tuple[Function, PassReport]:
    fn = fn.clone()
    report = PassReport(name="dedup_time_and_delays")
    for region in list(regions(fn)):
        canon: dict[tuple[int, int], TimeVar] = {}
        for op in list(region.ops):
            if op.opcode is not Opcode.TIME:
                continue
            tv = op.results[0]
            if op.attrs["offset"] == 0:
                replace_time(fn, tv, op.operands[0])
                erase(op)
                report.touch(op, "removed")
                continue
            c = resolve_time(tv)
            key = (id(c.base), c.offset)
            if key in canon:
                replace_time(fn, tv, canon[key])
                erase(op)
                report.touch(op, "removed")
            else:
                canon[key] = tv
    for region in list(regions(fn)):
        groups: dict[tuple[int, tuple[int, int]], list[Operation]] = {}
        for op in region.ops:
            if op.opcode is Opcode.DELAY:
                groups.setdefault((id(op.operands[0]), _instant_key(op)), []).append(op)
        for ops in groups.values():
            if len(ops) < 2:
                continue
            ops.sort(key=lambda o: o.attrs["by"])
            keep: list[Operation] = []
            for op in ops:
                if keep and keep[-1].attrs["by"] == op.attrs["by"]:
                    replace_uses(fn, op.results[0], keep[-1].results[0])
                    erase(op)
                    report.touch(op, "removed")
                else:
                    keep.append(op)
            for prev, op in zip(keep, keep[1:]):
                base = op.schedule
                prev_depth = prev.attrs.get("_depth", prev.attrs["by"])
                op.attrs["_depth"] = op.attrs["by"]
                op.operands[0] = prev.results[0]
                op.attrs["by"] = op.attrs["by"] - prev_depth
                op.schedule = base.shifted(prev_depth)
                report.touch(op, "rewritten")
            for op in keep:
                op.attrs.pop("_depth", None)
    return fn, report


PASSES: dict[str, PassFn] = {
    "constprop": constant_propagation,
    "cse": cse,
    "strength_reduce": strength_reduce,
    "narrow_precision": narrow_precision,
    "dedup_time_and_delays": dedup_time_and_delays,
}
