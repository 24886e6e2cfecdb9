"""Structural validation: dominance, time scoping, region shape and operand kinds.

Validation collects every violation; it never stops at the first one.
"""

from __future__ import annotations

import logging
from typing import Optional

from hirc.core.diagnostics import Diagnostic, ErrorClass, error
from hirc.ir.ops import (COMPUTE_OPS, Function, Module, Opcode, Operation, Region, TimeVar,
                         UNSCHEDULED_OPS, Value, const_value)
from hirc.ir.types import IntType, MemrefType, TimeType, is_primitive

logger = logging.getLogger(__name__)


class _Scope:
    """Values visible while walking a region, innermost last."""

    def __init__(self):
        self.frames: list[tuple[Region, set[int]]] = []

    def push(self, region: Region, initial: list[Value]):
        self.frames.append((region, {id(v) for v in initial}))

    def pop(self):
        self.frames.pop()

    def define(self, v: Value):
        self.frames[-1][1].add(id(v))

    def visible(self, v: Value) -> bool:
        return any(id(v) in ids for _, ids in self.frames)

    def local(self, v: Value) -> bool:
        return id(v) in self.frames[-1][1]


class _StructureChecker:
    def __init__(self, fn: Function):
        self.fn = fn
        self.diags: list[Diagnostic] = []
        self.scope = _Scope()

    def report(self, cls: ErrorClass, loc, message: str):
        self.diags.append(error(cls, loc or self.fn.location, message))

    def run(self) -> list[Diagnostic]:
        fn = self.fn
        if fn.is_extern:
            return self.diags
        if not isinstance(fn.root, TimeVar) or fn.root.parent is not None:
            self.report(ErrorClass.TIME_SCOPE, fn.location,
                        f"function @{fn.name} must have a parent-less root time variable")
        self.scope.push(fn.body, [*fn.args, fn.root])
        self.check_region(fn.body, in_loop=False)
        self.scope.pop()
        returns = [op for op in fn.body.ops if op.opcode is Opcode.RETURN]
        if len(returns) != 1:
            self.report(ErrorClass.RETURN_COUNT, fn.location,
                        f"function @{fn.name} must contain exactly one return, found {len(returns)}")
        return self.diags

    def check_region(self, region: Region, in_loop: bool):
        for op in region.ops:
            self.check_operands(op)
            self.check_schedule(op, region)
            self.check_op(op, in_loop)
            for reg in op.regions:
                self.scope.push(reg, [*reg.args, reg.root])
                self.check_region(reg, in_loop=True)
                self.scope.pop()
                yields = [o for o in reg.ops if o.opcode is Opcode.YIELD]
                if len(yields) != 1:
                    self.report(ErrorClass.YIELD_COUNT, op.location,
                                f"loop body must contain exactly one yield, found {len(yields)}")
            for r in op.results:
                self.scope.define(r)

    def check_operands(self, op: Operation):
        for i, v in enumerate(op.operands):
            if not self.scope.visible(v):
                self.report(ErrorClass.USE_BEFORE_DEF, op.operand_span(i),
                            f"{v.name} is used before its definition")
        if op.opcode is Opcode.TIME and op.operands and self.scope.visible(op.operands[0]) \
                and not self.scope.local(op.operands[0]):
            self.report(ErrorClass.TIME_SCOPE, op.operand_span(0),
                        f"time variable {op.operands[0].name} is not visible in this region")

    def check_schedule(self, op: Operation, region: Region):
        needs = op.opcode not in UNSCHEDULED_OPS and not self.is_const_compute(op)
        if op.schedule is None:
            if needs:
                self.report(ErrorClass.MISSING_SCHEDULE, op.location,
                            f"{op.opcode.value} requires an 'at' schedule")
            return
        if op.schedule.offset < 0:
            self.report(ErrorClass.NEGATIVE_OFFSET, op.location, "offset must be non-negative")
        base = op.schedule.base
        if not self.scope.visible(base):
            self.report(ErrorClass.USE_BEFORE_DEF, op.location,
                        f"time variable {base.name} is used before its definition")
        elif not self.scope.local(base):
            self.report(ErrorClass.TIME_SCOPE, op.location,
                        f"time variable {base.name} is not visible in this region")

    @staticmethod
    def is_const_compute(op: Operation) -> bool:
        return op.opcode in COMPUTE_OPS and all(r.is_const for r in op.results)

    def check_op(self, op: Operation, in_loop: bool):
        code = op.opcode
        if code is Opcode.YIELD and not in_loop:
            self.report(ErrorClass.YIELD_COUNT, op.location, "yield outside of a loop body")
        elif code is Opcode.RETURN and in_loop:
            self.report(ErrorClass.RETURN_COUNT, op.location, "return inside a loop body")
        elif code is Opcode.RETURN:
            self.check_return(op)
        elif op.is_loop:
            self.check_loop(op)
        elif code in (Opcode.MEM_READ, Opcode.MEM_WRITE):
            self.check_memory(op)
        elif code in COMPUTE_OPS:
            self.check_compute(op)
        elif code is Opcode.DELAY:
            if op.attrs.get("by", 0) < 0:
                self.report(ErrorClass.NEGATIVE_OFFSET, op.location, "offset must be non-negative")
            self.require_data(op, 0)
        elif code is Opcode.TIME:
            if op.attrs.get("offset", 0) < 0:
                self.report(ErrorClass.NEGATIVE_OFFSET, op.location, "offset must be non-negative")

    def require_data(self, op: Operation, index: int) -> Optional[Value]:
        v = op.operands[index]
        if isinstance(v.type, (MemrefType, TimeType)):
            self.report(ErrorClass.TYPE_MISMATCH, op.operand_span(index),
                        f"{v.name} of type {v.type} is not a data value")
            return None
        return v

    def check_return(self, op: Operation):
        expected = self.fn.signature.results
        if len(op.operands) != len(expected):
            self.report(ErrorClass.TYPE_MISMATCH, op.location,
                        f"return has {len(op.operands)} values, signature declares {len(expected)}")
        for i in range(len(op.operands)):
            self.require_data(op, i)

    def check_loop(self, op: Operation):
        step = const_value(op.step)
        if op.opcode is Opcode.UNROLL_FOR:
            if any(const_value(v) is None for v in op.operands[:3]):
                self.report(ErrorClass.UNROLL_BOUNDS, op.location, "unroll bounds must be constant")
        for i in range(3):
            self.require_data(op, i)
        if step is not None and step <= 0:
            self.report(ErrorClass.INVALID_LOOP_STEP, op.operand_span(2),
                        f"loop step must be positive, got {step}")

    def check_memory(self, op: Operation):
        mem = op.memref
        mi = 0 if op.opcode is Opcode.MEM_READ else 1
        if not isinstance(mem.type, MemrefType):
            self.report(ErrorClass.TYPE_MISMATCH, op.operand_span(mi), f"{mem.name} is not a memref")
            return
        mt: MemrefType = mem.type
        if op.opcode is Opcode.MEM_READ and not mt.port.can_read:
            self.report(ErrorClass.PORT_PERMISSION, op.operand_span(mi),
                        f"{mem.name} is a write-only port")
        if op.opcode is Opcode.MEM_WRITE:
            if not mt.port.can_write:
                self.report(ErrorClass.PORT_PERMISSION, op.operand_span(mi),
                            f"{mem.name} is a read-only port")
            self.require_data(op, 0)
        if len(op.indices) != len(mt.shape):
            self.report(ErrorClass.TYPE_MISMATCH, op.location,
                        f"{mem.name} has rank {len(mt.shape)}, got {len(op.indices)} indices")
            return
        for axis in mt.distributed_axes:
            idx = op.indices[axis]
            if not idx.is_const:
                self.report(ErrorClass.DISTRIBUTED_INDEX, op.operand_span(mi + 1 + axis),
                            f"distributed dimension {axis} of {mem.name} must be indexed by a constant")
        for k, idx in enumerate(op.indices):
            if isinstance(idx.type, (MemrefType, TimeType)):
                self.report(ErrorClass.TYPE_MISMATCH, op.operand_span(mi + 1 + k),
                            f"index {idx.name} is not an integer")

    def check_compute(self, op: Operation):
        for i in range(len(op.operands)):
            self.require_data(op, i)
        res = op.results[0]
        if res.is_const and not all(v.is_const for v in op.operands):
            self.report(ErrorClass.TYPE_MISMATCH, op.location,
                        f"{res.name} is const but depends on runtime values")
        if op.opcode is Opcode.BIT_SLICE:
            hi, lo = op.attrs["hi"], op.attrs["lo"]
            if hi < lo or lo < 0:
                self.report(ErrorClass.TYPE_MISMATCH, op.location, f"invalid bit range [{hi}:{lo}]")
            elif isinstance(res.type, IntType) and res.type.width != hi - lo + 1:
                self.report(ErrorClass.TYPE_MISMATCH, op.location,
                            f"bit_slice [{hi}:{lo}] produces i{hi - lo + 1}, declared {res.type}")


def validate_structure(fn: Function) -> list[Diagnostic]:
    diags = _StructureChecker(fn).run()
    logger.debug("structure of @%s: %d diagnostics", fn.name, len(diags))
    return diags


def _check_call(op: Operation, module: Module) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    callee = module.get(op.attrs["callee"])
    if callee is None:
        return [error(ErrorClass.UNKNOWN_FUNCTION, op.location,
                      f"call to unknown function @{op.attrs['callee']}")]
    sig = callee.signature
    op.attrs["signature"] = sig
    if len(op.operands) != len(sig.args):
        diags.append(error(ErrorClass.TYPE_MISMATCH, op.location,
                           f"@{callee.name} takes {len(sig.args)} arguments, got {len(op.operands)}"))
        return diags
    if op.results and len(op.results) != len(sig.results):
        diags.append(error(ErrorClass.TYPE_MISMATCH, op.location,
                           f"@{callee.name} returns {len(sig.results)} values, "
                           f"{len(op.results)} bound"))
    for i, (v, port) in enumerate(zip(op.operands, sig.args)):
        want = port.type
        if isinstance(want, MemrefType):
            if not isinstance(v.type, MemrefType) or not v.type.same_tensor_shape(want):
                diags.append(error(ErrorClass.TYPE_MISMATCH, op.operand_span(i),
                                   f"argument {i} of @{callee.name} expects {want}, got {v.type}"))
            elif (want.port.can_read and not v.type.port.can_read) or \
                    (want.port.can_write and not v.type.port.can_write):
                diags.append(error(ErrorClass.PORT_PERMISSION, op.operand_span(i),
                                   f"argument {i} of @{callee.name} needs a '{want.port.value}' port, "
                                   f"{v.name} is '{v.type.port.value}'"))
        elif not (is_primitive(v.type) or v.is_const):
            diags.append(error(ErrorClass.TYPE_MISMATCH, op.operand_span(i),
                               f"argument {i} of @{callee.name} expects {want}, got {v.type}"))
    return diags


def _find_recursion(module: Module) -> list[Diagnostic]:
    edges: dict[str, list[tuple[str, Operation]]] = {}
    for fn in module:
        edges[fn.name] = [(op.attrs["callee"], op) for op in fn.walk() if op.opcode is Opcode.CALL]
    diags: list[Diagnostic] = []
    state: dict[str, int] = {}

    def visit(name: str):
        state[name] = 1
        for callee, op in edges.get(name, ()):
            if state.get(callee) == 1:
                diags.append(error(ErrorClass.RECURSIVE_CALL, op.location,
                                   f"call to @{callee} forms a recursive cycle"))
            elif callee in edges and callee not in state:
                visit(callee)
        state[name] = 2

    for fn in module:
        if fn.name not in state:
            visit(fn.name)
    return diags


def validate_module(module: Module) -> list[Diagnostic]:
    """Structure of every function in declaration order, then call-graph checks."""
    diags: list[Diagnostic] = []
    for fn in module:
        diags.extend(validate_structure(fn))
        for op in fn.walk():
            if op.opcode is Opcode.CALL:
                diags.extend(_check_call(op, module))
    diags.extend(_find_recursion(module))
    return diags
