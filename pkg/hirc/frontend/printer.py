"""Deterministic pretty-printer; its output parses back to an identical module."""

from __future__ import annotations

from typing import Optional

from hirc.ir.ops import COMPUTE_OPS, Function, Module, Opcode, Operation, PortSpec, Region, TimeExpr
from hirc.ir.types import MemrefType

INDENT = "  "


def _sched(e: Optional[TimeExpr]) -> str:
    if e is None:
        return ""
    return f" at {e}"


def _port(p: PortSpec) -> str:
    if isinstance(p.type, MemrefType) or p.delay is None:
        return str(p.type)
    return f"{p.type} delay {p.delay}"


def _names(values) -> str:
    return ", ".join(v.name for v in values)


def print_op(op: Operation, depth: int, out: list[str]):
    pad = INDENT * depth
    code = op.opcode
    res = _names(op.results)
    if code is Opcode.CONSTANT:
        out.append(f"{pad}{res} = constant {op.attrs['value']}")
    elif code is Opcode.TIME:
        out.append(f"{pad}{res} = time {op.operands[0].name} offset {op.attrs['offset']}")
    elif code is Opcode.ALLOC:
        out.append(f"{pad}{res} = alloc : " + ", ".join(str(r.type) for r in op.results))
    elif code in COMPUTE_OPS:
        r = op.results[0]
        args = _names(op.operands)
        if code is Opcode.BIT_SLICE:
            args += f" [{op.attrs['hi']}:{op.attrs['lo']}]"
        ty = "" if r.is_const else f" : {r.type}"
        out.append(f"{pad}{res} = {code.value} {args}{ty}{_sched(op.schedule)}")
    elif code is Opcode.MEM_READ:
        out.append(f"{pad}{res} = mem_read {op.memref.name}[{_names(op.indices)}]{_sched(op.schedule)}")
    elif code is Opcode.MEM_WRITE:
        out.append(f"{pad}mem_write {op.operands[0].name} to {op.memref.name}"
                   f"[{_names(op.indices)}]{_sched(op.schedule)}")
    elif code is Opcode.DELAY:
        out.append(f"{pad}{res} = delay {op.operands[0].name} by {op.attrs['by']}{_sched(op.schedule)}")
    elif code is Opcode.CALL:
        lhs = f"{res} = " if res else ""
        out.append(f"{pad}{lhs}call @{op.attrs['callee']}({_names(op.operands)}){_sched(op.schedule)}")
    elif code is Opcode.YIELD:
        out.append(f"{pad}yield{_sched(op.schedule)}")
    elif code is Opcode.RETURN:
        vals = f" {_names(op.operands)}" if op.operands else ""
        out.append(f"{pad}return{vals}{_sched(op.schedule)}")
    elif op.is_loop:
        iv = op.iv
        head = "unroll_for" if code is Opcode.UNROLL_FOR else "for"
        iv_ty = "" if code is Opcode.UNROLL_FOR and iv.is_const else f" : {iv.type}"
        text = (f"{pad}{head} {iv.name}{iv_ty} = {op.lb.name} to {op.ub.name} "
                f"step {op.step.name}")
        if op.accums:
            parts = [f"{a.name} : {a.type} = {init} by {inc}"
                     for a, (init, inc) in zip(op.accums, op.attrs["accums"])]
            text += f" accum({', '.join(parts)})"
        text += f" iter_time {op.body.root.name}{_sched(op.schedule)} {{"
        out.append(text)
        print_region(op.body, depth + 1, out)
        out.append(f"{pad}}} yield_result {op.tend.name}")
    else:
        raise ValueError(f"cannot print {code}")


def print_region(region: Region, depth: int, out: list[str]):
    for op in region.ops:
        print_op(op, depth, out)


def print_function(fn: Function) -> str:
    args = ", ".join(f"{v.name} : {_port(p)}" for v, p in zip(fn.args, fn.signature.args))
    head = f"@{fn.name}({args})"
    if fn.signature.results:
        head += " -> (" + ", ".join(_port(p) for p in fn.signature.results) + ")"
    if fn.is_extern:
        return f"extern {head}\n"
    out = [f"def {head} at {fn.root.name} {{"]
    print_region(fn.body, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"


def print_module(module: Module) -> str:
    return "\n".join(print_function(fn) for fn in module)
