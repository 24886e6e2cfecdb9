"""SSA values, time variables, operations, regions, functions and modules."""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Optional

from hirc.core.diagnostics import SourceSpan
from hirc.ir.types import CONST, TIME, ConstType, MemrefType, Type

_ids = itertools.count(1)


class Opcode(str, Enum):
    FUNC = "func"
    FOR = "for"
    UNROLL_FOR = "unroll_for"
    YIELD = "yield"
    RETURN = "return"
    CALL = "call"
    ADD = "add"
    SUB = "sub"
    MULT = "mult"
    BIT_SLICE = "bit_slice"
    SELECT = "select"
    MEM_READ = "mem_read"
    MEM_WRITE = "mem_write"
    DELAY = "delay"
    CONSTANT = "constant"
    TIME = "time"
    ALLOC = "alloc"


COMPUTE_OPS = frozenset({Opcode.ADD, Opcode.SUB, Opcode.MULT, Opcode.BIT_SLICE, Opcode.SELECT})
LOOP_OPS = frozenset({Opcode.FOR, Opcode.UNROLL_FOR})
MEMORY_OPS = frozenset({Opcode.MEM_READ, Opcode.MEM_WRITE})
# ops that never carry a schedule
UNSCHEDULED_OPS = frozenset({Opcode.CONSTANT, Opcode.TIME, Opcode.ALLOC})


class TimeOrigin(str, Enum):
    FUNCTION_ENTRY = "function-entry"
    LOOP_ITERATION = "loop-iteration"
    LOOP_COMPLETION = "loop-completion"
    DERIVED = "derived"


@dataclass(eq=False)
class Value:
    name: str
    type: Type
    owner: Optional["Operation"] = None
    region: Optional["Region"] = None
    span: Optional[SourceSpan] = None

    @property
    def is_const(self) -> bool:
        return isinstance(self.type, ConstType)

    @property
    def is_memref(self) -> bool:
        return isinstance(self.type, MemrefType)

    def __repr__(self) -> str:
        return f"<{self.name}: {self.type}>"


class TimeVar(Value):
    """A clock-cycle instant. `parent` links it to another TimeVar by a constant delay."""

    def __init__(self, name: str, origin: TimeOrigin, parent: Optional["TimeExpr"] = None,
                 span: Optional[SourceSpan] = None):
        super().__init__(name, TIME, span=span)
        self.origin = origin
        self.parent = parent


@dataclass(frozen=True)
class TimeExpr:
    base: TimeVar
    offset: int = 0

    def shifted(self, by: int) -> "TimeExpr":
        return TimeExpr(self.base, self.offset + by)

    def __str__(self) -> str:
        if self.offset:
            return f"{self.base.name} offset {self.offset}"
        return self.base.name


@dataclass(frozen=True)
class PortSpec:
    type: Type
    delay: Optional[int] = 0


@dataclass(frozen=True)
class FunctionSignature:
    args: tuple[PortSpec, ...]
    results: tuple[PortSpec, ...]


@dataclass(eq=False)
class Operation:
    opcode: Opcode
    operands: list[Value] = field(default_factory=list)
    results: list[Value] = field(default_factory=list)
    schedule: Optional[TimeExpr] = None
    attrs: dict[str, Any] = field(default_factory=dict)
    regions: list["Region"] = field(default_factory=list)
    location: Optional[SourceSpan] = None
    operand_spans: list[Optional[SourceSpan]] = field(default_factory=list)
    parent: Optional["Region"] = None
    id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        for i, r in enumerate(self.results):
            r.owner = self
        for reg in self.regions:
            reg.owner = self

    def operand_span(self, i: int) -> Optional[SourceSpan]:
        if i < len(self.operand_spans) and self.operand_spans[i] is not None:
            return self.operand_spans[i]
        return self.location

    # loop accessors
    @property
    def body(self) -> "Region":
        return self.regions[0]

    @property
    def lb(self) -> Value:
        return self.operands[0]

    @property
    def ub(self) -> Value:
        return self.operands[1]

    @property
    def step(self) -> Value:
        return self.operands[2]

    @property
    def iv(self) -> Value:
        return self.body.args[0]

    @property
    def accums(self) -> list[Value]:
        return self.body.args[1:]

    @property
    def tend(self) -> TimeVar:
        return self.results[0]

    @property
    def is_loop(self) -> bool:
        return self.opcode in LOOP_OPS

    def yield_op(self) -> Optional["Operation"]:
        for op in self.body.ops:
            if op.opcode is Opcode.YIELD:
                return op
        return None

    # memory accessors
    @property
    def memref(self) -> Value:
        return self.operands[0] if self.opcode is Opcode.MEM_READ else self.operands[1]

    @property
    def indices(self) -> list[Value]:
        return self.operands[1:] if self.opcode is Opcode.MEM_READ else self.operands[2:]

    def __repr__(self) -> str:
        res = ", ".join(r.name for r in self.results)
        return f"<op {res + ' = ' if res else ''}{self.opcode.value} @{self.location}>"


@dataclass(eq=False)
class Region:
    root: TimeVar
    ops: list[Operation] = field(default_factory=list)
    args: list[Value] = field(default_factory=list)
    owner: Optional[Operation] = None

    def __post_init__(self):
        for a in self.args:
            a.region = self
        self.root.region = self
        for op in self.ops:
            op.parent = self

    def append(self, op: Operation) -> Operation:
        op.parent = self
        self.ops.append(op)
        return op

    def walk(self) -> Iterator[Operation]:
        """Pre-order walk over this region and all nested regions."""
        for op in self.ops:
            yield op
            for reg in op.regions:
                yield from reg.walk()

    def enclosing_regions(self) -> Iterator["Region"]:
        reg: Optional[Region] = self
        while reg is not None:
            yield reg
            reg = reg.owner.parent if reg.owner is not None else None


@dataclass(eq=False)
class Function:
    name: str
    args: list[Value]
    signature: FunctionSignature
    body: Optional[Region] = None
    location: Optional[SourceSpan] = None
    opcode: Opcode = Opcode.FUNC

    @property
    def is_extern(self) -> bool:
        return self.body is None

    @property
    def root(self) -> TimeVar:
        return self.body.root

    def walk(self) -> Iterator[Operation]:
        if self.body is not None:
            yield from self.body.walk()

    def defined_names(self) -> set[str]:
        names = {a.name for a in self.args}
        if self.body is None:
            return names
        names.add(self.root.name)
        for op in self.walk():
            names.update(r.name for r in op.results)
            for reg in op.regions:
                names.add(reg.root.name)
                names.update(a.name for a in reg.args)
        return names

    def fresh_name(self, hint: str, taken: Optional[set[str]] = None) -> str:
        """A `%`-name not yet defined in this function, derived from `hint`."""
        taken = taken if taken is not None else self.defined_names()
        stem = hint.lstrip("%")
        for n in itertools.count():
            name = f"%{stem}" if n == 0 else f"%{stem}_{n}"
            if name not in taken:
                taken.add(name)
                return name
        raise AssertionError("unreachable")

    def return_op(self) -> Optional[Operation]:
        if self.body is None:
            return None
        for op in self.body.ops:
            if op.opcode is Opcode.RETURN:
                return op
        return None

    def clone(self) -> "Function":
        return copy.deepcopy(self)


@dataclass(eq=False)
class Module:
    functions: list[Function] = field(default_factory=list)
    filename: str = "<memory>"

    def get(self, name: str) -> Optional[Function]:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def __iter__(self):
        return iter(self.functions)

    def replace(self, fn: Function) -> "Module":
        """A new module with `fn` substituted for the function of the same name."""
        funcs = [fn if f.name == fn.name else f for f in self.functions]
        return Module(funcs, self.filename)

    def clone(self) -> "Module":
        return copy.deepcopy(self)


def const_value(v: Value) -> Optional[int]:
    """The compile-time integer of `v` if it is produced by a `constant` op."""
    if v.owner is not None and v.owner.opcode is Opcode.CONSTANT:
        return v.owner.attrs["value"]
    return None


def make_constant(name: str, value: int, span: Optional[SourceSpan] = None) -> Operation:
    return Operation(Opcode.CONSTANT, results=[Value(name, CONST, span=span)],
                     attrs={"value": value}, location=span)
