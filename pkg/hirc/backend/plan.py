"""Data produced by lowering: what hardware was allocated for each function."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from hirc.core.diagnostics import ErrorClass, error
from hirc.core.errors import LoweringError
from hirc.ir.ops import Module
from hirc.ir.timing import resolve_time


class EventWire(BaseModel):
    """The pulse of one time variable: `root` delayed by `depth` flops."""
    time_var: str
    copy_path: str = ""
    root: str
    depth: int
    wire: str


class OpGate(BaseModel):
    op_index: int
    copy_path: str = ""
    root: str
    depth: int


class ShiftChain(BaseModel):
    value: str
    width: int
    depth: int
    taps: list[int] = Field(default_factory=list)
    clock_enabled: bool = True


class LoopController(BaseModel):
    loop: str
    kind: Literal["for", "unroll_for"]
    copy_path: str = ""
    counter_width: int = 0
    accumulator_widths: list[int] = Field(default_factory=list)
    lb: str
    ub: str
    step: str
    ii: Optional[int] = None
    body_latency: Optional[int] = None
    trip_count: Optional[int] = None
    copies: int = 1
    signed_compare: bool = False


class StorageBinding(BaseModel):
    name: str
    kind: Literal["ram", "reg"]
    ram_style: Optional[str] = None
    external: bool = False
    banks: int
    words: int
    width: int
    address_width: int
    read_latency: int
    ports: list[str] = Field(default_factory=list)


class AssertionSpec(BaseModel):
    kind: Literal["bounds", "port-exclusive", "initialized-read", "loop-bounds", "loop-reentry"]
    condition: str  # Verilog expression that is true when the assumption is violated
    message: str
    location: str = ""


class FunctionLowering(BaseModel):
    name: str
    events: list[EventWire] = Field(default_factory=list)
    gates: list[OpGate] = Field(default_factory=list)
    event_chains: dict[str, int] = Field(default_factory=dict)
    chains: list[ShiftChain] = Field(default_factory=list)
    loops: list[LoopController] = Field(default_factory=list)
    memories: list[StorageBinding] = Field(default_factory=list)
    result_registers: int = 0
    assertions: list[AssertionSpec] = Field(default_factory=list)
    arithmetic: dict[str, int] = Field(default_factory=dict)
    instances: list[str] = Field(default_factory=list)


class LoweringPlan(BaseModel):
    top: Optional[str] = None
    ram_style: str = "auto"
    functions: list[FunctionLowering] = Field(default_factory=list)
    externs: list[str] = Field(default_factory=list)

    def get(self, name: str) -> Optional[FunctionLowering]:
        return next((f for f in self.functions if f.name == name), None)


class ResourceReport(BaseModel):
    registers: int = 0
    chain_registers: int = 0
    counter_bits: int = 0
    counter_widths: list[int] = Field(default_factory=list)
    result_registers: int = 0
    event_registers: int = 0
    ram_instances: int = 0
    register_arrays: int = 0
    arithmetic: dict[str, int] = Field(default_factory=dict)

    @classmethod
    def from_plan(cls, plan: LoweringPlan) -> "ResourceReport":
        report = cls()
        for fl in plan.functions:
            report.chain_registers += sum(c.depth for c in fl.chains)
            for loop in fl.loops:
                if loop.kind == "for":
                    report.counter_widths.append(loop.counter_width)
                report.counter_bits += loop.counter_width + sum(loop.accumulator_widths)
            report.result_registers += fl.result_registers
            report.event_registers += sum(fl.event_chains.values())
            for mem in fl.memories:
                if mem.external:
                    continue
                if mem.kind == "ram":
                    report.ram_instances += mem.banks
                else:
                    report.register_arrays += mem.banks
            for op, n in fl.arithmetic.items():
                report.arithmetic[op] = report.arithmetic.get(op, 0) + n
        report.registers = report.chain_registers + report.counter_bits + report.result_registers
        report.audit(plan)
        return report

    def audit(self, plan: LoweringPlan):
        expected = sum(c.depth for f in plan.functions for c in f.chains) \
            + sum(l.counter_width + sum(l.accumulator_widths) for f in plan.functions for l in f.loops) \
            + sum(f.result_registers for f in plan.functions)
        if expected != self.registers:
            raise LoweringError("resource report is inconsistent with the lowering plan",
                                [error(ErrorClass.INTERNAL, None,
                                       f"registers {self.registers} != allocated {expected}")])


def audit_event_algebra(module: Module, plan: LoweringPlan) -> list[str]:
    """Check that every event wire and op gate sits at its canonical offset from its root.

    Returns one message per mismatch; an empty list means the plan is consistent.
    """
    problems = []
    for fl in plan.functions:
        fn = module.get(fl.name)
        if fn is None:
            problems.append(f"plan names unknown function @{fl.name}")
            continue
        ops = list(fn.walk())
        for gate in fl.gates:
            op = ops[gate.op_index]
            c = resolve_time(op.schedule)
            if (c.base.name, c.offset) != (gate.root, gate.depth):
                problems.append(f"@{fl.name} op #{gate.op_index}{gate.copy_path}: gated by {gate.root}+{gate.depth}, "
                                f"schedule resolves to {c.base.name}+{c.offset}")
        tvs = {fn.root.name: fn.root}
        for op in ops:
            for reg in op.regions:
                tvs[reg.root.name] = reg.root
            for r in op.results:
                if r.type == fn.root.type:
                    tvs[r.name] = r
        for ev in fl.events:
            tv = tvs.get(ev.time_var)
            if tv is None:
                problems.append(f"@{fl.name}: event for unknown time variable {ev.time_var}")
                continue
            c = resolve_time(tv)
            if (c.base.name, c.offset) != (ev.root, ev.depth):
                problems.append(f"@{fl.name} {ev.time_var}{ev.copy_path}: wired as {ev.root}+{ev.depth}, "
                                f"resolves to {c.base.name}+{c.offset}")
    return problems
