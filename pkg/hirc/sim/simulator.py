"""Cycle-accurate interpreter for schedule-valid IR.

Time variables fire as events; each scheduled op runs at its resolved cycle in the
activation (function call, loop iteration or unroll copy) it belongs to. Ops that share
a cycle run in dependency order; a cycle that cannot make progress is broken by forcing
an op, which records a timing violation and poisons the missing operands. Memory writes
commit at the end of the cycle, so a read in the same cycle sees the old contents.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from hirc.core.config import get_settings
from hirc.core.errors import MissingInputError, PortScriptError, SimulationError
from hirc.ir.ops import COMPUTE_OPS, Function, Module, Opcode, Operation, Region, TimeVar, Value
from hirc.ir.timing import DEFAULT_TARGET, LoopTiming, TargetModel, latency_of, loop_timing
from hirc.ir.types import ConstType, FloatType, IntType, MemrefType, to_signed, wrap
from hirc.sim.models import SimInputs, SimResult, UBEvent, UBKind
from hirc.sim.trace import Trace

logger = logging.getLogger(__name__)

BUILTIN_EXTERNS: dict[str, Callable[..., int]] = {
    "mult": lambda a, b: a * b,
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "max": max,
    "min": min,
    "identity": lambda a: a,
}


def _bare(name: str) -> str:
    return name.lstrip("%@")


def _width(ty) -> Optional[int]:
    if isinstance(ty, IntType):
        return ty.width
    if isinstance(ty, FloatType):
        raise SimulationError(f"{ty} arithmetic is not simulated")
    return None


def _fit(value: int, ty) -> int:
    """Zero-extend, truncate or wrap `value` to the bit pattern of `ty`; const stays exact."""
    w = _width(ty)
    return value if w is None else wrap(value, w)


def _signed(value: int, ty) -> int:
    return to_signed(value, ty.width) if isinstance(ty, IntType) else value


@dataclass
class Slot:
    value: Any
    valid: Optional[int]  # None: valid at every cycle
    poison: bool = False


class Tensor:
    """One memory: element patterns plus per-cell initialized and poison flags."""

    def __init__(self, name: str, mt: MemrefType):
        self.name = name
        self.type = mt
        self.data = np.zeros(mt.shape, dtype=object)
        self.init = np.zeros(mt.shape, dtype=bool)
        self.poison = np.zeros(mt.shape, dtype=bool)

    @classmethod
    def from_values(cls, name: str, mt: MemrefType, values) -> "Tensor":
        arr = np.asarray(values, dtype=object)
        if arr.shape != tuple(mt.shape):
            raise SimulationError(f"input for {name} has shape {arr.shape}, expected {tuple(mt.shape)}")
        t = cls(name, mt)
        width = mt.element.width
        t.data = np.vectorize(lambda x: wrap(int(x), width), otypes=[object])(arr)
        t.init[...] = True
        return t

    def in_bounds(self, index: tuple[int, ...]) -> bool:
        return len(index) == len(self.type.shape) and all(
            0 <= i < n for i, n in zip(index, self.type.shape))

    def locate(self, index: tuple[int, ...]) -> tuple[int, int]:
        dist, packed = self.type.split_index(index)
        return self.type.bank_number(dist), self.type.linear_address(packed)

    def to_list(self) -> list:
        width = self.type.element.width
        out = np.empty(self.type.shape, dtype=object)
        for idx in np.ndindex(*self.type.shape):
            ok = self.init[idx] and not self.poison[idx]
            out[idx] = to_signed(int(self.data[idx]), width) if ok else None
        return out.tolist()


@dataclass(frozen=True)
class MemBinding:
    tensor: Tensor
    port: str


class FunctionPlan:
    """Per-function lookups used while simulating: ops by schedule base, derived time ops."""

    def __init__(self, fn: Function, target: TargetModel):
        self.fn = fn
        self.by_base: dict[int, list[Operation]] = {}
        self.children: dict[int, list[Operation]] = {}
        self.ordinal: dict[int, int] = {}
        self.timing: dict[int, LoopTiming] = {}
        for i, op in enumerate(fn.walk()):
            self.ordinal[id(op)] = i
            if op.opcode is Opcode.TIME:
                self.children.setdefault(id(op.operands[0]), []).append(op)
            elif op.schedule is not None:
                self.by_base.setdefault(id(op.schedule.base), []).append(op)
            if op.is_loop:
                self.timing[id(op)] = loop_timing(op, target)
        self.return_op = fn.return_op()


class Frame:
    def __init__(self, plan: FunctionPlan, scope: str):
        self.plan = plan
        self.fn = plan.fn
        self.scope = scope
        self.allocs: dict[tuple, list[MemBinding]] = {}


class Activation:
    """Value bindings of one dynamic instance of a region."""

    def __init__(self, frame: Frame, region: Region, parent: Optional["Activation"],
                 key: tuple, scope: str):
        self.frame = frame
        self.region = region
        self.parent = parent
        self.key = key
        self.scope = scope
        self.env: dict[int, Slot] = {}
        self.loop: Optional[LoopRun] = None
        self.k = 0

    def lookup(self, v: Value) -> Optional[Slot]:
        act: Optional[Activation] = self
        while act is not None:
            slot = act.env.get(id(v))
            if slot is not None:
                return slot
            act = act.parent
        return None


@dataclass
class LoopRun:
    op: Operation
    act: Activation
    lb: int
    ub: int
    step: int
    timing: LoopTiming
    key: tuple


@dataclass
class SimState:
    cycle: int = 0
    queue: list = field(default_factory=list)
    seq: Any = field(default_factory=itertools.count)
    writes: list = field(default_factory=list)
    port_activity: dict = field(default_factory=dict)
    busy: dict = field(default_factory=dict)
    ub_events: list[UBEvent] = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)
    completion: Optional[int] = None
    outputs: list[Optional[Slot]] = field(default_factory=list)
    top: Optional[Activation] = None
    arg_tensors: dict[str, Tensor] = field(default_factory=dict)

    def push(self, cycle: int, action: "Action", priority: int = 1):
        heapq.heappush(self.queue, (cycle, priority, next(self.seq), action))

    def ub(self, kind: UBKind, op: Optional[Operation], details: str) -> UBEvent:
        event = UBEvent(kind=kind, cycle=self.cycle, location=str(op.location) if op else "",
                        details=details)
        self.ub_events.append(event)
        logger.debug("cycle %d: %s %s", self.cycle, kind.value, details)
        return event

    @property
    def finished(self) -> bool:
        return not self.queue


class Action:
    def run(self, sim: "Simulator", state: SimState, force: bool) -> bool:
        raise NotImplementedError


@dataclass(eq=False)
class OpAction(Action):
    act: Activation
    op: Operation

    def run(self, sim, state, force):
        return sim.execute(state, self.act, self.op, force)


@dataclass(eq=False)
class FireAction(Action):
    act: Activation
    tv: TimeVar
    loop_key: Optional[tuple] = None

    def run(self, sim, state, force):
        if self.loop_key is not None:
            state.busy.pop(self.loop_key, None)
        sim.fire(state, self.act, self.tv, state.cycle)
        return True


@dataclass(eq=False)
class ScriptWrite(Action):
    tensor: Tensor
    index: tuple[int, ...]
    data: int

    def run(self, sim, state, force):
        self.tensor.data[self.index] = wrap(self.data, self.tensor.type.element.width)
        self.tensor.init[self.index] = True
        self.tensor.poison[self.index] = False
        return True


@dataclass(eq=False)
class CaptureArg(Action):
    """Moves one call operand into the callee (or into an extern's argument list) on arrival."""
    act: Activation
    op: Operation
    index: int
    sink: Callable[[Slot], None]

    def run(self, sim, state, force):
        slot = sim.read(state, self.act, self.op, self.index, force)
        if slot is None:
            return False
        self.sink(slot)
        return True


@dataclass(eq=False)
class CaptureResult(Action):
    """Copies return operand `index` of a finished callee into `sink` at its signature delay."""
    callee: Activation
    index: int
    sink: Callable[[Slot], None]

    def run(self, sim, state, force):
        ret = self.callee.frame.plan.return_op
        slot = sim.read(state, self.callee, ret, self.index, force) if ret is not None else None
        if slot is None:
            if not force:
                return False
            slot = Slot(0, state.cycle, True)
        self.sink(slot)
        return True


@dataclass(eq=False)
class ExternCompute(Action):
    act: Activation
    op: Operation
    impl: Callable[..., Any]
    args: dict[int, Slot]
    start: int

    def run(self, sim, state, force):
        n = len(self.op.operands)
        if len(self.args) < n and not force:
            return False
        sig = self.op.attrs["signature"]
        values, poison = [], False
        for i in range(n):
            slot = self.args.get(i) or Slot(0, state.cycle, True)
            poison |= slot.poison
            values.append(_signed(slot.value, sig.args[i].type))
        out = self.impl(*values)
        outs = out if isinstance(out, tuple) else (out,)
        for r, port, value in zip(self.op.results, sig.results, outs):
            sim.bind(state, self.act, r, Slot(_fit(int(value), port.type), self.start + (port.delay or 0),
                                              poison))
        return True


class Simulator:
    def __init__(self, module: Module, externs: Optional[dict[str, Callable]] = None,
                 target: TargetModel = DEFAULT_TARGET, trace_values: Optional[set[str]] = None,
                 max_cycles: Optional[int] = None):
        self.module = module
        self.externs = {**BUILTIN_EXTERNS, **(externs or {})}
        self.target = target
        self.trace_values = {_bare(v) for v in (trace_values or ())}
        self.max_cycles = max_cycles
        self._plans: dict[str, FunctionPlan] = {}

    def plan(self, fn: Function) -> FunctionPlan:
        if fn.name not in self._plans:
            self._plans[fn.name] = FunctionPlan(fn, self.target)
        return self._plans[fn.name]

    # setup

    def start(self, top: str, inputs: Union[SimInputs, dict, None] = None) -> SimState:
        fn = self.module.get(top)
        if fn is None or fn.is_extern:
            raise SimulationError(f"no function @{top} to simulate")
        inputs = inputs if isinstance(inputs, SimInputs) else SimInputs.model_validate(inputs or {})
        state = SimState()
        frame = Frame(self.plan(fn), fn.name)
        act = Activation(frame, fn.body, None, (), fn.name)
        state.top = act
        for arg, port in zip(fn.args, fn.signature.args):
            if isinstance(arg.type, MemrefType):
                tensor = self._input_tensor(state, fn, arg, inputs)
                state.arg_tensors[_bare(arg.name)] = tensor
                act.env[id(arg)] = Slot(MemBinding(tensor, f"{fn.name}.{_bare(arg.name)}"), None)
                continue
            value = inputs.lookup(inputs.scalars, arg.name)
            if value is None:
                raise MissingInputError(f"missing scalar input {arg.name} for @{top}")
            self.bind(state, act, arg, Slot(_fit(int(value), arg.type), port.delay or 0))
        self.init_region(state, act)
        self.fire(state, act, fn.root, 0)
        state.outputs = [None] * len(fn.signature.results)
        for j, port in enumerate(fn.signature.results):
            state.push(port.delay or 0, CaptureResult(act, j, self._output_sink(state, j)))
        return state

    @staticmethod
    def _output_sink(state: SimState, j: int):
        def sink(slot: Slot):
            state.outputs[j] = slot
        return sink

    def _input_tensor(self, state: SimState, fn: Function, arg: Value, inputs: SimInputs) -> Tensor:
        mt: MemrefType = arg.type
        name = _bare(arg.name)
        values = inputs.lookup(inputs.tensors, arg.name)
        script = inputs.lookup(inputs.port_scripts, arg.name)
        if values is not None:
            tensor = Tensor.from_values(name, mt, values)
        else:
            tensor = Tensor(name, mt)
            if script is None and mt.port.can_read:
                raise MissingInputError(f"missing tensor input {arg.name} for @{fn.name}")
        for w in script or ():
            index = tuple(w.index)
            if not tensor.in_bounds(index):
                raise PortScriptError(f"port script for {arg.name} writes out of bounds at {list(index)}")
            state.push(w.cycle, ScriptWrite(tensor, index, w.data), priority=0)
        return tensor

    def init_region(self, state: SimState, act: Activation):
        """Bind constants and memories of a fresh activation."""
        pending = []
        for op in act.region.ops:
            if op.opcode is Opcode.CONSTANT:
                act.env[id(op.results[0])] = Slot(op.attrs["value"], None)
            elif op.opcode is Opcode.ALLOC:
                key = (act.key, act.frame.plan.ordinal[id(op)])
                if key not in act.frame.allocs:
                    # one tensor, one port per result
                    first = op.results[0]
                    tensor = Tensor(_bare(first.name), first.type)
                    act.frame.allocs[key] = [MemBinding(tensor, f"{act.scope}.{_bare(r.name)}")
                                             for r in op.results]
                for r, binding in zip(op.results, act.frame.allocs[key]):
                    act.env[id(r)] = Slot(binding, None)
            elif op.opcode in COMPUTE_OPS and op.schedule is None:
                pending.append(op)
        while pending:
            left = []
            for op in pending:
                slots = [act.lookup(v) for v in op.operands]
                if any(s is None for s in slots):
                    left.append(op)
                    continue
                value = self.compute(op, [s.value for s in slots])
                act.env[id(op.results[0])] = Slot(value, None)
            if len(left) == len(pending):
                raise SimulationError(f"cannot evaluate constant {left[0].results[0].name}")
            pending = left

    # events

    def fire(self, state: SimState, act: Activation, tv: TimeVar, cycle: int):
        state.trace.pulse(cycle, f"{act.scope}.{_bare(tv.name)}")
        plan = act.frame.plan
        for op in plan.by_base.get(id(tv), ()):
            state.push(cycle + op.schedule.offset, OpAction(act, op))
        for top in plan.children.get(id(tv), ()):
            self.fire(state, act, top.results[0], cycle + top.attrs["offset"])

    def bind(self, state: SimState, act: Activation, v: Value, slot: Slot):
        act.env[id(v)] = slot
        if _bare(v.name) in self.trace_values and isinstance(v.type, (IntType, ConstType)):
            width = v.type.width if isinstance(v.type, IntType) else 32
            state.trace.sample(slot.valid if slot.valid is not None else state.cycle,
                               f"{act.scope}.{_bare(v.name)}", width,
                               None if slot.poison else wrap(slot.value, width))

    def read(self, state: SimState, act: Activation, op: Operation, i: int, force: bool) -> Optional[Slot]:
        v = op.operands[i]
        slot = act.lookup(v)
        if slot is None:
            if not force:
                return None
            state.ub(UBKind.TIMING_VIOLATION, op, f"{v.name} is not available at cycle {state.cycle}")
            return Slot(0, state.cycle, True)
        if slot.valid is not None and slot.valid != state.cycle:
            state.ub(UBKind.TIMING_VIOLATION, op,
                     f"{v.name} is valid at cycle {slot.valid} but read at cycle {state.cycle}")
            return Slot(slot.value, state.cycle, True)
        return slot

    # execution

    @staticmethod
    def compute(op: Operation, args: list[int]) -> int:
        ty = op.results[0].type
        code = op.opcode
        if code is Opcode.BIT_SLICE:
            hi, lo = op.attrs["hi"], op.attrs["lo"]
            return _fit((args[0] >> lo) & ((1 << (hi - lo + 1)) - 1), ty)
        if code is Opcode.SELECT:
            return _fit(args[1] if args[0] != 0 else args[2], ty)
        a, b = (_fit(x, ty) for x in args)
        if code is Opcode.ADD:
            return _fit(a + b, ty)
        if code is Opcode.SUB:
            return _fit(a - b, ty)
        return _fit(a * b, ty)

    def execute(self, state: SimState, act: Activation, op: Operation, force: bool) -> bool:
        code = op.opcode
        now = state.cycle
        if code is Opcode.YIELD:
            self.on_yield(state, act)
            return True
        if code is Opcode.RETURN:
            if act is state.top:
                state.completion = now
            state.trace.pulse(now, f"{act.scope}.return")
            return True
        if code is Opcode.CALL:
            self.call(state, act, op)
            return True
        if code is Opcode.MEM_READ:
            needed = range(1, len(op.operands))
        elif code is Opcode.MEM_WRITE:
            needed = [0, *range(2, len(op.operands))]
        elif op.is_loop:
            needed = range(3)
        else:
            needed = range(len(op.operands))
        slots: dict[int, Slot] = {}
        for i in needed:
            slot = self.read(state, act, op, i, force)
            if slot is None:
                return False
            slots[i] = slot
        if op.is_loop:
            self.start_loop(state, act, op, slots)
        elif code in COMPUTE_OPS:
            vals = [slots[i].value for i in range(len(op.operands))]
            if code is Opcode.SELECT:
                chosen = 1 if vals[0] != 0 else 2
                poison = slots[0].poison or slots[chosen].poison
            else:
                poison = any(s.poison for s in slots.values())
            self.bind(state, act, op.results[0], Slot(self.compute(op, vals), now, poison))
        elif code is Opcode.DELAY:
            src = slots[0]
            self.bind(state, act, op.results[0], Slot(src.value, now + op.attrs["by"], src.poison))
        elif code is Opcode.MEM_READ:
            self.mem_read(state, act, op, slots)
        elif code is Opcode.MEM_WRITE:
            self.mem_write(state, act, op, slots)
        else:
            raise SimulationError(f"cannot execute {code.value}")
        return True

    def _access(self, state: SimState, act: Activation, op: Operation, slots: dict[int, Slot],
                first: int, kind: str, data: Optional[int] = None):
        binding: MemBinding = act.lookup(op.memref).value
        tensor = binding.tensor
        index = tuple(int(slots[i].value) for i in range(first, len(op.operands)))
        if not tensor.in_bounds(index):
            state.ub(UBKind.OUT_OF_BOUNDS, op, f"{op.memref.name}{list(index)} outside {list(tensor.type.shape)}")
            return tensor, None
        bank, address = tensor.locate(index)
        state.port_activity.setdefault((binding.port, bank), []).append((address, op))
        state.trace.transaction(state.cycle, binding.port, kind, bank, address, data)
        return tensor, index

    def mem_read(self, state: SimState, act: Activation, op: Operation, slots: dict[int, Slot]):
        tensor, index = self._access(state, act, op, slots, 1, "read")
        ready = state.cycle + latency_of(op, self.target)
        poison = any(s.poison for s in slots.values())
        if index is None:
            self.bind(state, act, op.results[0], Slot(0, ready, True))
            return
        if not tensor.init[index]:
            state.ub(UBKind.UNINITIALIZED_READ, op, f"{op.memref.name}{list(index)} was never written")
            poison = True
        poison = poison or bool(tensor.poison[index])
        self.bind(state, act, op.results[0], Slot(int(tensor.data[index]), ready, poison))

    def mem_write(self, state: SimState, act: Activation, op: Operation, slots: dict[int, Slot]):
        mt: MemrefType = op.memref.type
        value = wrap(int(slots[0].value), mt.element.width)
        tensor, index = self._access(state, act, op, slots, 2, "write", value)
        if index is None:
            return
        poison = any(s.poison for s in slots.values())
        state.writes.append((tensor, index, value, poison))

    # loops

    def check_loop_reentry(self, state: SimState, key: tuple, op: Operation) -> Optional[UBEvent]:
        if key in state.busy:
            return state.ub(UBKind.LOOP_REENTRY, op,
                            f"loop {op.iv.name} restarted before its previous activation completed")
        return None

    def start_loop(self, state: SimState, act: Activation, op: Operation, slots: dict[int, Slot]):
        bounds = [_signed(slots[i].value, op.operands[i].type) for i in range(3)]
        lb, ub, step = bounds
        key = (act.key, act.frame.plan.ordinal[id(op)])
        self.check_loop_reentry(state, key, op)
        state.busy[key] = state.cycle
        run = LoopRun(op, act, lb, ub, step, act.frame.plan.timing[id(op)], key)
        if lb > ub or step <= 0:
            state.ub(UBKind.BOUND_INVERSION, op, f"loop {op.iv.name} has lb={lb}, ub={ub}, step={step}")
        if lb < ub and step > 0:
            self.begin_iteration(state, run, 0, state.cycle)
        else:
            self.finish_loop(state, run, state.cycle)

    def begin_iteration(self, state: SimState, run: LoopRun, k: int, cycle: int):
        op = run.op
        value = run.lb + k * run.step
        parent = run.act
        if op.opcode is Opcode.UNROLL_FOR:
            key = parent.key + (parent.frame.plan.ordinal[id(op)], k)
            scope = f"{parent.scope}.{_bare(op.iv.name)}_{k}"
        else:
            key, scope = parent.key, parent.scope
        body = Activation(parent.frame, op.body, parent, key, scope)
        body.loop, body.k = run, k
        iv = op.iv
        self.bind(state, body, iv, Slot(value, None) if iv.is_const else Slot(_fit(value, iv.type), cycle))
        for acc, (init, inc) in zip(op.accums, op.attrs.get("accums", ())):
            self.bind(state, body, acc, Slot(_fit(init + k * inc, acc.type), cycle))
        self.init_region(state, body)
        self.fire(state, body, op.body.root, cycle)

    def on_yield(self, state: SimState, act: Activation):
        run = act.loop
        if run.lb + (act.k + 1) * run.step < run.ub:
            self.begin_iteration(state, run, act.k + 1, state.cycle)
        else:
            self.finish_loop(state, run, state.cycle)

    def finish_loop(self, state: SimState, run: LoopRun, guard_cycle: int):
        state.push(guard_cycle + run.timing.drain, FireAction(run.act, run.op.tend, run.key))

    # calls

    def call(self, state: SimState, act: Activation, op: Operation):
        callee = self.module.get(op.attrs["callee"])
        if callee is None:
            raise SimulationError(f"call to unknown function @{op.attrs['callee']}")
        sig = callee.signature
        now = state.cycle
        ordinal = act.frame.plan.ordinal[id(op)]
        if callee.is_extern:
            impl = self.externs.get(callee.name)
            if impl is None:
                raise SimulationError(f"no simulation model registered for extern @{callee.name}")
            arrive = max((p.delay or 0 for p in sig.args), default=0)
            if any((p.delay or 0) < arrive for p in sig.results):
                raise SimulationError(f"extern @{callee.name} produces a result before its inputs arrive")
            args: dict[int, Slot] = {}
            for i, port in enumerate(sig.args):
                state.push(now + (port.delay or 0), CaptureArg(act, op, i, self._arg_sink(args, i)))
            state.push(now + arrive, ExternCompute(act, op, impl, args, now), priority=2)
            return
        frame = Frame(self.plan(callee), f"{act.scope}.{callee.name}_{ordinal}")
        inner = Activation(frame, callee.body, None, act.key + (ordinal,), frame.scope)
        for i, (formal, port) in enumerate(zip(callee.args, sig.args)):
            if isinstance(formal.type, MemrefType):
                inner.env[id(formal)] = act.lookup(op.operands[i])
            else:
                state.push(now + (port.delay or 0),
                           CaptureArg(act, op, i, self._formal_sink(state, inner, formal)))
        self.init_region(state, inner)
        self.fire(state, inner, callee.root, now)
        for j, (r, port) in enumerate(zip(op.results, sig.results)):
            state.push(now + (port.delay or 0), CaptureResult(inner, j, self._result_sink(state, act, r)))

    @staticmethod
    def _arg_sink(args: dict[int, Slot], i: int):
        def sink(slot: Slot):
            args[i] = slot
        return sink

    def _formal_sink(self, state: SimState, inner: Activation, formal: Value):
        def sink(slot: Slot):
            self.bind(state, inner, formal, Slot(_fit(int(slot.value), formal.type), state.cycle, slot.poison))
        return sink

    def _result_sink(self, state: SimState, act: Activation, r: Value):
        def sink(slot: Slot):
            self.bind(state, act, r, Slot(_fit(int(slot.value), r.type), state.cycle, slot.poison))
        return sink

    # clock

    def _due(self, state: SimState) -> list[Action]:
        out = []
        while state.queue and state.queue[0][0] <= state.cycle:
            out.append(heapq.heappop(state.queue)[3])
        return out

    def step(self, state: SimState) -> SimState:
        """Run every activation due in the current cycle, commit writes and advance one cycle."""
        ready = self._due(state)
        while ready:
            waiting, progress = [], False
            for action in ready:
                if action.run(self, state, False):
                    progress = True
                else:
                    waiting.append(action)
            new = self._due(state)
            if not progress and not new:
                waiting[0].run(self, state, True)
                waiting = waiting[1:]
            ready = waiting + new
        for (port, bank), accesses in state.port_activity.items():
            if len({addr for addr, _ in accesses}) > 1:
                state.ub(UBKind.PORT_CONFLICT, accesses[1][1],
                         f"{len(accesses)} transactions on {port} bank {bank} in one cycle")
        state.port_activity = {}
        for tensor, index, value, poison in state.writes:
            tensor.data[index] = value
            tensor.init[index] = True
            tensor.poison[index] = poison
        state.writes = []
        state.cycle += 1
        return state

    def run(self, top: str, inputs: Union[SimInputs, dict, None] = None) -> SimResult:
        inputs = inputs if isinstance(inputs, SimInputs) else SimInputs.model_validate(inputs or {})
        limit = self.max_cycles or inputs.max_cycles or get_settings().MAX_CYCLES
        state = self.start(top, inputs)
        timed_out = False
        while state.queue:
            nxt = state.queue[0][0]
            if nxt > limit:
                timed_out = True
                break
            state.cycle = max(state.cycle, nxt)
            self.step(state)
        fn = self.module.get(top)
        outputs = []
        for slot, port in zip(state.outputs, fn.signature.results):
            outputs.append(None if slot is None or slot.poison else _signed(slot.value, port.type))
        result = SimResult(
            top=top, outputs=outputs,
            tensors={name: t.to_list() for name, t in state.arg_tensors.items()},
            completion_cycle=state.completion, cycles=state.cycle, timed_out=timed_out,
            ub_events=state.ub_events, trace=state.trace)
        logger.info("simulated @%s: completion %s, %d UB events", top, state.completion,
                    len(state.ub_events))
        return result


def run(module: Module, top: str, inputs: Union[SimInputs, dict, None] = None,
        max_cycles: Optional[int] = None, **kwargs) -> SimResult:
    return Simulator(module, max_cycles=max_cycles, **kwargs).run(top, inputs)
