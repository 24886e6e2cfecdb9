"""Schedule verification.

Every primitive value is valid at exactly one instant. The checks here compare that
instant against each use, look for uses of iteration-anchored values after the next
iteration has begun, align call operands with callee signature delays and look for
same-cycle collisions on memref ports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Optional, Union

from hirc.core.diagnostics import Diagnostic, ErrorClass, Severity, error, warning
from hirc.core.errors import TimeResolutionError
from hirc.ir.ops import (COMPUTE_OPS, Function, Module, Opcode, Operation, Region, TimeExpr,
                         TimeVar, Value, const_value)
from hirc.ir.timing import (DEFAULT_TARGET, CanonicalInstant, LoopTiming, TargetModel,
                            comparable, loop_timing, resolve_time, result_latency)
from hirc.ir.types import MemrefType, TimeType

logger = logging.getLogger(__name__)


class ValidityMap:
    """The canonical instant at which each primitive SSA value of a function is valid."""

    def __init__(self, fn: Function, target: TargetModel = DEFAULT_TARGET):
        self.fn = fn
        self._valid: dict[int, CanonicalInstant] = {}
        root = fn.root
        for v, port in zip(fn.args, fn.signature.args):
            if self._tracked(v):
                self._valid[id(v)] = TimeExpr(root, port.delay or 0)
        for op in fn.walk():
            for reg in op.regions:
                for a in reg.args:
                    if self._tracked(a):
                        self._valid[id(a)] = TimeExpr(reg.root, 0)
            if op.schedule is None:
                continue
            try:
                start = resolve_time(op.schedule)
            except TimeResolutionError:
                continue
            for i, r in enumerate(op.results):
                if self._tracked(r):
                    self._valid[id(r)] = start.shifted(result_latency(op, i, target))

    @staticmethod
    def _tracked(v: Value) -> bool:
        return not (v.is_const or isinstance(v.type, (MemrefType, TimeType)))

    def get(self, v: Value) -> Optional[CanonicalInstant]:
        return self._valid.get(id(v))

    def __contains__(self, v: Value) -> bool:
        return id(v) in self._valid

    def __len__(self) -> int:
        return len(self._valid)


class LoopTimingSummary:
    """Static timing of every loop of a function, addressable by loop op or by iteration root."""

    def __init__(self, fn: Function, target: TargetModel = DEFAULT_TARGET):
        self.by_loop: dict[Operation, LoopTiming] = {}
        self.by_root: dict[int, Operation] = {}
        for op in fn.walk():
            if op.is_loop:
                self.by_loop[op] = loop_timing(op, target)
                self.by_root[id(op.body.root)] = op

    def loop_of_root(self, tv: TimeVar) -> Optional[Operation]:
        return self.by_root.get(id(tv))

    def timing(self, op: Operation) -> LoopTiming:
        return self.by_loop[op]


@dataclass(frozen=True)
class _Use:
    op: Operation
    index: int
    value: Value
    at: CanonicalInstant


def _data_operands(op: Operation) -> range:
    code = op.opcode
    if code is Opcode.MEM_READ:
        return range(1, len(op.operands))
    if code is Opcode.MEM_WRITE:
        return range(len(op.operands))
    if code in COMPUTE_OPS or code is Opcode.DELAY:
        return range(len(op.operands))
    if op.is_loop:
        return range(3)
    return range(0)


def iter_uses(fn: Function) -> Iterator[_Use]:
    """Every timed operand use of `fn` with the instant at which the operand must be valid."""
    for op in fn.walk():
        if op.schedule is None:
            continue
        try:
            u = resolve_time(op.schedule)
        except TimeResolutionError:
            continue
        if op.opcode is Opcode.CALL:
            for i, (v, port) in enumerate(zip(op.operands, op.attrs["signature"].args)):
                if not isinstance(port.type, MemrefType) and port.delay is not None:
                    yield _Use(op, i, v, u.shifted(port.delay))
        elif op.opcode is Opcode.RETURN:
            for i, (v, port) in enumerate(zip(op.operands, fn.signature.results)):
                yield _Use(op, i, v, TimeExpr(fn.root, port.delay or 0))
        else:
            for i in _data_operands(op):
                if op.opcode is Opcode.MEM_WRITE and i == 1:
                    continue
                yield _Use(op, i, op.operands[i], u)


class _Classifier:
    def __init__(self, fn: Function, target: TargetModel = DEFAULT_TARGET):
        self.fn = fn
        self.validity = ValidityMap(fn, target)
        self.loops = LoopTimingSummary(fn, target)

    def anchored_loop(self, d: CanonicalInstant) -> Optional[Operation]:
        if d.offset != 0:
            return None
        return self.loops.loop_of_root(d.base)

    def classify(self, use: _Use) -> list[Diagnostic]:
        d = self.validity.get(use.value)
        if d is None:
            return []
        u = use.at
        loc = use.op.operand_span(use.index)
        name = use.value.name
        if not comparable(d, u):
            return [error(ErrorClass.TIMING_MISMATCH, loc,
                          f"{name} is valid at {d}, which is not in the time domain of its use at {u}")]
        if d.offset == u.offset:
            return []
        diags: list[Diagnostic] = []
        loop = self.anchored_loop(d)
        if loop is not None and u.offset > 0:
            ii = self.loops.timing(loop).ii
            if ii is not None and u.offset >= ii:
                return [error(ErrorClass.STALE_ITERATION_VALUE, loc,
                              f"{name} is used at {u} but the next iteration starts at "
                              f"{d.base.name} offset {ii} (initiation interval {ii}); "
                              f"the value has already been overwritten")]
            if ii is None:
                diags.append(warning(ErrorClass.STALE_ITERATION_VALUE, loc,
                                     f"{name} is used at {u}; with a variable initiation interval "
                                     f"it may belong to a later iteration"))
        owner = use.value.owner
        if use.op.opcode is Opcode.CALL or (owner is not None and owner.opcode is Opcode.CALL):
            diags.append(error(ErrorClass.PIPELINE_IMBALANCE, loc,
                               f"{name} arrives at {d} but is consumed at {u}"))
            return diags
        gap = u.offset - d.offset
        hint = f"insert delay by {gap}" if gap > 0 else f"it is used {-gap} cycles before it is valid"
        diags.append(error(ErrorClass.TIMING_MISMATCH, loc, f"{name} is valid at {d} but used at {u}; {hint}"))
        return diags

    def all(self) -> list[Diagnostic]:
        out: list[Diagnostic] = []
        for use in iter_uses(self.fn):
            out.extend(self.classify(use))
        return out


def _select(diags: list[Diagnostic], *classes: ErrorClass) -> list[Diagnostic]:
    return [d for d in diags if d.error_class in classes]


def check_value_timing(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    return _select(_Classifier(fn, target).all(), ErrorClass.TIMING_MISMATCH)


def check_loop_staleness(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    clf = _Classifier(fn, target)
    diags = _select(clf.all(), ErrorClass.STALE_ITERATION_VALUE)
    for op in fn.walk():
        if op.opcode is not Opcode.DELAY or op.schedule is None:
            continue
        d = clf.validity.get(op.operands[0])
        loop = clf.anchored_loop(d) if d is not None else None
        if loop is None:
            continue
        ii = clf.loops.timing(loop).ii
        u = resolve_time(op.schedule)
        if ii is not None and comparable(d, u) and u.offset == d.offset and u.offset + op.attrs["by"] >= ii:
            diags.append(warning(ErrorClass.CROSS_ITERATION_VALUE, op.location,
                                 f"{op.operands[0].name} is carried by a delay of {op.attrs['by']} "
                                 f"past the start of the next iteration"))
    return diags


def check_call_alignment(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    return _select(_Classifier(fn, target).all(), ErrorClass.PIPELINE_IMBALANCE)


# memref port conflicts

IndexKey = Union[int, Value]


@dataclass(frozen=True)
class AccessInstance:
    """One hardware copy of a memory access, with unroll copies lifted to the enclosing root."""
    op: Operation
    memref: Value
    at: CanonicalInstant
    banks: tuple[IndexKey, ...]
    address: tuple[IndexKey, ...]
    domain: tuple[int, ...] = ()


def _key(v: Value, env: dict[int, int]) -> IndexKey:
    if id(v) in env:
        return env[id(v)]
    c = const_value(v)
    return c if c is not None else v


def _same(a: IndexKey, b: IndexKey) -> bool:
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    return a is b


def _differ(a: IndexKey, b: IndexKey) -> bool:
    return isinstance(a, int) and isinstance(b, int) and a != b


def collect_accesses(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[AccessInstance]:
    out: list[AccessInstance] = []

    def visit(region: Region, shift: Optional[tuple[TimeVar, int]], env: dict[int, int],
              copy: tuple[int, ...], domain: tuple[int, ...]):
        for op in region.ops:
            if op.opcode in (Opcode.MEM_READ, Opcode.MEM_WRITE) and op.schedule is not None \
                    and isinstance(op.memref.type, MemrefType):
                at = _lift(resolve_time(op.schedule), region, shift)
                mt: MemrefType = op.memref.type
                keys = tuple(_key(v, env) for v in op.indices)
                dist, packed = mt.split_index(keys)
                out.append(AccessInstance(op, op.memref, at, dist, packed, domain))
            elif op.opcode is Opcode.UNROLL_FOR:
                timing = loop_timing(op, target)
                bounds = [const_value(v) for v in op.operands[:3]]
                if timing.ii is None or None in bounds or op.schedule is None or bounds[2] <= 0:
                    visit(op.body, None, env, copy, copy)
                    continue
                start = _lift(resolve_time(op.schedule), region, shift)
                for k, value in enumerate(range(*bounds)):
                    visit(op.body, (start.base, start.offset + k * timing.ii),
                          {**env, id(op.iv): value}, copy + (k,), domain)
            else:
                for reg in op.regions:
                    visit(reg, None, env, copy, copy)

    def _lift(at: CanonicalInstant, region: Region, shift) -> CanonicalInstant:
        if shift is not None and at.base is region.root:
            return TimeExpr(shift[0], shift[1] + at.offset)
        return at

    if fn.body is not None:
        visit(fn.body, None, {}, (), ())
    return out


def check_memref_conflicts(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    loops = LoopTimingSummary(fn, target)
    accesses = collect_accesses(fn, target)
    diags: list[Diagnostic] = []
    for a, b in combinations(accesses, 2):
        if a.memref is not b.memref or a.domain != b.domain or not comparable(a.at, b.at):
            continue
        if any(_differ(x, y) for x, y in zip(a.banks, b.banks)):
            continue
        related = (b.op.location,) if b.op.location else ()
        name = a.memref.name
        if a.at.offset == b.at.offset:
            if all(_same(x, y) for x, y in zip(a.address, b.address)) and \
                    all(_same(x, y) for x, y in zip(a.banks, b.banks)):
                continue
            if any(_differ(x, y) for x, y in zip(a.address, b.address)):
                diags.append(error(ErrorClass.PORT_CONFLICT, a.op.location,
                                   f"two accesses to {name} at {a.at} use different addresses "
                                   f"of the same bank", related))
            else:
                diags.append(warning(ErrorClass.PORT_CONFLICT_POSSIBLE, a.op.location,
                                     f"accesses to {name} at {a.at} may collide; "
                                     f"runtime assertion will guard this", related))
            continue
        loop = loops.loop_of_root(a.at.base)
        if loop is None or loop.opcode is not Opcode.FOR:
            continue
        ii = loops.timing(loop).ii
        if ii and (a.at.offset - b.at.offset) % ii == 0:
            diags.append(warning(ErrorClass.PORT_CONFLICT_POSSIBLE, a.op.location,
                                 f"accesses to {name} at offsets {a.at.offset} and {b.at.offset} "
                                 f"collide across iterations (initiation interval {ii})", related))
    return diags


def verify(fn: Function, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    """All schedule checks of one function, in a fixed order."""
    if fn.is_extern:
        return []
    clf = _Classifier(fn, target)
    uses = clf.all()
    diags = _select(uses, ErrorClass.TIMING_MISMATCH)
    diags += check_loop_staleness(fn, target)
    diags += _select(uses, ErrorClass.PIPELINE_IMBALANCE)
    diags += check_memref_conflicts(fn, target)
    logger.debug("verified @%s: %d diagnostics", fn.name, len(diags))
    return diags


def verify_module(module: Module, target: TargetModel = DEFAULT_TARGET) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for fn in module:
        diags.extend(verify(fn, target))
    errors = sum(1 for d in diags if d.severity is Severity.ERROR)
    logger.info("verified %s: %d errors, %d warnings", module.filename, errors, len(diags) - errors)
    return diags
