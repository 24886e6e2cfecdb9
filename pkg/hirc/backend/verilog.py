"""Lowering of schedule-valid IR to synthesizable Verilog-2001.

Every time variable becomes a one-bit event pulse. A root pulse (function start, loop
iteration, loop completion without a static schedule) drives a shift register of pulses
and every other instant is a tap of it. Loops get a counter-based controller; unrolled
loops are replicated with their copies started from taps of the loop start.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from hirc.backend.memref import Access, address_expr, address_width, lower_memref, site_bank
from hirc.backend.plan import (AssertionSpec, EventWire, FunctionLowering, LoopController, LoweringPlan,
                               OpGate, ResourceReport, ShiftChain, StorageBinding, audit_event_algebra)
from hirc.core.config import get_settings
from hirc.core.diagnostics import ErrorClass, error, has_errors
from hirc.core.errors import LoweringError
from hirc.ir.ops import COMPUTE_OPS, Function, Module, Opcode, Operation, Region, TimeExpr, TimeVar, Value
from hirc.ir.timing import DEFAULT_TARGET, TargetModel, loop_timing, resolve_time
from hirc.ir.types import IntType, MemrefType, wrap
from hirc.opt.passes import fold
from hirc.verify.verifier import verify_module

logger = logging.getLogger(__name__)

_IDENT = re.compile(r"[^A-Za-z0-9_]")


def _ident(name: str) -> str:
    return _IDENT.sub("_", name.lstrip("%@"))


def _range(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def _width(ty) -> int:
    return ty.width if isinstance(ty, IntType) else 32


def _loc(span) -> str:
    return str(span) if span is not None else "<generated>"


class _Verilog:
    """Text of one Verilog module, collected in sections and rendered in order."""

    def __init__(self, name: str):
        self.name = name
        self.ports: list[str] = []
        self.decls: list[str] = []
        self.stmts: list[str] = []

    def port(self, direction: str, width: int, name: str):
        self.ports.append(f"{direction} {_range(width)}{name}")

    def decl(self, kind: str, width: int, name: str, words: Optional[int] = None, attr: str = ""):
        array = f" [0:{words - 1}]" if words is not None else ""
        prefix = f"(* {attr} *) " if attr else ""
        self.decls.append(f"  {prefix}{kind} {_range(width)}{name}{array};")

    def assign(self, name: str, expr: str, loc: str):
        self.stmts.append(f"  // {loc}")
        self.stmts.append(f"  assign {name} = {expr};")

    def wire(self, name: str, width: int, expr: str, loc: str):
        self.decl("wire", width, name)
        self.assign(name, expr, loc)

    def always(self, body: list[str], loc: str, reset: Optional[list[str]] = None):
        self.stmts.append(f"  // {loc}")
        self.stmts.append("  always @(posedge clk) begin")
        if reset:
            self.stmts.append("    if (rst) begin")
            self.stmts.extend(f"      {line}" for line in reset)
            self.stmts.append("    end else begin")
            self.stmts.extend(f"      {line}" for line in body)
            self.stmts.append("    end")
        else:
            self.stmts.extend(f"    {line}" for line in body)
        self.stmts.append("  end")


@dataclass
class _Site:
    kind: str  # "read" | "write" | "call"
    rd: str
    wr: str
    addr: str
    data: Optional[str]
    loc: str
    span: object = None


@dataclass
class _Bus:
    name: str
    mt: MemrefType
    external: bool
    tensor: Optional[str] = None
    sites: dict[int, list[_Site]] = field(default_factory=dict)

    def sig(self, what: str, bank: int) -> str:
        return f"{self.name}_{what}_b{bank}"


def _site_kind(site: _Site, bus: _Bus) -> str:
    """Calls access a tensor through the port they were handed."""
    if site.kind != "call":
        return site.kind
    return "read" if bus.mt.port.can_read else "write"


@dataclass
class _Ctx:
    """Names visible in one hardware copy of a region."""
    suffix: str
    parent: Optional["_Ctx"] = None
    names: dict[int, str] = field(default_factory=dict)
    consts: dict[int, int] = field(default_factory=dict)
    roots: dict[int, str] = field(default_factory=dict)
    buses: dict[int, _Bus] = field(default_factory=dict)

    def find(self, table: str, v) -> Optional[object]:
        ctx: Optional[_Ctx] = self
        while ctx is not None:
            found = getattr(ctx, table).get(id(v))
            if found is not None:
                return found
            ctx = ctx.parent
        return None


@dataclass
class _Tensor:
    name: str
    mt: MemrefType
    buses: list[_Bus]
    span: object


class _FunctionLowerer:
    def __init__(self, module: Module, fn: Function, ram_style: str, port_limit: int,
                 gated_chains: bool, target: TargetModel):
        self.module = module
        self.fn = fn
        self.ram_style = ram_style
        self.port_limit = port_limit
        self.gated_chains = gated_chains
        self.target = target
        self.v = _Verilog(fn.name)
        self.plan = FunctionLowering(name=fn.name)
        self.index = {id(op): i for i, op in enumerate(fn.walk())}
        self.chain_depth: dict[str, int] = {}
        self.buses: list[_Bus] = []
        self.tensors: list[_Tensor] = []
        self.shadow: list[str] = []

    # events

    def tap(self, ctx: _Ctx, at: Union[TimeExpr, TimeVar]) -> str:
        c = resolve_time(at)
        root = ctx.find("roots", c.base)
        if root is None:
            raise LoweringError(f"no event wire for {c.base.name}",
                                [error(ErrorClass.INTERNAL, None, f"@{self.fn.name}: event wire for "
                                                                  f"{c.base.name} is missing")])
        if c.offset == 0:
            return root
        self.chain_depth[root] = max(self.chain_depth.get(root, 0), c.offset)
        return f"{root}_sr[{c.offset}]"

    def gate(self, ctx: _Ctx, op: Operation) -> str:
        c = resolve_time(op.schedule)
        self.plan.gates.append(OpGate(op_index=self.index[id(op)], copy_path=ctx.suffix,
                                      root=c.base.name, depth=c.offset))
        return self.tap(ctx, op.schedule)

    def event(self, ctx: _Ctx, tv: TimeVar, wire: str):
        c = resolve_time(tv)
        self.plan.events.append(EventWire(time_var=tv.name, copy_path=ctx.suffix, root=c.base.name,
                                          depth=c.offset, wire=wire))

    def new_root(self, ctx: _Ctx, tv: TimeVar, expr: str, loc: str) -> str:
        wire = f"ev_{_ident(tv.name)}{ctx.suffix}"
        self.v.wire(wire, 1, expr, loc)
        ctx.roots[id(tv)] = wire
        self.event(ctx, tv, wire)
        return wire

    # values

    def operand(self, ctx: _Ctx, v: Value, width: int) -> str:
        c = ctx.find("consts", v)
        if c is not None:
            return f"{width}'d{wrap(c, width)}"
        name = ctx.find("names", v)
        if name is None:
            raise LoweringError(f"value {v.name} has no hardware signal",
                                [error(ErrorClass.INTERNAL, v.span, f"{v.name} was not lowered")])
        return name

    def value_name(self, ctx: _Ctx, v: Value) -> str:
        name = f"v_{_ident(v.name)}{ctx.suffix}"
        ctx.names[id(v)] = name
        return name

    def count(self, op: Operation):
        self.plan.arithmetic[op.opcode.value] = self.plan.arithmetic.get(op.opcode.value, 0) + 1

    def assertion(self, kind: str, condition: str, message: str, loc: str):
        self.plan.assertions.append(AssertionSpec(kind=kind, condition=condition, message=message,
                                                  location=loc))

    # module

    def lower(self) -> tuple[str, FunctionLowering]:
        fn = self.fn
        loc = _loc(fn.location)
        v = self.v
        ctx = _Ctx("")
        v.port("input", 1, "clk")
        v.port("input", 1, "rst")
        v.port("input", 1, "start")
        v.port("output", 1, "done")
        self.new_root(ctx, fn.root, "start", loc)
        for arg in fn.args:
            if isinstance(arg.type, MemrefType):
                bus = _Bus(_ident(arg.name), arg.type, external=True)
                ctx.buses[id(arg)] = bus
                self.buses.append(bus)
                self.plan.memories.append(lower_memref(arg.type, (), bus.name, [bus.name], external=True,
                                                       location=arg.span))
            else:
                name = f"arg_{_ident(arg.name)}"
                v.port("input", _width(arg.type), name)
                ctx.names[id(arg)] = name
        for j, port in enumerate(fn.signature.results):
            v.port("output", _width(port.type), f"out{j}")
        self.region(ctx, fn.body)
        self.finish_memories()
        self.finish_events()
        return self.render(), self.plan

    def region(self, ctx: _Ctx, region: Region):
        for op in region.ops:
            self.op(ctx, op)

    def op(self, ctx: _Ctx, op: Operation):
        code = op.opcode
        loc = _loc(op.location)
        if code is Opcode.CONSTANT:
            ctx.consts[id(op.results[0])] = op.attrs["value"]
        elif code is Opcode.TIME:
            tv = op.results[0]
            wire = f"ev_{_ident(tv.name)}{ctx.suffix}"
            self.v.wire(wire, 1, self.tap(ctx, tv), loc)
            self.event(ctx, tv, wire)
        elif code is Opcode.ALLOC:
            self.alloc(ctx, op)
        elif code in COMPUTE_OPS:
            self.compute(ctx, op, loc)
        elif code is Opcode.DELAY:
            self.delay(ctx, op, loc)
        elif code is Opcode.MEM_READ or code is Opcode.MEM_WRITE:
            self.access(ctx, op, loc)
        elif code is Opcode.CALL:
            self.call(ctx, op, loc)
        elif code is Opcode.FOR:
            self.for_loop(ctx, op, loc)
        elif code is Opcode.UNROLL_FOR:
            self.unroll(ctx, op, loc)
        elif code is Opcode.RETURN:
            self.ret(ctx, op, loc)
        elif code is Opcode.YIELD:
            self.gate(ctx, op)

    def compute(self, ctx: _Ctx, op: Operation, loc: str):
        res = op.results[0]
        consts = [ctx.find("consts", x) for x in op.operands]
        if all(c is not None for c in consts):
            ctx.consts[id(res)] = fold(op, consts)
            return
        width = _width(res.type)
        self.gate(ctx, op)
        args = [self.operand(ctx, x, width) for x in op.operands]
        code = op.opcode
        if code is Opcode.BIT_SLICE:
            expr = f"{args[0]}[{op.attrs['hi']}:{op.attrs['lo']}]"
        elif code is Opcode.SELECT:
            cond = self.operand(ctx, op.operands[0], _width(op.operands[0].type))
            expr = f"({cond} != 0) ? {args[1]} : {args[2]}"
        else:
            sym = {Opcode.ADD: "+", Opcode.SUB: "-", Opcode.MULT: "*"}[code]
            expr = f"{args[0]} {sym} {args[1]}"
        self.count(op)
        self.v.wire(self.value_name(ctx, res), width, expr, loc)

    def delay(self, ctx: _Ctx, op: Operation, loc: str):
        src, res = op.operands[0], op.results[0]
        c = ctx.find("consts", src)
        if c is not None:
            ctx.consts[id(res)] = c
            return
        depth = op.attrs["by"]
        width = _width(res.type)
        name = self.value_name(ctx, res)
        prev = self.operand(ctx, src, width)
        self.gate(ctx, op)
        if depth == 0:
            self.v.wire(name, width, prev, loc)
            return
        body = []
        for s in range(1, depth + 1):
            stage = f"d_{name[2:]}_s{s}"
            self.v.decl("reg", width, stage)
            line = f"{stage} <= {prev};"
            body.append(f"if ({self.tap(ctx, op.schedule.shifted(s - 1))}) {line}" if self.gated_chains else line)
            prev = stage
        self.v.always(body, loc)
        self.v.wire(name, width, prev, loc)
        self.plan.chains.append(ShiftChain(value=res.name + ctx.suffix, width=width, depth=depth, taps=[depth],
                                           clock_enabled=self.gated_chains))

    # memories

    def alloc(self, ctx: _Ctx, op: Operation):
        tensor = f"mem_{_ident(op.results[0].name)}{ctx.suffix}"
        buses = []
        for r in op.results:
            bus = _Bus(f"{_ident(r.name)}{ctx.suffix}", r.type, external=False, tensor=tensor)
            ctx.buses[id(r)] = bus
            self.buses.append(bus)
            buses.append(bus)
        self.tensors.append(_Tensor(tensor, op.results[0].type, buses, op.location))

    def access(self, ctx: _Ctx, op: Operation, loc: str):
        bus: _Bus = ctx.find("buses", op.memref)
        mt = bus.mt
        en = self.gate(ctx, op)
        indices: list[Union[int, str]] = []
        for axis, x in enumerate(op.indices):
            c = ctx.find("consts", x)
            if c is not None:
                indices.append(c)
                continue
            expr = self.operand(ctx, x, _width(x.type))
            indices.append(expr)
            self.assertion("bounds", f"{en} && ({expr} >= {mt.shape[axis]})",
                           f"{op.memref.name} index {axis} out of bounds at {loc}", loc)
        bank = site_bank(mt, indices)
        addr = address_expr(mt, indices)
        if op.opcode is Opcode.MEM_READ:
            site = _Site("read", en, "1'b0", addr, None, loc, op.location)
            res = op.results[0]
            self.v.wire(self.value_name(ctx, res), _width(res.type), bus.sig("rd_data", bank), loc)
            if bus.tensor is not None:
                self.assertion("initialized-read", f"{en} && !vld_{bus.tensor}_b{bank}[{addr}]",
                               f"read of uninitialized {op.memref.name} at {loc}", loc)
        else:
            data = self.operand(ctx, op.operands[0], mt.element.width)
            site = _Site("write", "1'b0", en, addr, data, loc, op.location)
        bus.sites.setdefault(bank, []).append(site)

    def finish_memories(self):
        v = self.v
        for bus in self.buses:
            w, aw = bus.mt.element.width, address_width(bus.mt.words_per_bank)
            for bank in range(bus.mt.num_banks):
                sites = bus.sites.get(bank, [])
                names = {k: bus.sig(k, bank) for k in ("addr", "rd_en", "wr_en", "wr_data", "rd_data")}
                if bus.external:
                    v.port("output", aw, names["addr"])
                    v.port("output", 1, names["rd_en"])
                    v.port("output", 1, names["wr_en"])
                    v.port("output", w, names["wr_data"])
                    v.port("input", w, names["rd_data"])
                else:
                    for k, width in (("addr", aw), ("rd_en", 1), ("wr_en", 1), ("wr_data", w)):
                        v.decl("wire", width, names[k])
                loc = sites[0].loc if sites else _loc(self.fn.location)
                addr = "0"
                for s in reversed(sites):
                    addr = f"({s.rd} || {s.wr}) ? {s.addr} : {addr}"
                data = "0"
                for s in reversed(sites):
                    if s.data is not None:
                        data = f"{s.wr} ? {s.data} : {data}"
                v.assign(names["addr"], addr, loc)
                v.assign(names["rd_en"], " || ".join(s.rd for s in sites) or "1'b0", loc)
                v.assign(names["wr_en"], " || ".join(s.wr for s in sites) or "1'b0", loc)
                v.assign(names["wr_data"], data, loc)
                for i, a in enumerate(sites):
                    for b in sites[i + 1:]:
                        self.assertion("port-exclusive",
                                       f"({a.rd} || {a.wr}) && ({b.rd} || {b.wr}) && ({a.addr} != {b.addr})",
                                       f"{bus.name} bank {bank}: {a.loc} and {b.loc} in one cycle", b.loc)
        for t in self.tensors:
            self.storage(t)

    def storage(self, t: _Tensor):
        accesses = [Access(bus.name, _site_kind(s, bus), s.span) for bus in t.buses for ss in bus.sites.values()
                    for s in ss]
        binding: StorageBinding = lower_memref(t.mt, accesses, t.name, [b.name for b in t.buses],
                                               ram_style=self.ram_style, port_limit=self.port_limit,
                                               location=t.span)
        self.plan.memories.append(binding)
        v, loc = self.v, _loc(t.span)
        w = binding.width
        attr = f'ram_style = "{binding.ram_style}"' if binding.ram_style else ""
        for bank in range(binding.banks):
            mem = f"{t.name}_b{bank}"
            v.decl("reg", w, mem, binding.words, attr)
            body = []
            for bus in t.buses:
                body.append(f"if ({bus.sig('wr_en', bank)}) {mem}[{bus.sig('addr', bank)}] <= "
                            f"{bus.sig('wr_data', bank)};")
            for bus in t.buses:
                rd = bus.sig("rd_data", bank)
                if binding.kind == "ram":
                    v.decl("reg", w, rd)
                    body.append(f"if ({bus.sig('rd_en', bank)}) {rd} <= {mem}[{bus.sig('addr', bank)}];")
                    if bus.mt.port.can_read:
                        self.plan.result_registers += 1
                else:
                    v.wire(rd, w, f"{mem}[{bus.sig('addr', bank)}]", loc)
            v.always(body, loc)
            vld = f"vld_{t.name}_b{bank}"
            self.shadow.append(f"  reg [{binding.words - 1}:0] {vld};")
            self.shadow.append("  always @(posedge clk)")
            sets = " ".join(f"if ({bus.sig('wr_en', bank)}) {vld}[{bus.sig('addr', bank)}] <= 1'b1;"
                            for bus in t.buses)
            self.shadow.append(f"    if (rst) {vld} <= 0; else begin {sets} end")

    # calls

    def call(self, ctx: _Ctx, op: Operation, loc: str):
        callee = self.module.get(op.attrs["callee"])
        sig = callee.signature
        inst = f"u_{_ident(callee.name)}_{self.index[id(op)]}{ctx.suffix}"
        if callee.is_extern:
            emit_extern_decl(callee)
        start = self.gate(ctx, op)
        conns = [".clk(clk)", ".rst(rst)", f".start({start})"]
        for formal, actual, port in zip(callee.args, op.operands, sig.args):
            if isinstance(formal.type, MemrefType):
                bus: _Bus = ctx.find("buses", actual)
                fname = _ident(formal.name)
                for bank in range(formal.type.num_banks):
                    wires = {}
                    for what, width in (("addr", address_width(formal.type.words_per_bank)), ("rd_en", 1),
                                        ("wr_en", 1), ("wr_data", formal.type.element.width)):
                        wires[what] = f"{inst}_{fname}_{what}_b{bank}"
                        self.v.decl("wire", width, wires[what])
                        conns.append(f".{fname}_{what}_b{bank}({wires[what]})")
                    conns.append(f".{fname}_rd_data_b{bank}({bus.sig('rd_data', bank)})")
                    bus.sites.setdefault(bank, []).append(
                        _Site("call", wires["rd_en"], wires["wr_en"], wires["addr"], wires["wr_data"], loc,
                              op.location))
            else:
                conns.append(f".arg_{_ident(formal.name)}({self.operand(ctx, actual, _width(port.type))})")
        for j, (r, port) in enumerate(zip(op.results, sig.results)):
            name = self.value_name(ctx, r)
            self.v.decl("wire", _width(port.type), name)
            conns.append(f".out{j}({name})")
        if not callee.is_extern:
            conns.append(".done()")
        self.plan.instances.append(inst)
        self.v.stmts.append(f"  // {loc}")
        self.v.stmts.append(f"  {_ident(callee.name)} {inst} (")
        self.v.stmts.append(",\n".join(f"    {c}" for c in conns))
        self.v.stmts.append("  );")

    def ret(self, ctx: _Ctx, op: Operation, loc: str):
        self.v.assign("done", self.gate(ctx, op), loc)
        for j, (x, port) in enumerate(zip(op.operands, self.fn.signature.results)):
            self.v.assign(f"out{j}", self.operand(ctx, x, _width(port.type)), loc)

    # loops

    def for_loop(self, ctx: _Ctx, op: Operation, loc: str):
        v = self.v
        timing = loop_timing(op, self.target)
        iv = op.iv
        n = f"{_ident(iv.name)}{ctx.suffix}"
        cw = _width(iv.type)
        start = self.gate(ctx, op)
        bounds = [ctx.find("consts", x) for x in (op.lb, op.ub, op.step)]
        static = all(b is not None for b in bounds)
        signed = not (static and min(bounds) >= 0)
        lb, ub, step = (str(b) if b is not None and b >= 0 else self.operand(ctx, x, cw)
                        for b, x in zip(bounds, (op.lb, op.ub, op.step)))
        body = _Ctx(ctx.suffix, ctx)
        yield_wire = f"yield_{n}"
        v.decl("wire", 1, yield_wire)
        root = self.new_root(body, op.body.root, f"({start} || {yield_wire}) && more_{n}", loc)
        cur = f"iv_{n}"
        v.decl("reg", cw, cur)
        ivname = self.value_name(body, iv)
        v.wire(ivname, cw, f"{start} ? {lb} : ({yield_wire} ? {cur} + {step} : {cur})", loc)
        nxt = f"{cur} + {step}"
        cmp = (lambda a, b: f"$signed({a}) < $signed({b})") if signed else (lambda a, b: f"{a} < {b}")
        v.wire(f"more_{n}", 1, f"{start} ? ({cmp(lb, ub)}) : ({cmp(nxt, ub)})", loc)
        regs = [f"{cur} <= {ivname};"]
        accum_widths = []
        for acc, (init, inc) in zip(op.accums, op.attrs.get("accums", ())):
            aw = _width(acc.type)
            areg = f"acc_{_ident(acc.name)}{ctx.suffix}"
            v.decl("reg", aw, areg)
            aname = self.value_name(body, acc)
            v.wire(aname, aw, f"{start} ? {aw}'d{wrap(init, aw)} : ({yield_wire} ? {areg} + {aw}'d{wrap(inc, aw)} "
                              f": {areg})", loc)
            regs.append(f"{areg} <= {aname};")
            accum_widths.append(aw)
        v.always(regs, loc)
        self.region(body, op.body)
        v.assign(yield_wire, self.tap(body, op.yield_op().schedule), loc)
        done = f"done_{n}"
        v.wire(done, 1, f"({start} || {yield_wire}) && !more_{n}", loc)
        tend = self.completion(ctx, op, done, timing.drain, loc)
        running = f"running_{n}"
        v.decl("reg", 1, running)
        v.always([f"{running} <= {start} ? 1'b1 : ({tend} ? 1'b0 : {running});"], loc,
                 reset=[f"{running} <= 1'b0;"])
        self.assertion("loop-reentry", f"{start} && {running}", f"loop {iv.name} restarted at {loc}", loc)
        if not static:
            lo, hi = (self.operand(ctx, x, cw) for x in (op.lb, op.ub))
            self.assertion("loop-bounds", f"{start} && ($signed({lo}) > $signed({hi}))",
                           f"loop {iv.name} lower bound exceeds upper bound at {loc}", loc)
        elif bounds[0] > bounds[1]:
            self.assertion("loop-bounds", start, f"loop {iv.name} lower bound exceeds upper bound at {loc}", loc)
        self.plan.loops.append(LoopController(
            loop=iv.name, kind="for", copy_path=ctx.suffix, counter_width=cw, accumulator_widths=accum_widths,
            lb=lb, ub=ub, step=step, ii=timing.ii, body_latency=timing.body_latency,
            trip_count=timing.trip_count, signed_compare=signed))
        logger.debug("@%s loop %s: counter %d bits, root %s", self.fn.name, iv.name, cw, root)

    def completion(self, ctx: _Ctx, op: Operation, done: str, drain: int, loc: str) -> str:
        """Wire the loop's completion pulse; statically settled loops reuse a tap of their start."""
        tend = op.tend
        if tend.parent is not None:
            wire = f"ev_{_ident(tend.name)}{ctx.suffix}"
            self.v.wire(wire, 1, self.tap(ctx, tend), loc)
            self.event(ctx, tend, wire)
            return wire
        if drain:
            chain = f"{done}"
            self.chain_depth[chain] = max(self.chain_depth.get(chain, 0), drain)
            done = f"{chain}_sr[{drain}]"
        return self.new_root(ctx, tend, done, loc)

    def unroll(self, ctx: _Ctx, op: Operation, loc: str):
        timing = loop_timing(op, self.target)
        if timing.ii is None:
            raise LoweringError(f"unroll_for {op.iv.name} has a data-dependent initiation interval",
                                [error(ErrorClass.INTERNAL, op.location,
                                       "unrolled copies need a constant initiation interval")])
        lb, ub, step = (ctx.find("consts", x) for x in (op.lb, op.ub, op.step))
        self.gate(ctx, op)
        values = list(range(lb, ub, step))
        for k, value in enumerate(values):
            body = _Ctx(f"{ctx.suffix}_{_ident(op.iv.name)}{k}", ctx)
            body.consts[id(op.iv)] = value
            self.new_root(body, op.body.root, self.tap(ctx, op.schedule.shifted(k * timing.ii)), loc)
            self.region(body, op.body)
        if op.tend.parent is not None:
            self.completion(ctx, op, "", 0, loc)
        else:
            self.new_root(ctx, op.tend, self.tap(ctx, op.schedule.shifted(len(values) * timing.ii + timing.drain)),
                          loc)
        self.plan.loops.append(LoopController(
            loop=op.iv.name, kind="unroll_for", copy_path=ctx.suffix, lb=str(lb), ub=str(ub), step=str(step),
            ii=timing.ii, body_latency=timing.body_latency, trip_count=len(values), copies=len(values)))

    # output

    def finish_events(self):
        for root, depth in self.chain_depth.items():
            sr = f"{root}_sr"
            self.v.decls.append(f"  reg [{depth}:1] {sr};")
            shift = root if depth == 1 else f"{{{sr}[{depth - 1}:1], {root}}}"
            self.v.always([f"{sr} <= {shift};"], _loc(self.fn.location), reset=[f"{sr} <= 0;"])
            self.plan.event_chains[root] = depth

    def render(self) -> str:
        v = self.v
        out = [f"// @{self.fn.name} from {_loc(self.fn.location)}",
               f"module {_ident(self.fn.name)} ("]
        out.append(",\n".join(f"  {p}" for p in v.ports))
        out.append(");")
        out.extend(v.decls)
        out.extend(v.stmts)
        block = emit_assertions(self.plan, self.shadow)
        if block:
            out.append(block)
        out.append("endmodule")
        return "\n".join(out) + "\n"


def emit_assertions(plan: FunctionLowering, prelude: list[str] = (), macro: Optional[str] = None) -> str:
    """The simulation-only checks of one module, guarded by the assertion macro."""
    if not plan.assertions:
        return ""
    macro = macro or get_settings().ASSERTION_MACRO
    lines = [f"`ifdef {macro}", *prelude]
    for a in plan.assertions:
        lines.append(f"  // {a.location}")
        lines.append("  always @(posedge clk)")
        lines.append(f"    if (!rst && ({a.condition}))")
        lines.append(f'      $display("hirc assertion failed [{a.kind}]: {a.message}");')
    lines.append(f"`endif // {macro}")
    return "\n".join(lines)


def emit_extern_decl(fn: Function) -> str:
    """Interface comment for a black-box module that implements an extern function."""
    sig = fn.signature
    missing = [i for i, p in enumerate(sig.results) if p.delay is None]
    if missing or any(p.delay is None and not isinstance(p.type, MemrefType) for p in sig.args):
        raise LoweringError(
            f"extern @{fn.name} has no fixed latency",
            [error(ErrorClass.UNSUPPORTED_EXTERN, fn.location,
                   f"extern @{fn.name} must declare a delay on every port; variable-latency "
                   f"handshakes are not supported")])
    combinational = all(p.delay == 0 for p in sig.results)
    lines = [f"// extern @{fn.name}: black box, "
             f"{'combinational' if combinational else 'fixed latency'}, provided separately",
             "//   input clk, rst, start"]
    for a, p in zip(fn.args, sig.args):
        if isinstance(a.type, MemrefType):
            lines.append(f"//   memref port {_ident(a.name)} ({a.type}) forwarded as *_b<bank> buses")
        else:
            lines.append(f"//   input {_range(_width(a.type))}arg_{_ident(a.name)}  (start + {p.delay})")
    for j, p in enumerate(sig.results):
        lines.append(f"//   output {_range(_width(p.type))}out{j}  (start + {p.delay})")
    return "\n".join(lines)


def _reachable(module: Module, top: Optional[str]) -> list[Function]:
    if top is None:
        return list(module)
    if module.get(top) is None:
        raise LoweringError(f"no function @{top}",
                            [error(ErrorClass.UNKNOWN_FUNCTION, None, f"top function @{top} is not defined")])
    seen = set()
    stack = [top]
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        fn = module.get(name)
        for op in fn.walk():
            if op.opcode is Opcode.CALL:
                stack.append(op.attrs["callee"])
    return [fn for fn in module if fn.name in seen]


def lower(module: Module, top: Optional[str] = None, ram_style: Optional[str] = None,
          port_limit: Optional[int] = None, gated_chains: bool = True,
          target: TargetModel = DEFAULT_TARGET) -> tuple[str, LoweringPlan, ResourceReport]:
    """Lower a verified module to Verilog; returns the text, the plan and the resource report."""
    settings = get_settings()
    diags = verify_module(module)
    if has_errors(diags):
        raise LoweringError("module has schedule errors; refusing to lower", [d for d in diags if d.is_error])
    style = ram_style or settings.RAM_STYLE
    limit = port_limit if port_limit is not None else settings.PORT_LIMIT
    plan = LoweringPlan(top=top, ram_style=style)
    parts = [f"// Generated by {settings.PROJECT_NAME} {settings.VERSION} from {module.filename}",
             "`timescale 1ns / 1ps"]
    for fn in _reachable(module, top):
        if fn.is_extern:
            parts.append(emit_extern_decl(fn))
            plan.externs.append(fn.name)
            continue
        text, fl = _FunctionLowerer(module, fn, style, limit, gated_chains, target).lower()
        plan.functions.append(fl)
        parts.append(text)
    problems = audit_event_algebra(module, plan)
    if problems:
        raise LoweringError("event wiring does not match the schedule",
                            [error(ErrorClass.INTERNAL, None, p) for p in problems])
    report = ResourceReport.from_plan(plan)
    logger.info("lowered %d function(s): %d registers, %d RAM banks", len(plan.functions), report.registers,
                report.ram_instances)
    return "\n".join(parts) + "\n", plan, report
