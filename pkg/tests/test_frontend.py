import random

import pytest

from hirc.core.diagnostics import ErrorClass
from hirc.core.errors import ParseError
from hirc.frontend.lexer import lex
from hirc.frontend.parser import parse, parse_file, parse_or_raise
from hirc.frontend.printer import print_module
from hirc.ir.ops import Opcode, TimeOrigin
from hirc.ir.types import CONST, DimKind, IntType, MemrefType, PortKind, StorageKind

from tests.conftest import CORPUS, KERNELS, classes, corpus_path, load, parse_text


def test_lexer_splits_memref_shapes_and_skips_comments():
    tokens, diags = lex("// header\n%A : memref<8x8xi32, [packed, dist], rw>")
    assert not diags
    kinds = [t.kind for t in tokens]
    assert kinds[:4] == ["SSA", ":", "KEYWORD", "<"]
    assert [t.text for t in tokens[4:6]] == ["8", "x8xi32"]
    assert tokens[0].line == 2
    assert kinds[-1] == "EOF"


def test_lexer_reports_unknown_characters_and_continues():
    tokens, diags = lex("%a # %b")
    assert [d.error_class for d in diags] == [ErrorClass.LEX_ERROR]
    assert diags[0].location.col == 4
    assert [t.text for t in tokens if t.kind == "SSA"] == ["%a", "%b"]


def test_transpose_structure():
    module = load("transpose")
    assert [f.name for f in module.functions] == ["transpose"]
    fn = module.get("transpose")
    ops = list(fn.walk())
    loops = [op for op in ops if op.opcode is Opcode.FOR]
    assert len(loops) == 2
    outer, inner = loops
    assert inner.parent is outer.body
    reads = [op for op in ops if op.opcode is Opcode.MEM_READ and op.memref.name == "%A"]
    writes = [op for op in ops if op.opcode is Opcode.MEM_WRITE and op.memref.name == "%C"]
    assert len(reads) == 1 and len(writes) == 1
    assert reads[0].schedule.base is inner.body.root
    assert writes[0].schedule.offset == 1


def test_signature_ports_and_memref_types():
    fn = load("transpose").get("transpose")
    a, c = fn.args
    assert isinstance(a.type, MemrefType)
    assert a.type.shape == (8, 8)
    assert a.type.dims == (DimKind.PACKED, DimKind.PACKED)
    assert a.type.port is PortKind.READ
    assert c.type.port is PortKind.WRITE
    assert a.type.storage is StorageKind.BRAM
    assert fn.signature.args[0].delay is None
    assert fn.root.origin is TimeOrigin.FUNCTION_ENTRY


def test_scalar_delays_default_to_zero():
    fn = load("mac_ok").get("mac")
    assert [p.delay for p in fn.signature.args] == [0, 0, 0]
    assert [p.delay for p in fn.signature.results] == [3]
    ext = load("mac_ok").get("mult")
    assert ext.is_extern
    assert ext.signature.results[0].delay == 3


def test_types_are_inferred():
    fn = load("histogram").get("histogram")
    by_name = {r.name: r for op in fn.walk() for r in op.results}
    assert by_name["%v"].type == IntType(32)
    assert by_name["%bin"].type == IntType(4)
    assert by_name["%bin1"].type == IntType(4)
    assert by_name["%c0"].type == CONST


def test_unroll_induction_variable_is_const():
    fn = load("unroll_loop").get("unroll_loop")
    loop = next(op for op in fn.walk() if op.opcode is Opcode.UNROLL_FOR)
    assert loop.iv.is_const


def test_loop_completion_is_settled_after_parse():
    fn = load("stencil_1d").get("stencil_1d")
    loop = next(op for op in fn.walk() if op.opcode is Opcode.FOR)
    assert loop.tend.origin is TimeOrigin.LOOP_COMPLETION
    assert loop.tend.parent is not None
    assert loop.tend.parent.base is fn.root
    assert loop.tend.parent.offset == 1 + 63 + 2


@pytest.mark.parametrize("name", KERNELS + ["err_add", "mac"])
def test_print_is_a_fixed_point(name):
    module = load(name)
    text = print_module(module)
    again = print_module(parse_or_raise(text, "printed.hir"))
    assert again == text


def test_accumulators_survive_round_trip():
    src = """
def @acc(%y : memref<8xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c8 = constant 8
  for %i : i32 = %c0 to %c8 step %c1 accum(%a : i32 = 3 by 4) iter_time %ti at %t offset 1 {
    mem_write %a to %y[%i] at %ti
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    module = parse_text(src)
    text = print_module(module)
    assert "accum(%a : i32 = 3 by 4)" in text
    assert print_module(parse_or_raise(text)) == text


def test_source_locations_point_at_the_operation():
    fn = load("err_add").get("array_add")
    write = next(op for op in fn.walk() if op.opcode is Opcode.MEM_WRITE)
    assert write.location.file.endswith("err_add.hir")
    assert write.location.line == 14
    assert write.location.col == 5
    # the induction variable inside the brackets
    assert write.operand_span(2).col > write.location.col


def test_syntax_error_is_reported_with_location():
    module, diags = parse(corpus_path("errors/unterminated").read_text(), "unterminated.hir")
    assert classes(diags) == ["syntax-error"]
    assert diags[0].location.line > 1


def test_undefined_name():
    _, diags = parse((CORPUS / "errors" / "undefined_name.hir").read_text(), "undefined_name.hir")
    assert "undefined-name" in classes(diags)
    assert any("%b" in d.message for d in diags)


def test_duplicate_names():
    src = """
def @dup(%a : i32) -> (i32 delay 0) at %t {
  %a = add %a, %a : i32 at %t
  return %a at %t
}
"""
    _, diags = parse(src)
    assert "duplicate-name" in classes(diags)


def test_unknown_type():
    _, diags = parse("def @f(%a : u8) at %t {\n  return at %t\n}\n")
    assert classes(diags) == ["unknown-type"]


def test_negative_offset_is_rejected():
    _, diags = parse("def @f() at %t {\n  return at %t offset -1\n}\n")
    assert "negative-offset" in classes(diags)


def test_parse_or_raise_carries_diagnostics():
    with pytest.raises(ParseError) as exc:
        parse_or_raise("def @f(", "bad.hir")
    assert exc.value.diagnostics
    assert exc.value.diagnostics[0].location.file == "bad.hir"


def test_parse_file_reads_from_disk():
    module, diags = parse_file(corpus_path("delays"))
    assert not classes(diags)
    assert module.filename.endswith("delays.hir")


def test_recovery_keeps_later_functions():
    src = "def @bad( {\n}\ndef @good() at %t {\n  return at %t\n}\n"
    module, diags = parse(src)
    assert "syntax-error" in classes(diags)
    assert [f.name for f in module.functions] == ["good"]


class _ModuleGen:
    """Seeded source for small well-formed modules."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.n = 0
        self.lines: list[str] = []
        self.externs: list[str] = []

    def fresh(self, stem: str) -> str:
        self.n += 1
        return f"%{stem}{self.n}"

    def at(self, times: list[str]) -> str:
        offset = self.rng.randint(0, 3)
        base = self.rng.choice(times)
        return f"at {base} offset {offset}" if offset else f"at {base}"

    def emit(self, depth: int, text: str):
        self.lines.append("  " * depth + text)

    def index(self, values: list[str]) -> str:
        return self.rng.choice(values + ["%c0", "%c1"])

    def block(self, depth: int, values: list[str], times: list[str], loops: int):
        rng = self.rng
        for _ in range(rng.randint(1, 6)):
            kind = rng.choice(["time", "binary", "binary", "slice", "select", "delay", "read", "write",
                               "call", "loop"])
            if kind == "time":
                t = self.fresh("tt")
                self.emit(depth, f"{t} = time {rng.choice(times)} offset {rng.randint(0, 4)}")
                times.append(t)
            elif kind == "binary":
                v = self.fresh("v")
                op = rng.choice(["add", "sub", "mult"])
                rhs = rng.choice(values + ["%c1", "%cn"])
                self.emit(depth, f"{v} = {op} {rng.choice(values)}, {rhs} : i32 {self.at(times)}")
                values.append(v)
            elif kind == "slice":
                lo = rng.randint(0, 28)
                hi = rng.randint(lo, 31)
                self.emit(depth, f"{self.fresh('s')} = bit_slice {rng.choice(values)} [{hi}:{lo}] "
                                 f": i{hi - lo + 1} {self.at(times)}")
            elif kind == "select":
                v = self.fresh("v")
                c, a, b = (rng.choice(values) for _ in range(3))
                self.emit(depth, f"{v} = select {c}, {a}, {b} : i32 {self.at(times)}")
                values.append(v)
            elif kind == "delay":
                v = self.fresh("v")
                self.emit(depth, f"{v} = delay {rng.choice(values)} by {rng.randint(0, 4)} {self.at(times)}")
                values.append(v)
            elif kind == "read":
                v = self.fresh("v")
                self.emit(depth, f"{v} = mem_read %X[{self.index(values)}] {self.at(times)}")
                values.append(v)
            elif kind == "write":
                self.emit(depth, f"mem_write {rng.choice(values)} to %Y[{self.index(values)}] {self.at(times)}")
            elif kind == "call" and self.externs:
                v = self.fresh("v")
                self.emit(depth, f"{v} = call @{rng.choice(self.externs)}({rng.choice(values)}) {self.at(times)}")
                values.append(v)
            elif kind == "loop" and loops:
                self.loop(depth, times, loops - 1)

    def loop(self, depth: int, times: list[str], loops: int):
        rng = self.rng
        ti, tf = self.fresh("ti"), self.fresh("tf")
        if rng.random() < 0.3:
            k = self.fresh("k")
            self.emit(depth, f"unroll_for {k} = %c0 to %cn step %c1 iter_time {ti} {self.at(times)} {{")
            first = self.fresh("v")
            self.emit(depth + 1, f"{first} = mem_read %X[{k}] at {ti}")
            body = [first]
        else:
            i = self.fresh("i")
            accum = ""
            body = [i]
            if rng.random() < 0.3:
                acc = self.fresh("acc")
                accum = f" accum({acc} : i32 = {rng.randint(0, 9)} by {rng.randint(1, 9)})"
                body.append(acc)
            self.emit(depth, f"for {i} : i32 = %c0 to %cn step %c1{accum} iter_time {ti} {self.at(times)} {{")
        self.block(depth + 1, body, [ti], loops)
        self.emit(depth + 1, f"yield at {ti} offset {rng.randint(1, 3)}")
        self.emit(depth, f"}} yield_result {tf}")
        times.append(tf)

    def function(self, name: str):
        rng = self.rng
        size = rng.randint(2, 8)
        scalars = [f"%a{k}" for k in range(rng.randint(1, 3))]
        args = [f"{a} : i32 delay {rng.randint(0, 3)}" for a in scalars]
        args += [f"%X : memref<{size}xi32, [packed], r>", f"%Y : memref<{size}xi32, [packed], w>"]
        returns = rng.random() < 0.5
        self.emit(0, f"def @{name}({', '.join(args)})" + (" -> (i32 delay 1)" if returns else "") + " at %t {")
        for line in ("%c0 = constant 0", "%c1 = constant 1", f"%cn = constant {size}"):
            self.emit(1, line)
        values, times = list(scalars), ["%t"]
        self.block(1, values, times, loops=2)
        result = f" {rng.choice(values)}" if returns else ""
        self.emit(1, f"return{result} {self.at(times)}")
        self.emit(0, "}")

    def module(self) -> str:
        if self.rng.random() < 0.5:
            self.externs.append("ext")
            self.emit(0, "extern @ext(%a : i32 delay 0) -> (i32 delay 2)")
        for k in range(self.rng.randint(1, 2)):
            self.function(f"f{k}")
        return "\n".join(self.lines) + "\n"


def _structure(module) -> list:
    shape = []
    for fn in module:
        shape.append((fn.name, [a.name for a in fn.args], repr(fn.signature)))
        for op in fn.walk():
            shape.append((op.opcode, [v.name for v in op.operands],
                          [(r.name, str(r.type)) for r in op.results],
                          [(a.name, str(a.type)) for reg in op.regions for a in [reg.root, *reg.args]],
                          str(op.schedule) if op.schedule else None,
                          sorted((k, repr(v)) for k, v in op.attrs.items())))
    return shape


@pytest.mark.parametrize("seed", range(1000))
def test_random_modules_survive_print_and_parse(seed):
    module = parse_text(_ModuleGen(seed).module())
    text = print_module(module)
    again = parse_or_raise(text, "printed.hir")
    assert _structure(again) == _structure(module)
    assert print_module(again) == text
