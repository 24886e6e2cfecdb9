"""Recursive-descent parser for `.hir` text.

Names are resolved after each function is read, so a use may textually precede its
definition; such uses are reported by structural validation, not here. After a syntax
error the parser skips ahead to the next top-level `def` or `extern`.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from hirc.core.diagnostics import Diagnostic, ErrorClass, SourceSpan, error, has_errors
from hirc.core.errors import HircError, ParseError
from hirc.frontend.lexer import Token, lex
from hirc.ir.ops import (COMPUTE_OPS, Function, FunctionSignature, Module, Opcode, Operation,
                         PortSpec, Region, TimeExpr, TimeOrigin, TimeVar, Value)
from hirc.ir.timing import settle_loop_timing
from hirc.ir.types import (CONST, TIME, DimKind, FloatType, IntType, MemrefType, PortKind,
                           StorageKind)
from hirc.ir.validate import validate_module

logger = logging.getLogger(__name__)

_BINARY = {"add": Opcode.ADD, "sub": Opcode.SUB, "mult": Opcode.MULT}
_DEFAULT_INT = IntType(32)


class _Abort(Exception):
    pass


class _Ref(Value):
    """Placeholder for a name that is resolved once the enclosing function is complete."""

    def __init__(self, name: str, span: SourceSpan):
        super().__init__(name, None, span=span)


class Parser:
    def __init__(self, text: str, filename: str = "<input>"):
        self.filename = filename
        self.tokens, self.diags = lex(text, filename)
        self.pos = 0
        self.names: dict[str, Value] = {}

    # token helpers
    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, text: str) -> bool:
        return self.at("KEYWORD", text)

    def advance(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            tok = self.peek()
            wanted = text or kind
            found = tok.text or "end of file"
            self.fail(tok, ErrorClass.SYNTAX_ERROR, f"expected '{wanted}', found '{found}'")
        return self.advance()

    def keyword(self, text: str) -> Token:
        return self.expect("KEYWORD", text)

    def accept_keyword(self, text: str) -> Optional[Token]:
        if self.at_keyword(text):
            return self.advance()
        return None

    def accept(self, kind: str) -> Optional[Token]:
        if self.at(kind):
            return self.advance()
        return None

    def span(self, tok: Token) -> SourceSpan:
        return tok.span(self.filename)

    def span_from(self, first: Token) -> SourceSpan:
        last = self.tokens[max(self.pos - 1, 0)]
        return SourceSpan(self.filename, first.line, first.col, last.line,
                          last.col + max(len(last.text), 1) - 1)

    def fail(self, tok: Token, cls: ErrorClass, message: str):
        self.diags.append(error(cls, self.span(tok), message))
        raise _Abort()

    def note(self, tok: Token, cls: ErrorClass, message: str):
        self.diags.append(error(cls, self.span(tok), message))

    # module level
    def parse_module(self) -> Module:
        module = Module(filename=self.filename)
        seen: dict[str, Function] = {}
        while not self.at("EOF"):
            start = self.peek()
            try:
                if self.at_keyword("def"):
                    fn = self.parse_function()
                elif self.at_keyword("extern"):
                    fn = self.parse_extern()
                else:
                    self.fail(start, ErrorClass.SYNTAX_ERROR,
                              f"expected 'def' or 'extern', found '{start.text}'")
            except _Abort:
                self.recover()
                continue
            if fn is None:
                continue
            if fn.name in seen:
                self.note(start, ErrorClass.DUPLICATE_NAME, f"function @{fn.name} is already defined")
                continue
            seen[fn.name] = fn
            module.functions.append(fn)
        self.infer_types(module)
        return module

    def recover(self):
        self.pos += 1
        while not self.at("EOF") and not self.at_keyword("def") and not self.at_keyword("extern"):
            self.pos += 1

    def define(self, tok: Token, value: Value) -> Value:
        if tok.text in self.names:
            self.note(tok, ErrorClass.DUPLICATE_NAME, f"{tok.text} is already defined in this function")
        else:
            self.names[tok.text] = value
        value.span = value.span or self.span(tok)
        return value

    def ref(self, tok: Token) -> Value:
        return _Ref(tok.text, self.span(tok))

    def parse_signature_ports(self) -> tuple[list[tuple[Token, PortSpec]], list[PortSpec]]:
        args: list[tuple[Token, PortSpec]] = []
        self.expect("(")
        while not self.at(")"):
            name_tok = self.expect("SSA")
            self.expect(":")
            args.append((name_tok, self.parse_port()))
            if not self.accept(","):
                break
        self.expect(")")
        results: list[PortSpec] = []
        if self.accept("->"):
            self.expect("(")
            while not self.at(")"):
                results.append(self.parse_port())
                if not self.accept(","):
                    break
            self.expect(")")
        return args, results

    def parse_port(self) -> PortSpec:
        ty = self.parse_type()
        if isinstance(ty, MemrefType):
            return PortSpec(ty, None)
        delay = None
        if self.accept_keyword("delay"):
            delay = self.parse_offset()
        return PortSpec(ty, delay)

    def parse_extern(self) -> Function:
        self.keyword("extern")
        name_tok = self.expect("SYM")
        self.names = {}
        args, results = self.parse_signature_ports()
        values = [self.define(tok, Value(tok.text, port.type)) for tok, port in args]
        sig = FunctionSignature(tuple(p for _, p in args), tuple(results))
        return Function(name_tok.text[1:], values, sig, None, self.span(name_tok), Opcode.FUNC)

    def parse_function(self) -> Optional[Function]:
        first = self.keyword("def")
        name_tok = self.expect("SYM")
        self.names = {}
        args, results = self.parse_signature_ports()
        ports = []
        for tok, port in args:
            if not isinstance(port.type, MemrefType) and port.delay is None:
                port = PortSpec(port.type, 0)
            ports.append(port)
        for i, port in enumerate(results):
            if port.delay is None and not isinstance(port.type, MemrefType):
                results[i] = PortSpec(port.type, 0)
        values = [self.define(tok, Value(tok.text, port.type)) for (tok, _), port in zip(args, ports)]
        self.keyword("at")
        root_tok = self.expect("SSA")
        root = self.define(root_tok, TimeVar(root_tok.text, TimeOrigin.FUNCTION_ENTRY))
        body = Region(root)
        for v in values:
            v.region = body
        sig = FunctionSignature(tuple(ports), tuple(results))
        fn = Function(name_tok.text[1:], values, sig, body, self.span_from(first))
        self.parse_block(body)
        if not self.resolve(fn):
            return None
        return fn

    def parse_block(self, region: Region):
        self.expect("{")
        while not self.at("}"):
            if self.at("EOF"):
                self.fail(self.peek(), ErrorClass.SYNTAX_ERROR, "unterminated block, expected '}'")
            region.append(self.parse_statement())
        self.expect("}")

    # types
    def parse_type(self):
        tok = self.peek()
        if self.accept_keyword("const"):
            return CONST
        if self.at_keyword("memref"):
            return self.parse_memref()
        ident = self.expect("IDENT")
        ty = self.primitive(ident.text)
        if ty is None:
            self.fail(ident, ErrorClass.UNKNOWN_TYPE, f"unknown type '{tok.text}'")
        return ty

    @staticmethod
    def primitive(text: str):
        if text == "!time":
            return TIME
        if len(text) > 1 and text[0] in "if" and text[1:].isdigit() and int(text[1:]) > 0:
            return IntType(int(text[1:])) if text[0] == "i" else FloatType(int(text[1:]))
        return None

    def parse_memref(self) -> MemrefType:
        self.keyword("memref")
        self.expect("<")
        first = self.expect("INT")
        tail = self.expect("IDENT")
        parts = (first.text + tail.text).split("x")
        elem = self.primitive(parts[-1])
        if elem is None or not all(p.isdigit() and int(p) > 0 for p in parts[:-1]) or len(parts) < 2:
            self.fail(first, ErrorClass.UNKNOWN_TYPE, f"malformed memref shape '{first.text}{tail.text}'")
        shape = tuple(int(p) for p in parts[:-1])
        self.expect(",")
        self.expect("[")
        dims = []
        while True:
            tok = self.expect("IDENT")
            try:
                dims.append(DimKind(tok.text))
            except ValueError:
                self.fail(tok, ErrorClass.UNKNOWN_TYPE, f"unknown dimension kind '{tok.text}'")
            if not self.accept(","):
                break
        self.expect("]")
        if len(dims) != len(shape):
            self.fail(first, ErrorClass.UNKNOWN_TYPE,
                      f"memref has {len(shape)} dimensions but {len(dims)} dimension kinds")
        self.expect(",")
        port_tok = self.expect("IDENT")
        try:
            port = PortKind(port_tok.text)
        except ValueError:
            self.fail(port_tok, ErrorClass.UNKNOWN_TYPE, f"unknown port kind '{port_tok.text}'")
        storage = StorageKind.BRAM
        if self.accept(","):
            st_tok = self.expect("IDENT")
            try:
                storage = StorageKind(st_tok.text)
            except ValueError:
                self.fail(st_tok, ErrorClass.UNKNOWN_TYPE, f"unknown storage kind '{st_tok.text}'")
        self.expect(">")
        return MemrefType(elem, shape, tuple(dims), port, storage)

    # statements
    def parse_offset(self) -> int:
        tok = self.expect("INT")
        if tok.value < 0:
            self.note(tok, ErrorClass.NEGATIVE_OFFSET, "offset must be non-negative")
            return 0
        return tok.value

    def parse_schedule(self) -> TimeExpr:
        self.keyword("at")
        base = self.expect("SSA")
        offset = self.parse_offset() if self.accept_keyword("offset") else 0
        return TimeExpr(self.ref(base), offset)

    def parse_operand_list(self, closer: str) -> tuple[list[Value], list[SourceSpan]]:
        values, spans = [], []
        while not self.at(closer):
            tok = self.expect("SSA")
            values.append(self.ref(tok))
            spans.append(self.span(tok))
            if not self.accept(","):
                break
        return values, spans

    def parse_statement(self) -> Operation:
        first = self.peek()
        if first.kind == "SSA":
            result_toks = [self.advance()]
            while self.accept(","):
                result_toks.append(self.expect("SSA"))
            self.expect("=")
            return self.parse_defining(first, result_toks)
        if self.at_keyword("mem_write"):
            return self.parse_mem_write(first)
        if self.at_keyword("call"):
            return self.parse_call(first, [])
        if self.at_keyword("yield"):
            self.advance()
            sched = self.parse_schedule()
            return Operation(Opcode.YIELD, schedule=sched, location=self.span_from(first))
        if self.at_keyword("return"):
            self.advance()
            values, spans = [], []
            while self.at("SSA"):
                tok = self.advance()
                values.append(self.ref(tok))
                spans.append(self.span(tok))
                if not self.accept(","):
                    break
            sched = self.parse_schedule()
            return Operation(Opcode.RETURN, values, schedule=sched, location=self.span_from(first),
                             operand_spans=spans)
        if self.at_keyword("for") or self.at_keyword("unroll_for"):
            return self.parse_loop(first)
        self.fail(first, ErrorClass.SYNTAX_ERROR, f"unexpected '{first.text or 'end of file'}'")

    def single(self, result_toks: list[Token], what: str) -> Token:
        if len(result_toks) != 1:
            self.fail(result_toks[1], ErrorClass.SYNTAX_ERROR, f"{what} defines exactly one value")
        return result_toks[0]

    def parse_defining(self, first: Token, result_toks: list[Token]) -> Operation:
        tok = self.peek()
        if tok.kind != "KEYWORD":
            self.fail(tok, ErrorClass.SYNTAX_ERROR, f"expected an operation, found '{tok.text}'")
        word = tok.text
        if word == "call":
            return self.parse_call(first, result_toks)
        if word == "alloc":
            self.advance()
            self.expect(":")
            types = [self.parse_memref()]
            while self.accept(","):
                types.append(self.parse_memref())
            if len(types) != len(result_toks):
                self.fail(tok, ErrorClass.SYNTAX_ERROR,
                          f"alloc binds {len(result_toks)} names but lists {len(types)} types")
            results = [self.define(t, Value(t.text, ty)) for t, ty in zip(result_toks, types)]
            return Operation(Opcode.ALLOC, results=results, location=self.span_from(first))
        name = self.single(result_toks, word)
        self.advance()
        if word == "constant":
            value = self.expect("INT").value
            res = self.define(name, Value(name.text, CONST))
            return Operation(Opcode.CONSTANT, results=[res], attrs={"value": value},
                             location=self.span_from(first))
        if word == "time":
            parent = self.expect("SSA")
            offset = self.parse_offset() if self.accept_keyword("offset") else 0
            tv = TimeVar(name.text, TimeOrigin.DERIVED, TimeExpr(self.ref(parent), offset))
            self.define(name, tv)
            return Operation(Opcode.TIME, [self.ref(parent)], [tv], attrs={"offset": offset},
                             location=self.span_from(first), operand_spans=[self.span(parent)])
        if word in _BINARY:
            a = self.expect("SSA")
            self.expect(",")
            b = self.expect("SSA")
            return self.finish_compute(first, name, _BINARY[word], [a, b], {})
        if word == "select":
            c = self.expect("SSA")
            self.expect(",")
            a = self.expect("SSA")
            self.expect(",")
            b = self.expect("SSA")
            return self.finish_compute(first, name, Opcode.SELECT, [c, a, b], {})
        if word == "bit_slice":
            x = self.expect("SSA")
            self.expect("[")
            hi = self.expect("INT").value
            self.expect(":")
            lo = self.expect("INT").value
            self.expect("]")
            return self.finish_compute(first, name, Opcode.BIT_SLICE, [x], {"hi": hi, "lo": lo})
        if word == "mem_read":
            mem = self.expect("SSA")
            self.expect("[")
            idx, spans = self.parse_operand_list("]")
            self.expect("]")
            sched = self.parse_schedule()
            res = self.define(name, Value(name.text, None))
            return Operation(Opcode.MEM_READ, [self.ref(mem), *idx], [res], sched,
                             location=self.span_from(first), operand_spans=[self.span(mem), *spans])
        if word == "delay":
            x = self.expect("SSA")
            self.keyword("by")
            by = self.parse_offset()
            sched = self.parse_schedule()
            res = self.define(name, Value(name.text, None))
            return Operation(Opcode.DELAY, [self.ref(x)], [res], sched, attrs={"by": by},
                             location=self.span_from(first), operand_spans=[self.span(x)])
        self.fail(tok, ErrorClass.SYNTAX_ERROR, f"'{word}' does not define a value")

    def finish_compute(self, first: Token, name: Token, opcode: Opcode, operands: list[Token],
                       attrs: dict) -> Operation:
        ty = None
        if self.accept(":"):
            ty = self.parse_type()
        sched = self.parse_schedule() if self.at_keyword("at") else None
        res = self.define(name, Value(name.text, ty))
        return Operation(opcode, [self.ref(t) for t in operands], [res], sched, attrs,
                         location=self.span_from(first), operand_spans=[self.span(t) for t in operands])

    def parse_mem_write(self, first: Token) -> Operation:
        self.keyword("mem_write")
        data = self.expect("SSA")
        self.keyword("to")
        mem = self.expect("SSA")
        self.expect("[")
        idx, spans = self.parse_operand_list("]")
        self.expect("]")
        sched = self.parse_schedule()
        return Operation(Opcode.MEM_WRITE, [self.ref(data), self.ref(mem), *idx], [], sched,
                         location=self.span_from(first),
                         operand_spans=[self.span(data), self.span(mem), *spans])

    def parse_call(self, first: Token, result_toks: list[Token]) -> Operation:
        self.keyword("call")
        callee = self.expect("SYM")
        self.expect("(")
        args, spans = self.parse_operand_list(")")
        self.expect(")")
        sched = self.parse_schedule()
        results = [self.define(t, Value(t.text, None)) for t in result_toks]
        return Operation(Opcode.CALL, args, results, sched, attrs={"callee": callee.text[1:]},
                         location=self.span_from(first), operand_spans=spans)

    def parse_loop(self, first: Token) -> Operation:
        unroll = self.advance().text == "unroll_for"
        iv_tok = self.expect("SSA")
        iv_type = CONST if unroll else _DEFAULT_INT
        if self.accept(":"):
            iv_type = self.parse_type()
        self.expect("=")
        bounds = [self.expect("SSA")]
        self.keyword("to")
        bounds.append(self.expect("SSA"))
        self.keyword("step")
        bounds.append(self.expect("SSA"))
        accum_toks: list[tuple[Token, object]] = []
        inits = []
        if self.accept_keyword("accum"):
            self.expect("(")
            while True:
                acc_tok = self.expect("SSA")
                self.expect(":")
                acc_ty = self.parse_type()
                self.expect("=")
                init = self.expect("INT").value
                self.keyword("by")
                inc = self.expect("INT").value
                accum_toks.append((acc_tok, acc_ty))
                inits.append((init, inc))
                if not self.accept(","):
                    break
            self.expect(")")
        self.keyword("iter_time")
        ti_tok = self.expect("SSA")
        sched = self.parse_schedule()
        header = self.span_from(first)
        iv = self.define(iv_tok, Value(iv_tok.text, iv_type))
        accs = [self.define(t, Value(t.text, ty)) for t, ty in accum_toks]
        ti = self.define(ti_tok, TimeVar(ti_tok.text, TimeOrigin.LOOP_ITERATION))
        body = Region(ti, args=[iv, *accs])
        self.parse_block(body)
        self.keyword("yield_result")
        tend_tok = self.expect("SSA")
        tend = self.define(tend_tok, TimeVar(tend_tok.text, TimeOrigin.LOOP_COMPLETION))
        return Operation(Opcode.UNROLL_FOR if unroll else Opcode.FOR,
                         [self.ref(t) for t in bounds], [tend], sched, {"accums": inits}, [body],
                         location=header, operand_spans=[self.span(t) for t in bounds])

    # name resolution
    def lookup(self, v: Value) -> Optional[Value]:
        if not isinstance(v, _Ref):
            return v
        found = self.names.get(v.name)
        if found is None:
            self.diags.append(error(ErrorClass.UNDEFINED_NAME, v.span, f"{v.name} is not defined"))
        return found

    def lookup_time(self, e: Optional[TimeExpr]) -> Optional[TimeExpr]:
        if e is None:
            return None
        base = self.lookup(e.base)
        if base is None:
            return None
        if not isinstance(base, TimeVar):
            self.diags.append(error(ErrorClass.TYPE_MISMATCH, e.base.span,
                                    f"{base.name} is not a time variable"))
            return None
        return TimeExpr(base, e.offset)

    def resolve(self, fn: Function) -> bool:
        """Bind every placeholder in `fn`; False if any name is undefined."""
        before = len(self.diags)
        for op in fn.walk():
            resolved = [self.lookup(v) for v in op.operands]
            if all(v is not None for v in resolved):
                op.operands = resolved
            if op.schedule is not None:
                op.schedule = self.lookup_time(op.schedule) or op.schedule
            if op.opcode is Opcode.TIME:
                tv = op.results[0]
                tv.parent = self.lookup_time(tv.parent)
        return len(self.diags) == before

    def infer_types(self, module: Module):
        for fn in module:
            for op in fn.walk():
                code = op.opcode
                if code is Opcode.MEM_READ and isinstance(op.memref.type, MemrefType):
                    op.results[0].type = op.memref.type.element
                elif code is Opcode.DELAY:
                    op.results[0].type = op.operands[0].type
                elif code is Opcode.CALL:
                    callee = module.get(op.attrs["callee"])
                    if callee is not None:
                        op.attrs["signature"] = callee.signature
                        for r, port in zip(op.results, callee.signature.results):
                            r.type = port.type
                    else:
                        op.attrs["signature"] = FunctionSignature(
                            (), tuple(PortSpec(_DEFAULT_INT, 0) for _ in op.results))
                elif code in COMPUTE_OPS and op.results[0].type is None:
                    op.results[0].type = self.default_type(op)
                for r in op.results:
                    if r.type is None:
                        r.type = _DEFAULT_INT

    @staticmethod
    def default_type(op: Operation):
        if all(v.is_const for v in op.operands):
            return CONST
        widths = [v.type.width for v in op.operands if isinstance(v.type, IntType)]
        return IntType(max(widths)) if widths else _DEFAULT_INT


def parse(text: str, filename: str = "<input>") -> tuple[Module, list[Diagnostic]]:
    """Parse and structurally validate a module.

    Loop completion times are settled only when the module is free of errors.
    """
    parser = Parser(text, filename)
    module = parser.parse_module()
    diags = parser.diags
    if not has_errors(diags):
        diags = diags + validate_module(module)
    if not has_errors(diags):
        for fn in module:
            settle_loop_timing(fn)
    logger.info("parsed %s: %d functions, %d diagnostics", filename, len(module.functions), len(diags))
    return module, diags


def parse_or_raise(text: str, filename: str = "<input>") -> Module:
    module, diags = parse(text, filename)
    if has_errors(diags):
        raise ParseError(f"{filename}: {len(diags)} diagnostics", diags)
    return module


def parse_file(path) -> tuple[Module, list[Diagnostic]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise HircError(f"cannot read {path}: {e}",
                        [error(ErrorClass.IO_ERROR, SourceSpan(str(path), 0, 0), str(e))]) from e
    return parse(text, str(path))
