import pytest

from hirc.core.errors import TimeResolutionError
from hirc.frontend.parser import parse
from hirc.ir.ops import Opcode
from hirc.ir.timing import (TargetModel, comparable, latency_of, loop_timing, resolve_time,
                            trip_count)
from hirc.ir.types import DimKind, IntType, MemrefType, PortKind, StorageKind, to_signed, wrap

from tests.conftest import CORPUS, classes, load


def _errors(src: str) -> list[str]:
    _, diags = parse(src, "test.hir")
    return classes(diags)


def _loops(fn):
    return [op for op in fn.walk() if op.is_loop]


# structure

def test_write_to_read_only_port():
    _, diags = parse((CORPUS / "errors" / "write_to_read_port.hir").read_text())
    assert classes(diags) == ["port-permission"]
    assert "%A" in diags[0].message


def test_exactly_one_return():
    src = "def @f() at %t {\n  return at %t\n  return at %t offset 1\n}\n"
    assert _errors(src) == ["return-count"]


def test_loop_needs_one_yield():
    src = """
def @f() at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c4 = constant 4
  for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t {
  } yield_result %tf
  return at %tf
}
"""
    assert _errors(src) == ["yield-count"]


def test_yield_outside_loop():
    src = "def @f() at %t {\n  yield at %t\n  return at %t\n}\n"
    assert _errors(src) == ["yield-count"]


def test_runtime_op_needs_a_schedule():
    src = """
def @f(%a : i32) -> (i32 delay 0) at %t {
  %s = add %a, %a : i32
  return %s at %t
}
"""
    assert _errors(src) == ["missing-schedule"]


def test_constant_arithmetic_needs_no_schedule():
    src = """
def @f() -> (i32 delay 0) at %t {
  %c2 = constant 2
  %c3 = constant 3
  %c5 = add %c2, %c3
  return %c5 at %t
}
"""
    assert _errors(src) == []


def test_distributed_dimension_needs_constant_index():
    src = """
def @f(%A : memref<4xi32, [dist], r>, %i : i32) -> (i32 delay 0) at %t {
  %v = mem_read %A[%i] at %t
  return %v at %t
}
"""
    assert "distributed-index-not-const" in _errors(src)


def test_unroll_bounds_must_be_constant():
    src = """
def @f(%n : i32) at %t {
  %c0 = constant 0
  %c1 = constant 1
  unroll_for %k = %c0 to %n step %c1 iter_time %tk at %t {
    yield at %tk offset 1
  } yield_result %tu
  return at %tu
}
"""
    assert _errors(src) == ["unroll-bounds-not-const"]


def test_loop_step_must_be_positive():
    src = """
def @f() at %t {
  %c0 = constant 0
  %c4 = constant 4
  for %i : i32 = %c0 to %c4 step %c0 iter_time %ti at %t {
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    assert _errors(src) == ["invalid-loop-step"]


def test_outer_time_variable_is_not_visible_in_a_loop_body():
    src = """
def @f(%Y : memref<4xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c4 = constant 4
  for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t {
    mem_write %c0 to %Y[%c0] at %t offset 2
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    assert _errors(src) == ["time-scope"]


def test_bit_slice_width_must_match():
    src = """
def @f(%a : i32) -> (i8 delay 0) at %t {
  %b = bit_slice %a [3:0] : i8 at %t
  return %b at %t
}
"""
    assert _errors(src) == ["type-mismatch"]


def test_recursion_is_rejected():
    src = """
def @f(%a : i32) -> (i32 delay 1) at %t {
  %r = call @g(%a) at %t
  return %r at %t offset 1
}

def @g(%a : i32) -> (i32 delay 1) at %t {
  %r = call @f(%a) at %t
  return %r at %t offset 1
}
"""
    assert _errors(src) == ["recursive-call"]


def test_call_checks():
    src = """
def @sink(%y : memref<4xi32, [packed], w>) at %t {
  return at %t
}

def @f(%a : i32, %x : memref<4xi32, [packed], r>, %z : memref<8xi32, [packed], w>) at %t {
  call @sink(%x) at %t
  call @sink(%z) at %t
  call @sink(%a) at %t
  call @nowhere(%a) at %t
  return at %t
}
"""
    assert _errors(src) == ["port-permission", "type-mismatch", "type-mismatch", "unknown-function"]


def test_validation_reports_every_problem():
    src = """
def @f(%a : i32) -> (i32 delay 0) at %t {
  %s = add %a, %a : i32
  %b = bit_slice %a [3:0] : i8 at %t
  yield at %t
  return %s at %t
}
"""
    assert sorted(_errors(src)) == ["missing-schedule", "type-mismatch", "yield-count"]


# timing

def test_trip_counts():
    fn = load("transpose").get("transpose")
    assert [trip_count(op) for op in _loops(fn)] == [8, 8]


def test_stencil_loop_timing():
    fn = load("stencil_1d").get("stencil_1d")
    timing = loop_timing(_loops(fn)[0])
    assert (timing.ii, timing.body_latency, timing.trip_count) == (1, 2, 64)
    assert timing.drain == 1
    assert not timing.is_variable


def test_read_modify_write_loop_timing():
    fn = load("histogram").get("histogram")
    clear, count = _loops(fn)
    assert loop_timing(clear).ii == 1
    timing = loop_timing(count)
    assert (timing.ii, timing.body_latency) == (2, 3)
    assert resolve_time(clear.tend).offset == 17
    assert resolve_time(count.tend).offset == 17 + 1 + 63 * 2 + 3


def test_nested_completion_folds_to_the_function_root():
    fn = load("transpose").get("transpose")
    outer, inner = _loops(fn)
    inner_end = resolve_time(inner.tend)
    assert inner_end.base is outer.body.root
    assert inner_end.offset == 1 + 7 + 2
    assert loop_timing(outer).ii == 11
    end = resolve_time(outer.tend)
    assert end.base is fn.root
    assert end.offset == 1 + 7 * 11 + 11


def test_comparable_instants_share_a_root():
    fn = load("transpose").get("transpose")
    outer, inner = _loops(fn)
    assert comparable(resolve_time(outer.schedule), resolve_time(outer.tend))
    assert not comparable(resolve_time(outer.schedule), resolve_time(inner.schedule))


def test_resolution_checks_the_scope():
    fn = load("transpose").get("transpose")
    _, inner = _loops(fn)
    read = next(op for op in inner.body.ops if op.opcode is Opcode.MEM_READ)
    assert resolve_time(read.schedule, scope=inner.body).base is inner.body.root
    with pytest.raises(TimeResolutionError):
        resolve_time(read.schedule, scope=fn.body)


def test_latencies_follow_the_target():
    fn = load("transpose").get("transpose")
    reads = {op.memref.name: op for op in fn.walk() if op.opcode is Opcode.MEM_READ}
    write = next(op for op in fn.walk() if op.opcode is Opcode.MEM_WRITE)
    delay = next(op for op in fn.walk() if op.opcode is Opcode.DELAY)
    assert latency_of(reads["%A"]) == 1
    assert latency_of(reads["%rr"]) == 0
    assert latency_of(write) == 1
    assert latency_of(delay) == 1
    slow = TargetModel(ram_read_latency=3)
    assert latency_of(reads["%A"], slow) == 3


def test_call_latency_is_the_callee_result_delay():
    fn = load("mac_ok").get("mac")
    call = next(op for op in fn.walk() if op.opcode is Opcode.CALL)
    assert latency_of(call) == 3


# types

def test_memref_banking():
    mt = MemrefType(IntType(32), (3, 4, 5), (DimKind.DISTRIBUTED, DimKind.PACKED, DimKind.DISTRIBUTED),
                    PortKind.READ_WRITE)
    assert mt.num_banks == 15
    assert mt.words_per_bank == 4
    dist, packed = mt.split_index((2, 1, 4))
    assert dist == (2, 4)
    assert packed == (1,)
    assert mt.bank_number(dist) == 14
    assert mt.linear_address(packed) == 1
    assert str(mt) == "memref<3x4x5xi32, [dist, packed, dist], rw>"


def test_same_tensor_shape_ignores_the_port():
    mt = MemrefType(IntType(8), (4,), (DimKind.PACKED,), PortKind.WRITE, StorageKind.REG)
    assert mt.same_tensor_shape(mt.with_port(PortKind.READ))
    assert not mt.same_tensor_shape(MemrefType(IntType(8), (4,), (DimKind.PACKED,), PortKind.WRITE))


@pytest.mark.parametrize("value,width,pattern,signed", [(-1, 8, 255, -1), (128, 8, 128, -128),
                                                         (300, 8, 44, 44), (5, 4, 5, 5)])
def test_wrap_and_sign(value, width, pattern, signed):
    assert wrap(value, width) == pattern
    assert to_signed(pattern, width) == signed
