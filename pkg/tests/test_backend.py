import pytest
from pydantic import BaseModel

from hirc.backend.memref import Access, address_width, lower_memref
from hirc.backend.plan import (EventWire, LoopController, OpGate, ShiftChain, StorageBinding,
                               audit_event_algebra)
from hirc.backend.verilog import emit_assertions, emit_extern_decl, lower
from hirc.core.diagnostics import ErrorClass
from hirc.core.errors import LoweringError
from hirc.ir.types import DimKind, IntType, MemrefType, PortKind, StorageKind
from hirc.opt.pipeline import optimize_module

from tests.conftest import KERNELS, load, parse_text


def _lutram(shape=(8,), dims=(DimKind.PACKED,)):
    return MemrefType(IntType(16), shape, dims, PortKind.READ, StorageKind.LUTRAM)


@pytest.mark.parametrize("name", KERNELS)
def test_lowering_is_deterministic(name):
    first, _, _ = lower(load(name))
    second, _, _ = lower(load(name))
    assert first == second


@pytest.mark.parametrize("name", KERNELS)
def test_plan_and_report_agree(name):
    module = load(name)
    _, plan, report = lower(module)
    assert audit_event_algebra(module, plan) == []
    assert report.registers == report.chain_registers + report.counter_bits + report.result_registers
    assert report.chain_registers == sum(c.depth for f in plan.functions for c in f.chains)


def test_module_text_layout():
    text, _, _ = lower(load("transpose"), top="transpose")
    lines = text.splitlines()
    assert lines[0].startswith("// Generated by hirc ")
    assert lines[0].endswith("transpose.hir")
    assert lines[1] == "`timescale 1ns / 1ps"
    assert "module transpose (" in text
    assert text.rstrip().endswith("endmodule")
    for port in ("input clk", "input rst", "input start", "output done"):
        assert port in text
    assert "output [5:0] A_addr_b0" in text
    assert "input [31:0] A_rd_data_b0" in text
    # statements are preceded by the source location they come from
    assert "// " + str(load("transpose").get("transpose").location) in text


def test_transpose_resources():
    _, plan, report = lower(load("transpose"))
    fl = plan.get("transpose")
    assert [l.kind for l in fl.loops] == ["for", "for"]
    assert report.counter_widths == [32, 32]
    assert report.ram_instances == 0
    assert report.register_arrays == 1
    external = [m.name for m in fl.memories if m.external]
    assert external == ["A", "C"]
    assert report.chain_registers == 2


def test_narrowed_counters_shrink_the_report():
    module, _ = optimize_module(load("transpose"), ["narrow_precision"])
    _, _, report = lower(module)
    assert sorted(report.counter_widths) == [4, 4]
    assert report.counter_bits == 8


def test_shared_delay_prefix_saves_registers():
    module = load("delays")
    _, _, before = lower(module)
    optimized, _ = optimize_module(module, ["dedup_time_and_delays"])
    _, _, after = lower(optimized)
    assert before.chain_registers == 7
    assert after.chain_registers == 5
    assert before.counter_bits == after.counter_bits == 0


def test_called_functions_are_lowered_once():
    text, plan, report = lower(load("task_parallel"), top="overlapped")
    assert [f.name for f in plan.functions] == ["fir", "overlapped"]
    assert text.count("module fir (") == 1
    assert len(plan.get("overlapped").instances) == 2
    assert report.ram_instances == 1
    assert report.register_arrays == 2
    assert report.result_registers == 1
    assert "sequential" not in text


def test_ram_style_attribute():
    text, _, _ = lower(load("task_parallel"), top="overlapped", ram_style="dist")
    assert '(* ram_style = "distributed" *)' in text
    text, _, _ = lower(load("task_parallel"), top="overlapped")
    assert '(* ram_style = "block" *)' in text


def test_register_style_on_a_read_ram_is_rejected():
    with pytest.raises(LoweringError) as exc:
        lower(load("task_parallel"), top="overlapped", ram_style="reg")
    assert exc.value.diagnostics[0].error_class is ErrorClass.RAM_STYLE_CONFLICT


def test_port_limit():
    with pytest.raises(LoweringError) as exc:
        lower(load("task_parallel"), top="overlapped", port_limit=1)
    assert exc.value.diagnostics[0].error_class is ErrorClass.PORT_LIMIT


def test_lower_memref_choices():
    mt = _lutram()
    binding = lower_memref(mt, [Access("m", "read")], "m", ["m"])
    assert binding.kind == "ram"
    assert binding.ram_style == "distributed"
    assert binding.read_latency == 1
    assert binding.address_width == 3
    assert lower_memref(mt, [], "m", ["m"], ram_style="block").ram_style == "block"
    # a write-only RAM may become registers
    regs = lower_memref(mt, [Access("m", "write")], "m", ["m"], ram_style="reg")
    assert regs.kind == "reg"
    assert regs.read_latency == 0


def test_lower_memref_banks():
    mt = _lutram(shape=(4, 8), dims=(DimKind.DISTRIBUTED, DimKind.PACKED))
    binding = lower_memref(mt, [], "m", ["m"])
    assert binding.banks == 4
    assert binding.words == 8
    assert binding.width == 16


def test_lower_memref_errors():
    mt = _lutram()
    with pytest.raises(LoweringError) as exc:
        lower_memref(mt, [Access("m", "read")], "m", ["m"], ram_style="reg")
    assert exc.value.diagnostics[0].error_class is ErrorClass.RAM_STYLE_CONFLICT
    with pytest.raises(LoweringError) as exc:
        lower_memref(mt, [], "m", ["a", "b", "c"], port_limit=2)
    assert exc.value.diagnostics[0].error_class is ErrorClass.PORT_LIMIT
    with pytest.raises(LoweringError):
        lower_memref(mt, [], "m", ["m"], ram_style="ultra")


@pytest.mark.parametrize("words,width", [(1, 1), (2, 1), (8, 3), (9, 4), (64, 6)])
def test_address_width(words, width):
    assert address_width(words) == width


def test_extern_declaration():
    module = load("mac_ok")
    text = emit_extern_decl(module.get("mult"))
    assert text.startswith("// extern @mult: black box, fixed latency")
    assert "(start + 3)" in text
    full, plan, _ = lower(module, top="mac")
    assert plan.externs == ["mult"]
    assert "mult u_mult_" in full


def test_assertions_are_guarded_by_a_macro():
    text, plan, _ = lower(load("transpose"))
    assert "`ifdef HIRC_ASSERTIONS" in text
    assert "`endif // HIRC_ASSERTIONS" in text
    fl = plan.get("transpose")
    kinds = {a.kind for a in fl.assertions}
    assert {"bounds", "loop-reentry", "initialized-read"} <= kinds
    block = emit_assertions(fl, macro="MY_CHECKS")
    assert block.startswith("`ifdef MY_CHECKS")
    assert block.endswith("`endif // MY_CHECKS")


def test_runtime_loop_bounds_use_signed_compare():
    src = """
def @count(%n : i32 delay 1, %Y : memref<16xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  for %i : i32 = %c0 to %n step %c1 iter_time %ti at %t offset 1 {
    mem_write %c1 to %Y[%i] at %ti
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    text, plan, _ = lower(parse_text(src))
    loop = plan.get("count").loops[0]
    assert loop.signed_compare
    assert loop.trip_count is None
    assert "$signed(" in text
    assert "loop-bounds" in {a.kind for a in plan.get("count").assertions}


def test_unrolled_copies_get_their_own_events():
    _, plan, _ = lower(load("unroll_loop"))
    fl = plan.get("unroll_loop")
    loop = fl.loops[0]
    assert loop.kind == "unroll_for"
    assert loop.copies == 4
    copies = {e.copy_path for e in fl.events if e.time_var == "%tk"}
    assert len(copies) == 4


def test_ungated_chains():
    text, plan, _ = lower(load("delays"), gated_chains=False)
    assert all(not c.clock_enabled for c in plan.get("delays").chains)
    gated, _, _ = lower(load("delays"))
    assert gated != text


def test_schedule_errors_block_lowering():
    with pytest.raises(LoweringError) as exc:
        lower(load("err_add"))
    assert [d.error_class for d in exc.value.diagnostics] == [ErrorClass.STALE_ITERATION_VALUE]


def test_unknown_top():
    with pytest.raises(LoweringError) as exc:
        lower(load("delays"), top="missing")
    assert exc.value.diagnostics[0].error_class is ErrorClass.UNKNOWN_FUNCTION


@pytest.mark.parametrize("model", [EventWire, OpGate, LoopController, ShiftChain, StorageBinding])
def test_plan_fields_leave_model_methods_alone(model):
    assert not set(model.model_fields) & set(dir(BaseModel))
