import numpy as np
import pytest

from hirc.core.errors import MissingInputError, PortScriptError, SimulationError
from hirc.frontend.parser import parse_or_raise
from hirc.ir.ops import Opcode
from hirc.ir.timing import resolve_time
from hirc.sim.models import SimInputs, UBKind
from hirc.sim.simulator import Simulator, run
from hirc.verify.verifier import verify

from tests.conftest import (CORPUS, RANDOM_CASES, corpus_path, expected_output, fir, load, load_inputs,
                            parse_text, random_inputs, wrap32)


@pytest.mark.parametrize("name,seed", RANDOM_CASES)
def test_random_inputs_match_numpy(name, seed):
    inputs = random_inputs(name, seed)
    result = run(load(name), name, inputs)
    out, expected = expected_output(name, inputs)
    assert result.tensors[out] == expected
    assert result.ub_events == []


def test_transpose_matches_numpy():
    inputs = load_inputs("transpose")
    result = run(load("transpose"), "transpose", inputs)
    assert result.tensors["C"] == np.array(inputs["tensors"]["A"]).T.tolist()
    assert result.completion_cycle == 89
    assert result.ub_events == []


def test_transpose_identity():
    eye = np.eye(8, dtype=int).tolist()
    result = run(load("transpose"), "transpose", {"tensors": {"A": eye}})
    assert result.tensors["C"] == eye


def test_array_add_matches_numpy():
    inputs = load_inputs("array_add")
    result = run(load("array_add"), "array_add", inputs)
    a, b = (np.array(inputs["tensors"][k]) for k in "AB")
    assert result.tensors["C"] == (a + b).tolist()
    assert result.completion_cycle == 1 + 63 + 2


@pytest.mark.parametrize("seed", [0, 1])
def test_array_add_wraps_at_32_bits(seed):
    rng = np.random.default_rng(seed)
    a, b = (rng.integers(-2**31, 2**31, size=64) for _ in range(2))
    result = run(load("array_add"), "array_add", {"tensors": {"A": a.tolist(), "B": b.tolist()}})
    assert result.tensors["C"] == [wrap32(x + y) for x, y in zip(a.tolist(), b.tolist())]


def test_stencil_matches_numpy():
    inputs = load_inputs("stencil_1d")
    result = run(load("stencil_1d"), "stencil_1d", inputs)
    assert result.tensors["y"] == fir(inputs["tensors"]["x"]).tolist()
    assert result.completion_cycle == 66
    assert result.ub_events == []


def test_histogram_matches_bincount():
    inputs = load_inputs("histogram")
    result = run(load("histogram"), "histogram", inputs)
    x = np.array(inputs["tensors"]["x"])
    assert result.tensors["h"] == np.bincount(x & 15, minlength=16).tolist()
    assert result.ub_events == []


@pytest.mark.parametrize("seed", [0, 1])
def test_histogram_with_repeated_bins(seed):
    x = np.random.default_rng(seed).integers(0, 4, size=64)
    inputs = {"tensors": {"x": x.tolist(), "h": [99] * 16}}
    result = run(load("histogram"), "histogram", inputs)
    assert result.tensors["h"] == np.bincount(x, minlength=16).tolist()


def test_gemm_matches_numpy():
    inputs = load_inputs("gemm")
    result = run(load("gemm"), "gemm", inputs)
    a, b = (np.array(inputs["tensors"][k], dtype=np.int64) for k in "AB")
    assert result.tensors["C"] == (a @ b).tolist()
    assert result.completion_cycle > 16 * 16 * 16
    assert result.ub_events == []


def test_convolution_matches_numpy():
    inputs = load_inputs("convolution")
    result = run(load("convolution"), "convolution", inputs)
    img = np.array(inputs["tensors"]["img"])
    ker = np.array(inputs["tensors"]["ker"])
    expected = [[int((img[r:r + 3, c:c + 3] * ker).sum()) for c in range(6)] for r in range(6)]
    assert result.tensors["out"] == expected
    assert result.ub_events == []


def test_unrolled_copies_run_in_parallel():
    result = run(load("unroll_loop"), "unroll_loop", load_inputs("unroll_loop"))
    assert result.tensors["y"] == [2, 4, 6, 8]
    assert result.completion_cycle == 3
    assert result.ub_events == []


def test_mac_with_external_multiplier():
    result = run(load("mac_ok"), "mac", load_inputs("mac"))
    assert result.outputs == [17]
    assert result.completion_cycle == 3


def test_custom_extern_model():
    sim = Simulator(load("mac_ok"), externs={"mult": lambda a, b: a * b + 1})
    assert sim.run("mac", load_inputs("mac")).outputs == [18]


def test_delayed_outputs():
    result = run(load("delays"), "delays", load_inputs("delays"))
    assert result.outputs == [7, 7]
    assert result.completion_cycle == 5


def test_alloc_ports_share_one_tensor():
    src = """
def @pair() -> (i32 delay 2) at %t {
  %c0 = constant 0
  %c7 = constant 7
  %w, %r = alloc : memref<1xi32, [packed], w, reg>, memref<1xi32, [packed], r, reg>
  mem_write %c7 to %w[%c0] at %t
  %v = mem_read %r[%c0] at %t offset 2
  return %v at %t offset 2
}
"""
    result = run(parse_text(src), "pair")
    assert result.outputs == [7]
    assert result.ub_events == []


def test_task_level_overlap_halves_latency():
    module = load("task_parallel")
    inputs = load_inputs("task_parallel")
    fast = run(module, "overlapped", inputs)
    slow = run(module, "sequential", inputs)
    expected = fir(fir(inputs["tensors"]["x"])).tolist()
    assert fast.tensors["y"] == slow.tensors["y"] == expected
    assert fast.completion_cycle == 68
    assert slow.completion_cycle == 132
    assert fast.ub_events == slow.ub_events == []


def test_fifo_consumes_scripted_producer():
    result = run(load("fifo"), "fifo", load_inputs("fifo"))
    assert result.tensors["outq"] == [10 * i + 1 for i in range(16)]
    assert result.ub_events == []


def test_fifo_late_producer_reads_uninitialized_data():
    inputs = load_inputs("fifo")
    inputs["port_scripts"]["inq"][5]["cycle"] = 40
    result = run(load("fifo"), "fifo", inputs)
    assert UBKind.UNINITIALIZED_READ.value in result.ub_kinds()
    assert result.tensors["outq"][5] is None
    assert result.tensors["outq"][4] == 41


def test_port_script_out_of_bounds_is_rejected():
    inputs = {"port_scripts": {"inq": [{"cycle": 0, "index": [16], "data": 1}]}}
    with pytest.raises(PortScriptError):
        run(load("fifo"), "fifo", inputs)


LATENCY_CASES = [(n, ii) for n in (1, 2, 5, 17, 32) for ii in (1, 2, 3, 4)]


@pytest.mark.parametrize("n,ii", LATENCY_CASES)
def test_pipelined_loop_latency(n, ii):
    src = corpus_path("stencil_1d").read_text().replace("%c64", "%cn").replace("64", str(n)) \
        .replace("yield at %ti offset 1", f"yield at %ti offset {ii}")
    module = parse_text(src)
    fn = module.get("stencil_1d")
    assert [d for d in verify(fn) if d.is_error] == []
    loop = next(op for op in fn.walk() if op.opcode is Opcode.FOR)
    expected = 1 + (n - 1) * ii + max(ii, 2)
    assert resolve_time(loop.tend).offset == expected

    x = np.random.default_rng(n * 10 + ii).integers(-500, 500, size=n)
    result = run(module, "stencil_1d", {"tensors": {"x": x.tolist()}})
    assert result.completion_cycle == expected
    assert result.tensors["y"] == fir(x).tolist()


def test_out_of_bounds_access():
    src = """
def @oob(%A : memref<4xi32, [packed], r>, %Y : memref<8xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c5 = constant 5
  for %i : i32 = %c0 to %c5 step %c1 iter_time %ti at %t offset 1 {
    %a = mem_read %A[%i] at %ti
    %i1 = delay %i by 1 at %ti
    mem_write %a to %Y[%i1] at %ti offset 1
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    result = run(parse_text(src), "oob", {"tensors": {"A": [1, 2, 3, 4]}})
    assert result.ub_kinds() == ["out-of-bounds"]
    assert result.tensors["Y"][:4] == [1, 2, 3, 4]
    # the out-of-range read delivers poison
    assert result.tensors["Y"][4] is None


def test_bound_inversion_skips_the_loop():
    src = """
def @inv(%n : i32 delay 1, %Y : memref<4xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c4 = constant 4
  for %i : i32 = %c4 to %n step %c1 iter_time %ti at %t offset 1 {
    mem_write %c0 to %Y[%c0] at %ti
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    result = run(parse_text(src), "inv", {"scalars": {"n": 2}})
    assert result.ub_kinds() == ["bound-inversion"]
    assert result.tensors["Y"] == [None] * 4
    assert result.completion_cycle is not None


def test_loop_restarted_while_busy():
    src = """
def @reenter() at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c4 = constant 4
  for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t offset 1 {
    for %j : i32 = %c0 to %c4 step %c1 iter_time %tj at %ti {
      yield at %tj offset 1
    } yield_result %tj_end
    yield at %ti offset 1
  } yield_result %tf
  return at %tf
}
"""
    result = run(parse_text(src), "reenter", {})
    assert UBKind.LOOP_REENTRY.value in result.ub_kinds()


def test_same_cycle_port_conflict_at_runtime():
    module = parse_or_raise((CORPUS / "errors" / "port_conflict.hir").read_text(), "port_conflict.hir")
    result = run(module, "conflict", {"tensors": {"A": [1, 2, 3, 4]}})
    assert result.ub_kinds() == ["port-conflict"]


def test_stale_value_shows_up_as_timing_violation():
    result = Simulator(load("err_add")).run("array_add", load_inputs("array_add"))
    assert set(result.ub_kinds()) == {"timing-violation"}
    assert result.ub_events[0].location.endswith(":14:5")


def test_early_use_of_pipelined_result_is_a_timing_violation():
    result = run(load("mac"), "mac", load_inputs("mac"))
    assert "timing-violation" in result.ub_kinds()
    assert result.outputs == [None]


def test_missing_tensor_input():
    inputs = load_inputs("array_add")
    del inputs["tensors"]["B"]
    with pytest.raises(MissingInputError, match="%B"):
        run(load("array_add"), "array_add", inputs)


def test_missing_scalar_input():
    with pytest.raises(MissingInputError):
        run(load("delays"), "delays", {})


def test_unknown_top_function():
    with pytest.raises(SimulationError):
        run(load("delays"), "nope", {})
    with pytest.raises(SimulationError):
        run(load("mac_ok"), "mult", {})


def test_wrong_input_shape():
    with pytest.raises(SimulationError):
        run(load("transpose"), "transpose", {"tensors": {"A": [1, 2, 3]}})


def test_cycle_limit_stops_the_run():
    result = run(load("gemm"), "gemm", load_inputs("gemm"), max_cycles=100)
    assert result.timed_out
    assert result.completion_cycle is None
    assert result.cycles <= 101


def test_inputs_accept_model_and_sigil_names():
    inputs = SimInputs(scalars={"%a": 7})
    assert run(load("delays"), "delays", inputs).outputs == [7, 7]


def test_trace_renders_vcd_and_csv():
    sim = Simulator(load("array_add"), trace_values={"s"})
    result = sim.run("array_add", load_inputs("array_add"))
    vcd = result.trace.to_vcd()
    assert "$timescale" in vcd
    assert "$enddefinitions" in vcd
    assert "return" in vcd
    csv_text = result.trace.to_csv()
    lines = csv_text.splitlines()
    assert lines[0] == "cycle,record,signal,bank,address,data"
    assert any(",read," in line for line in lines)
    assert any(",value," in line and "s" in line for line in lines)
    cycles = [int(line.split(",")[0]) for line in lines[1:]]
    assert cycles == sorted(cycles)
