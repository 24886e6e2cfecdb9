import logging
import time
from contextlib import contextmanager
from typing import Any, Optional

from pydantic import BaseModel, Field

from hirc.backend.plan import LoweringPlan, ResourceReport
from hirc.backend.verilog import lower
from hirc.core.config import get_settings
from hirc.core.diagnostics import Diagnostic, ErrorClass, has_errors
from hirc.core.errors import LoweringError
from hirc.frontend.parser import parse
from hirc.frontend.printer import print_module
from hirc.opt.pipeline import check_pass_names, optimize_module
from hirc.opt.passes import PassReport
from hirc.sim.models import SimInputs, SimResult
from hirc.sim.simulator import Simulator
from hirc.verify.verifier import verify_module

logger = logging.getLogger(__name__)
settings = get_settings()


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}
        self._start = time.perf_counter()

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0

    @property
    def total(self) -> float:
        return time.perf_counter() - self._start


class CheckResult(BaseModel):
    filename: str
    ok: bool = True
    diagnostics: list[dict] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict)
    module: Any = Field(default=None, exclude=True)
    raw_diagnostics: list[Any] = Field(default_factory=list, exclude=True)


class OptimizeResult(CheckResult):
    ir: str = ""
    reports: list[PassReport] = Field(default_factory=list)


class EmitResult(OptimizeResult):
    verilog: str = ""
    plan: Optional[LoweringPlan] = None
    resources: Optional[ResourceReport] = None


class SimulateResult(OptimizeResult):
    result: Optional[SimResult] = None


def _record(result: CheckResult, diags: list[Diagnostic]):
    result.raw_diagnostics.extend(diags)
    result.diagnostics.extend(d.to_json() for d in diags)
    result.ok = result.ok and not has_errors(diags)


class CompilerService:
    """The check / optimize / emit / simulate flows shared by the CLI and the HTTP API."""

    def __init__(self):
        self.settings = settings

    def check(self, source: str, filename: str = "<input>", result: Optional[CheckResult] = None,
              timer: Optional[PhaseTimer] = None) -> CheckResult:
        timer = timer or PhaseTimer()
        result = result or CheckResult(filename=filename)
        with timer.phase("parse"):
            module, diags = parse(source, filename)
        _record(result, diags)
        result.module = module
        if result.ok:
            with timer.phase("verify"):
                _record(result, verify_module(module))
        result.timings = dict(timer.phases)
        return result

    def optimize(self, source: str, filename: str = "<input>", passes: Optional[list[str]] = None,
                 result: Optional[OptimizeResult] = None, timer: Optional[PhaseTimer] = None) -> OptimizeResult:
        timer = timer or PhaseTimer()
        names = self.settings.default_passes if passes is None else passes
        check_pass_names(names)
        result = self.check(source, filename, result or OptimizeResult(filename=filename), timer)
        if not result.ok:
            return result
        with timer.phase("passes"):
            module, reports = optimize_module(result.module, names)
        result.module = module
        result.reports = reports
        result.ir = print_module(module)
        result.timings = dict(timer.phases)
        return result

    def emit(self, source: str, filename: str = "<input>", top: Optional[str] = None,
             passes: Optional[list[str]] = None, ram_style: Optional[str] = None,
             timer: Optional[PhaseTimer] = None) -> EmitResult:
        timer = timer or PhaseTimer()
        result = self.optimize(source, filename, passes, EmitResult(filename=filename), timer)
        if not result.ok:
            return result
        try:
            with timer.phase("emit"):
                result.verilog, result.plan, result.resources = lower(result.module, top=top, ram_style=ram_style)
        except LoweringError as e:
            if not e.diagnostics or any(d.error_class is ErrorClass.INTERNAL for d in e.diagnostics):
                raise
            _record(result, e.diagnostics)
        result.timings = dict(timer.phases)
        return result

    def simulate(self, source: str, filename: str = "<input>", top: Optional[str] = None,
                 inputs: Optional[dict] = None, passes: Optional[list[str]] = None,
                 trace_values: Optional[list[str]] = None, max_cycles: Optional[int] = None,
                 timer: Optional[PhaseTimer] = None) -> SimulateResult:
        timer = timer or PhaseTimer()
        result = SimulateResult(filename=filename)
        if passes:
            self.optimize(source, filename, passes, result, timer)
        else:
            self.check(source, filename, result, timer)
        if not result.ok:
            return result
        module = result.module
        name = top or next((f.name for f in reversed(module.functions) if not f.is_extern), "")
        sim_inputs = SimInputs.model_validate(inputs or {})
        with timer.phase("simulate"):
            result.result = Simulator(module, trace_values=set(trace_values or ()),
                                      max_cycles=max_cycles).run(name, sim_inputs)
        result.timings = dict(timer.phases)
        logger.info("simulated %s @%s in %.3fs", filename, name, result.timings["simulate"])
        return result
