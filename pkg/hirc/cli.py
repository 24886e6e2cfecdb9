"""Command-line driver: `hirc check|opt|emit|sim|serve`.

Exit codes: 0 on success, 1 when the design produced error diagnostics or the simulation hit
undefined behaviour or its cycle limit, 2 on usage, input or internal errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from hirc.core.config import get_settings
from hirc.core.diagnostics import ErrorClass, SourceSpan, error, render
from hirc.core.errors import HircError
from hirc.core.logging import setup_logging
from hirc.opt.pipeline import parse_pass_list
from hirc.services.compiler_service import CompilerService, PhaseTimer

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_USAGE = 0, 1, 2
PHASES = ("parse", "verify", "passes", "emit", "simulate")


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json-diagnostics", action="store_true",
                        help="print diagnostics as one JSON object per line")
    common.add_argument("--time-report", action="store_true", help="print wall-clock time per phase")
    common.add_argument("--log-level", default=settings.LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="hirc", description="HIR hardware IR toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="parse, validate and verify schedules")
    p.add_argument("files", nargs="+")

    p = sub.add_parser("opt", parents=[common], help="check, optimize and print the IR")
    p.add_argument("files", nargs="+")
    p.add_argument("--passes", default=None, help=f"comma separated (default: {settings.DEFAULT_PASSES})")
    p.add_argument("--print-report", action="store_true", help="print what each pass changed")
    p.add_argument("-o", "--output")

    p = sub.add_parser("emit", parents=[common], help="optimize and lower to Verilog")
    p.add_argument("file")
    p.add_argument("--top")
    p.add_argument("--passes", default=None)
    p.add_argument("--ram-style", choices=("auto", "block", "dist", "reg"), default=None)
    p.add_argument("--emit-plan", metavar="PATH", help="write the lowering plan and resource report as JSON")
    p.add_argument("-o", "--output")

    p = sub.add_parser("sim", parents=[common], help="simulate a function cycle by cycle")
    p.add_argument("file")
    p.add_argument("--top", required=True)
    p.add_argument("--inputs", metavar="JSON", help="scalars, tensors and port scripts")
    p.add_argument("--passes", default="", help="optimize before simulating (default: none)")
    p.add_argument("--max-cycles", type=int, default=None)
    p.add_argument("--trace", metavar="VCD")
    p.add_argument("--trace-csv", metavar="CSV")
    p.add_argument("--trace-values", default="", help="comma separated value names to sample")
    p.add_argument("-o", "--output")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP compile service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def report_timing(elapsed: dict[str, float], total: Optional[float] = None) -> str:
    """One summary line of wall-clock time per phase, in milliseconds."""
    parts = [f"{name} {elapsed.get(name, 0.0) * 1e3:.1f} ms" for name in PHASES if name in elapsed]
    total = sum(elapsed.values()) if total is None else total
    return f"timing: {', '.join(parts) or 'no phases'}; total {total * 1e3:.1f} ms"


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise HircError(f"cannot read {path}", [error(ErrorClass.IO_ERROR, SourceSpan(path, 0, 0), str(e))]) from e


def _write(path: Optional[str], text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _show(result, args) -> bool:
    if result.raw_diagnostics:
        color = get_settings().COLOR and sys.stderr.isatty() and not args.json_diagnostics
        print(render(result.raw_diagnostics, args.json_diagnostics, color), file=sys.stderr)
    return result.ok


def _passes(text: Optional[str]) -> Optional[list[str]]:
    return None if text is None else parse_pass_list(text)


def run_check(service: CompilerService, args, timer: PhaseTimer) -> int:
    ok = True
    for path in args.files:
        ok &= _show(service.check(_read(path), path, timer=timer), args)
    return EXIT_OK if ok else EXIT_DIAGNOSTICS


def run_opt(service: CompilerService, args, timer: PhaseTimer) -> int:
    ok, texts = True, []
    for path in args.files:
        result = service.optimize(_read(path), path, _passes(args.passes), timer=timer)
        ok &= _show(result, args)
        if result.ok:
            texts.append(result.ir)
            if args.print_report:
                for report in result.reports:
                    print(report.summary(), file=sys.stderr)
    if texts:
        _write(args.output, "\n".join(texts))
    return EXIT_OK if ok else EXIT_DIAGNOSTICS


def run_emit(service: CompilerService, args, timer: PhaseTimer) -> int:
    result = service.emit(_read(args.file), args.file, args.top, _passes(args.passes), args.ram_style, timer=timer)
    if not _show(result, args):
        return EXIT_DIAGNOSTICS
    _write(args.output, result.verilog)
    if args.emit_plan:
        doc = {"plan": result.plan.model_dump(mode="json"), "resources": result.resources.model_dump(mode="json")}
        Path(args.emit_plan).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def run_sim(service: CompilerService, args, timer: PhaseTimer) -> int:
    inputs = {}
    if args.inputs:
        try:
            inputs = json.loads(_read(args.inputs))
        except json.JSONDecodeError as e:
            raise _Usage(f"{args.inputs}: invalid JSON: {e}") from e
    trace_values = [v.strip() for v in args.trace_values.split(",") if v.strip()]
    result = service.simulate(_read(args.file), args.file, args.top, inputs, _passes(args.passes) or None,
                              trace_values, args.max_cycles, timer=timer)
    if not _show(result, args):
        return EXIT_DIAGNOSTICS
    sim = result.result
    _write(args.output, json.dumps(sim.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fp:
            sim.trace.write_vcd(fp)
    if args.trace_csv:
        with open(args.trace_csv, "w", encoding="utf-8", newline="") as fp:
            sim.trace.write_csv(fp)
    for event in sim.ub_events:
        print(f"{event.location}: ub[{event.kind.value}] at cycle {event.cycle}: {event.details}",
              file=sys.stderr)
    if sim.timed_out:
        print(f"simulation of @{args.top} stopped after {sim.cycles} cycles", file=sys.stderr)
    if sim.timed_out or sim.ub_events:
        return EXIT_DIAGNOSTICS
    return EXIT_OK


COMMANDS = {"check": run_check, "opt": run_opt, "emit": run_emit, "sim": run_sim}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    setup_logging(args.log_level)
    if args.command == "serve":
        from hirc.main import serve
        serve(args.host, args.port)
        return EXIT_OK
    service = CompilerService()
    timer = PhaseTimer()
    try:
        code = COMMANDS[args.command](service, args, timer)
    except _Usage as e:
        print(f"hirc: {e}", file=sys.stderr)
        return EXIT_USAGE
    except HircError as e:
        print(render(e.diagnostics, args.json_diagnostics) if e.diagnostics else f"hirc: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        logger.exception("internal error")
        return EXIT_USAGE
    if args.time_report:
        print(report_timing(timer.phases, timer.total), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
