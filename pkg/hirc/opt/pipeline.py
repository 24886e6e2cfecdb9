from __future__ import annotations

import logging
from typing import Iterable, Optional

from hirc.core.diagnostics import ErrorClass, error, has_errors
from hirc.core.errors import PassError, PassVerificationError
from hirc.ir.ops import Function, Module
from hirc.ir.timing import settle_loop_timing
from hirc.opt.passes import PASSES, PassReport
from hirc.verify.verifier import verify

logger = logging.getLogger(__name__)


def parse_pass_list(text: Optional[str]) -> list[str]:
    if not text:
        return []
    return [p.strip() for p in text.split(",") if p.strip()]


def check_pass_names(names: Iterable[str]):
    unknown = [n for n in names if n not in PASSES]
    if unknown:
        raise PassError(
            f"unknown pass: {', '.join(unknown)}",
            [error(ErrorClass.UNKNOWN_PASS, None,
                   f"unknown pass '{n}'; available: {', '.join(PASSES)}") for n in unknown])


def run_pipeline(fn: Function, passes: Iterable[str]) -> tuple[Function, list[PassReport]]:
    """Apply `passes` in order. The result of every pass must verify without errors."""
    names = list(passes)
    check_pass_names(names)
    if fn.is_extern or not names:
        return fn, []
    if has_errors(verify(fn)):
        raise PassError(f"@{fn.name} is not schedule-valid; refusing to optimize")
    reports = []
    for name in names:
        fn, report = PASSES[name](fn)
        report.function = fn.name
        settle_loop_timing(fn)
        diags = verify(fn)
        if has_errors(diags):
            logger.error("pass %s broke @%s", name, fn.name)
            raise PassVerificationError(
                f"pass {name} produced an invalid schedule in @{fn.name}",
                [error(ErrorClass.INTERNAL, d.location, f"after {name}: {d.message}")
                 for d in diags if d.is_error])
        logger.info(report.summary())
        reports.append(report)
    return fn, reports


def optimize_module(module: Module, passes: Iterable[str]) -> tuple[Module, list[PassReport]]:
    names = list(passes)
    reports: list[PassReport] = []
    out = module
    for fn in module:
        new_fn, fn_reports = run_pipeline(fn, names)
        out = out.replace(new_fn)
        reports.extend(fn_reports)
    return out, reports
