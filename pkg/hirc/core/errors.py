from __future__ import annotations

from typing import Iterable

from hirc.core.diagnostics import Diagnostic


class HircError(Exception):
    """Base class for all toolkit exceptions."""

    def __init__(self, message: str, diagnostics: Iterable[Diagnostic] = ()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class ParseError(HircError):
    pass


class StructureError(HircError):
    pass


class TimeResolutionError(HircError):
    """A schedule refers to a time variable that is not visible in its scope."""


class PassError(HircError):
    pass


class PassVerificationError(PassError):
    """A pass produced a function the schedule verifier rejects."""


class LoweringError(HircError):
    pass


class SimulationError(HircError):
    pass


class MissingInputError(SimulationError):
    pass


class PortScriptError(SimulationError):
    pass


class SimulationTimeout(SimulationError):
    pass
