from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from hirc.core.config import get_settings
from hirc.core.diagnostics import ErrorClass, SourceSpan, error
from hirc.core.errors import LoweringError
from hirc.ir.types import MemrefType, StorageKind
from hirc.backend.plan import StorageBinding

logger = logging.getLogger(__name__)

RAM_STYLES = ("auto", "block", "dist", "reg")
_STYLE_ATTR = {"block": "block", "dist": "distributed"}


@dataclass(frozen=True)
class Access:
    port: str
    kind: str  # "read" | "write"
    location: Optional[SourceSpan] = None


def address_width(words: int) -> int:
    return max(1, (words - 1).bit_length())


def lower_memref(mt: MemrefType, accesses: Iterable[Access], name: str, ports: Sequence[str],
                 ram_style: str = "auto", port_limit: Optional[int] = None, external: bool = False,
                 location: Optional[SourceSpan] = None) -> StorageBinding:
    """Choose the storage that implements one tensor.

    Distributed dims become separate banks; packed dims are linearized row-major inside
    each bank. A forced `reg` style is rejected for RAM tensors that are read, since it
    would change their read latency.
    """
    if ram_style not in RAM_STYLES:
        raise LoweringError(f"unknown ram style '{ram_style}'")
    accesses = list(accesses)
    limit = port_limit if port_limit is not None else get_settings().PORT_LIMIT
    kind, style = "reg", None
    if mt.storage.is_ram:
        if ram_style == "reg":
            reads = [a for a in accesses if a.kind == "read"]
            if reads:
                raise LoweringError(
                    f"--ram-style=reg changes the read latency of {name}",
                    [error(ErrorClass.RAM_STYLE_CONFLICT, reads[0].location,
                           f"{name} is declared {mt.storage.value} and read with 1-cycle latency; "
                           f"register storage would read in 0 cycles")])
        else:
            kind = "ram"
            if ram_style == "auto":
                style = "distributed" if mt.storage is StorageKind.LUTRAM else "block"
            else:
                style = _STYLE_ATTR[ram_style]
    if kind == "ram" and len(ports) > limit:
        raise LoweringError(
            f"{name} needs {len(ports)} ports",
            [error(ErrorClass.PORT_LIMIT, location,
                   f"{name} has {len(ports)} ports but each RAM bank has at most {limit}")])
    binding = StorageBinding(
        name=name, kind=kind, ram_style=style, external=external, banks=mt.num_banks,
        words=mt.words_per_bank, width=mt.element.width, address_width=address_width(mt.words_per_bank),
        read_latency=1 if kind == "ram" else 0, ports=list(ports))
    logger.debug("storage %s: %d x %s bank(s) of %d words", name, binding.banks, kind, binding.words)
    return binding


def site_bank(mt: MemrefType, indices: Sequence[Union[int, str]]) -> int:
    """Bank selected by the (compile-time) distributed indices of an access."""
    dist, _ = mt.split_index(tuple(indices))
    return mt.bank_number(tuple(int(i) for i in dist))


def address_expr(mt: MemrefType, indices: Sequence[Union[int, str]]) -> str:
    """Verilog expression of the row-major address over the packed indices.

    Integer entries are folded; string entries are Verilog operand expressions.
    """
    _, packed = mt.split_index(tuple(indices))
    if all(isinstance(i, int) for i in packed):
        return str(mt.linear_address(tuple(packed)))
    terms = []
    stride = 1
    const = 0
    for axis, idx in reversed(list(zip(mt.packed_axes, packed))):
        if isinstance(idx, int):
            const += idx * stride
        else:
            terms.append(idx if stride == 1 else f"{idx} * {stride}")
        stride *= mt.shape[axis]
    terms.reverse()
    if const:
        terms.append(str(const))
    return " + ".join(terms)
