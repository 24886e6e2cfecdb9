"""Per-cycle simulation records and their VCD / CSV renderings."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, TextIO

from vcd import VCDWriter


@dataclass(frozen=True)
class Pulse:
    cycle: int
    signal: str


@dataclass(frozen=True)
class Transaction:
    cycle: int
    port: str
    kind: str  # "read" | "write"
    bank: int
    address: int
    data: Optional[int]


@dataclass(frozen=True)
class Sample:
    cycle: int
    signal: str
    width: int
    value: Optional[int]


@dataclass
class Trace:
    pulses: list[Pulse] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    samples: list[Sample] = field(default_factory=list)

    def pulse(self, cycle: int, signal: str):
        self.pulses.append(Pulse(cycle, signal))

    def transaction(self, cycle: int, port: str, kind: str, bank: int, address: int,
                    data: Optional[int]):
        self.transactions.append(Transaction(cycle, port, kind, bank, address, data))

    def sample(self, cycle: int, signal: str, width: int, value: Optional[int]):
        self.samples.append(Sample(cycle, signal, width, value))

    def write_vcd(self, fp: TextIO):
        signals = sorted({p.signal for p in self.pulses})
        buses = {}
        for s in self.samples:
            buses.setdefault(s.signal, s.width)
        ports = sorted({t.port for t in self.transactions})
        changes: dict[int, list[tuple[str, object]]] = {}

        def at(cycle: int, key: str, value):
            changes.setdefault(cycle, []).append((key, value))

        for p in self.pulses:
            at(p.cycle, "ev:" + p.signal, 1)
            at(p.cycle + 1, "ev:" + p.signal, 0)
        for s in self.samples:
            at(s.cycle, "val:" + s.signal, "x" if s.value is None else s.value & ((1 << s.width) - 1))
        for t in self.transactions:
            at(t.cycle, f"{t.kind}:{t.port}", 1)
            at(t.cycle + 1, f"{t.kind}:{t.port}", 0)
            at(t.cycle, f"addr:{t.port}", t.address)

        with VCDWriter(fp, timescale="1 ns", date="hirc simulation") as writer:
            vars_ = {}
            for name in signals:
                scope, _, leaf = name.rpartition(".")
                vars_["ev:" + name] = writer.register_var(scope or "top", leaf, "wire", size=1, init=0)
            for name, width in sorted(buses.items()):
                scope, _, leaf = name.rpartition(".")
                vars_["val:" + name] = writer.register_var(scope or "top", leaf, "wire", size=width)
            for port in ports:
                scope = "ports." + port.replace(".", "_")
                for kind in ("read", "write"):
                    vars_[f"{kind}:{port}"] = writer.register_var(scope, kind, "wire", size=1, init=0)
                vars_[f"addr:{port}"] = writer.register_var(scope, "addr", "integer", size=32)
            for cycle in sorted(changes):
                pulse_on = {k for k, v in changes[cycle] if v == 1 and not k.startswith(("val:", "addr:"))}
                for key, value in changes[cycle]:
                    if value == 0 and key in pulse_on:
                        continue
                    writer.change(vars_[key], cycle, value)

    def to_vcd(self) -> str:
        buf = io.StringIO()
        self.write_vcd(buf)
        return buf.getvalue()

    def write_csv(self, fp: TextIO):
        """One row per recorded event, sorted by cycle."""
        rows = []
        for p in self.pulses:
            rows.append((p.cycle, "pulse", p.signal, "", "", ""))
        for t in self.transactions:
            rows.append((t.cycle, t.kind, t.port, t.bank, t.address, "" if t.data is None else t.data))
        for s in self.samples:
            rows.append((s.cycle, "value", s.signal, "", "", "poison" if s.value is None else s.value))
        rows.sort(key=lambda r: (r[0], r[1], str(r[2])))
        out = csv.writer(fp, lineterminator="\n")
        out.writerow(["cycle", "record", "signal", "bank", "address", "data"])
        out.writerows(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()
