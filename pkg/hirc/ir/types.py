"""Primitive, time and memref types."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union


@dataclass(frozen=True)
class IntType:
    width: int

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class FloatType:
    width: int

    def __str__(self) -> str:
        return f"f{self.width}"


@dataclass(frozen=True)
class ConstType:
    def __str__(self) -> str:
        return "const"


@dataclass(frozen=True)
class TimeType:
    def __str__(self) -> str:
        return "!time"


class DimKind(str, Enum):
    PACKED = "packed"
    DISTRIBUTED = "dist"


class PortKind(str, Enum):
    READ = "r"
    WRITE = "w"
    READ_WRITE = "rw"

    @property
    def can_read(self) -> bool:
        return self is not PortKind.WRITE

    @property
    def can_write(self) -> bool:
        return self is not PortKind.READ


class StorageKind(str, Enum):
    BRAM = "bram"
    LUTRAM = "lutram"
    REG = "reg"

    @property
    def is_ram(self) -> bool:
        return self is not StorageKind.REG


@dataclass(frozen=True)
class MemrefType:
    element: Union[IntType, FloatType]
    shape: tuple[int, ...]
    dims: tuple[DimKind, ...]
    port: PortKind
    storage: StorageKind = StorageKind.BRAM

    @property
    def distributed_axes(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.dims) if d is DimKind.DISTRIBUTED)

    @property
    def packed_axes(self) -> tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.dims) if d is DimKind.PACKED)

    @property
    def num_banks(self) -> int:
        return math.prod(self.shape[i] for i in self.distributed_axes)

    @property
    def words_per_bank(self) -> int:
        return math.prod(self.shape[i] for i in self.packed_axes)

    @property
    def bank_shape(self) -> tuple[int, ...]:
        return tuple(self.shape[i] for i in self.distributed_axes)

    def split_index(self, index: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """(distributed part, packed part) of a full index tuple."""
        return (
            tuple(index[i] for i in self.distributed_axes),
            tuple(index[i] for i in self.packed_axes),
        )

    def linear_address(self, packed: tuple[int, ...]) -> int:
        """Row-major over packed dims in declaration order."""
        addr = 0
        for axis, idx in zip(self.packed_axes, packed):
            addr = addr * self.shape[axis] + idx
        return addr

    def bank_number(self, dist: tuple[int, ...]) -> int:
        bank = 0
        for axis, idx in zip(self.distributed_axes, dist):
            bank = bank * self.shape[axis] + idx
        return bank

    def same_tensor_shape(self, other: "MemrefType") -> bool:
        return (self.element, self.shape, self.dims, self.storage) == (
            other.element, other.shape, other.dims, other.storage)

    def with_port(self, port: PortKind) -> "MemrefType":
        return MemrefType(self.element, self.shape, self.dims, port, self.storage)

    def __str__(self) -> str:
        shape = "x".join(str(s) for s in self.shape)
        dims = ", ".join(d.value for d in self.dims)
        text = f"memref<{shape}x{self.element}, [{dims}], {self.port.value}"
        if self.storage is not StorageKind.BRAM:
            text += f", {self.storage.value}"
        return text + ">"


PrimitiveType = Union[IntType, FloatType, ConstType]
Type = Union[IntType, FloatType, ConstType, TimeType, MemrefType]

CONST = ConstType()
TIME = TimeType()


def is_primitive(ty) -> bool:
    return isinstance(ty, (IntType, FloatType))


def bit_width(ty) -> int:
    if isinstance(ty, (IntType, FloatType)):
        return ty.width
    return 32


def wrap(value: int, width: int) -> int:
    """Two's-complement bit pattern of `value` at `width` bits."""
    return value & ((1 << width) - 1)


def to_signed(pattern: int, width: int) -> int:
    pattern &= (1 << width) - 1
    if pattern >> (width - 1):
        return pattern - (1 << width)
    return pattern
