"""Flow-record CSV ingestion, block partitioning and chronological splits.

Record rows follow the 12-column schema::

    start_ms,end_ms,src_ip,dst_ip,src_port,dst_port,protocol,bytes,packets,tcp_flags,exporter_id,vlan

A header line is optional. ``tcp_flags`` may be decimal or ``0x`` hex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from ipaddress import AddressValueError, IPv4Address
from pathlib import Path
from typing import Iterable, Iterator, Sequence

COLUMNS = (
    "start_ms", "end_ms", "src_ip", "dst_ip", "src_port", "dst_port",
    "protocol", "bytes", "packets", "tcp_flags", "exporter_id", "vlan",
)
HEADER = ",".join(COLUMNS)


class ParseError(ValueError):
    """Row could not be split or converted."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class ValidationError(ParseError):
    """Row parsed but a field is out of range."""


def ip_to_int(text: str) -> int:
    return int(IPv4Address(text))


def int_to_ip(value: int) -> str:
    return str(IPv4Address(value))


@dataclass(frozen=True, slots=True)
class FlowRecord:
    """One unidirectional exporter record. Addresses are 32-bit ints."""

    start_ms: int
    end_ms: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: int
    bytes: int
    packets: int
    tcp_flags: int
    exporter_id: int
    vlan: int

    def validate(self) -> None:
        if self.end_ms < self.start_ms:
            raise ValidationError(f"end_ms {self.end_ms} < start_ms {self.start_ms}")
        for name in ("src_port", "dst_port"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFF:
                raise ValidationError(f"{name}={v} outside 0..65535")
        if not 0 <= self.protocol <= 0xFF:
            raise ValidationError(f"protocol={self.protocol} outside 0..255")
        if not 0 <= self.tcp_flags <= 0xFF:
            raise ValidationError(f"tcp_flags={self.tcp_flags} outside 0..255")
        if not 0 <= self.vlan <= 4095:
            raise ValidationError(f"vlan={self.vlan} outside 0..4095")
        for name in ("src_ip", "dst_ip"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFFFFFF:
                raise ValidationError(f"{name}={v} is not an IPv4 address")
        for name in ("bytes", "packets", "exporter_id", "start_ms"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    @property
    def five_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.protocol)


def parse_record(line: str, line_no: int | None = None) -> FlowRecord:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) != len(COLUMNS):
        raise ParseError(f"expected {len(COLUMNS)} columns, got {len(parts)}", line_no)
    try:
        ints = [int(p) for p in parts[:2]]
        src, dst = ip_to_int(parts[2]), ip_to_int(parts[3])
        rest = [int(p, 0) if name == "tcp_flags" else int(p)
                for name, p in zip(COLUMNS[4:], parts[4:])]
    except (ValueError, AddressValueError) as exc:
        raise ParseError(str(exc), line_no) from None
    rec = FlowRecord(ints[0], ints[1], src, dst, *rest)
    try:
        rec.validate()
    except ValidationError as exc:
        raise ValidationError(str(exc), line_no) from None
    return rec


def serialize_record(rec: FlowRecord) -> str:
    return (f"{rec.start_ms},{rec.end_ms},{int_to_ip(rec.src_ip)},{int_to_ip(rec.dst_ip)},"
            f"{rec.src_port},{rec.dst_port},{rec.protocol},{rec.bytes},{rec.packets},"
            f"{rec.tcp_flags:#04x},{rec.exporter_id},{rec.vlan}")


def iter_records(lines: Iterable[str]) -> Iterator[FlowRecord]:
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if no == 1 and line.strip().startswith("start_ms"):
            continue
        yield parse_record(line, no)


def read_records(path: str | Path) -> list[FlowRecord]:
    with open(path) as fh:
        return list(iter_records(fh))


def write_records(path: str | Path, records: Iterable[FlowRecord], header: bool = True) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(HEADER + "\n")
        for rec in records:
            fh.write(serialize_record(rec) + "\n")


@dataclass(frozen=True)
class Block:
    """Fixed-size chunk of records (or, downstream, entries)."""

    index: int
    records: tuple

    def __len__(self) -> int:
        return len(self.records)


def partition_blocks(records: Iterable, block_size: int) -> list[Block]:
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    blocks: list[Block] = []
    chunk: list = []
    for rec in records:
        chunk.append(rec)
        if len(chunk) == block_size:
            blocks.append(Block(len(blocks), tuple(chunk)))
            chunk = []
    if chunk:
        blocks.append(Block(len(blocks), tuple(chunk)))
    return blocks


def test_count(n: int, test_fraction: float) -> int:
    """``ceil(n * f)`` clamped so both sides of a split are non-empty."""
    # round() absorbs float noise such as 100 * 0.1 -> 10.000000000000002
    return min(max(math.ceil(round(n * test_fraction, 9)), 1), n - 1)


def chronological_split(block: Block, test_fraction: float = 0.1) -> tuple[Block, Block]:
    """Sort by ``start_ms`` (stable) and hold out the latest ``ceil(n*f)`` items."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(block.records)
    if n < 2:
        raise ValueError(f"block {block.index} has {n} records; cannot split")
    ordered = sorted(block.records, key=lambda r: r.start_ms)
    cut = n - test_count(n, test_fraction)
    return (Block(block.index, tuple(ordered[:cut])),
            Block(block.index, tuple(ordered[cut:])))


def concat(blocks: Sequence[Block]) -> list:
    return [r for b in blocks for r in b.records]
