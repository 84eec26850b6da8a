"""Seeded per-octet permutation anonymization of IPv4 addresses.

Key derivation is part of the interchange contract, so it is spelled out:

1. ``digest = SHA-256(password)``
2. ``state = int.from_bytes(digest[:8], "big")``; a zero state is replaced
   by ``0x9E3779B97F4A7C15``.
3. The generator is xorshift64* (Vigna): ``x ^= x >> 12; x ^= x << 25;
   x ^= x >> 27`` (all mod 2**64), output ``x * 0x2545F4914F6CDD1D mod 2**64``.
4. Tables are built in order ``0..3`` (octet 0 is the most significant).
   Each starts as ``[0..255]`` and is shuffled by Fisher-Yates:
   ``for i in 255..1: j = next() % (i + 1); swap(t[i], t[j])``.

Octet ``i`` of an address is replaced by ``tables[i][octet]``. Addresses that
share a leading octet prefix keep sharing it; adjacency is not preserved.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

from .enrich import EnrichedRecord

_MASK64 = 0xFFFFFFFFFFFFFFFF
_ZERO_SEED = 0x9E3779B97F4A7C15
_MULT = 0x2545F4914F6CDD1D


class XorShift64Star:
    def __init__(self, seed: int):
        self.state = (seed & _MASK64) or _ZERO_SEED

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _MULT) & _MASK64


@dataclass(frozen=True)
class AnonKey:
    tables: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.tables) != 4:
            raise ValueError("AnonKey needs exactly 4 tables")
        for t in self.tables:
            if sorted(t) != list(range(256)):
                raise ValueError("table is not a permutation of 0..255")

    @classmethod
    def identity(cls) -> "AnonKey":
        return cls(tuple(tuple(range(256)) for _ in range(4)))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(dump_key(self))

    @classmethod
    def load(cls, path: str | Path) -> "AnonKey":
        return load_key(Path(path).read_text())


def dump_key(key: AnonKey) -> str:
    return "".join(",".join(map(str, t)) + "\n" for t in key.tables)


def load_key(text: str) -> AnonKey:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return AnonKey(tuple(tuple(int(v) for v in ln.split(",")) for ln in lines))


def derive_key(password: bytes | str) -> AnonKey:
    if isinstance(password, str):
        password = password.encode("utf-8")
    if not password:
        raise ValueError("password must be non-empty")
    digest = hashlib.sha256(password).digest()
    rng = XorShift64Star(int.from_bytes(digest[:8], "big"))
    tables = []
    for _ in range(4):
        t = list(range(256))
        for i in range(255, 0, -1):
            j = rng.next() % (i + 1)
            t[i], t[j] = t[j], t[i]
        tables.append(tuple(t))
    return AnonKey(tuple(tables))


def anonymize_ip(ip: int, key: AnonKey) -> int:
    t = key.tables
    return ((t[0][(ip >> 24) & 0xFF] << 24) | (t[1][(ip >> 16) & 0xFF] << 16)
            | (t[2][(ip >> 8) & 0xFF] << 8) | t[3][ip & 0xFF])


def anonymize_entry(rec: EnrichedRecord, key: AnonKey) -> EnrichedRecord:
    """Anonymize both addresses and both network fields; prefix lengths stay."""
    raw = rec.record
    return replace(
        rec,
        record=replace(raw, src_ip=anonymize_ip(raw.src_ip, key),
                       dst_ip=anonymize_ip(raw.dst_ip, key)),
        src=replace(rec.src, network=anonymize_ip(rec.src.network, key)),
        dst=replace(rec.dst, network=anonymize_ip(rec.dst.network, key)),
    )
