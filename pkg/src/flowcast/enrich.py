"""Offline context lookup for flow endpoints.

Subnet and geo tables are longest-prefix-match tables keyed by CIDR. Both must
contain a ``0.0.0.0/0`` default row so every address resolves;
:meth:`LookupTables.build` inserts the all-zero default when it is missing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from ipaddress import IPv4Network
from pathlib import Path
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

from .ingest import FlowRecord

PRIVATE = "private"
PUBLIC = "public"
RFC1918 = ("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16")


def prefix_mask(prefix_len: int) -> int:
    return (0xFFFFFFFF << (32 - prefix_len)) & 0xFFFFFFFF if prefix_len else 0


class PrefixTable:
    """Longest-prefix match over IPv4 networks with arbitrary payloads."""

    def __init__(self, rows: Iterable[tuple[str | IPv4Network, object]]):
        self._by_len: dict[int, dict[int, object]] = {}
        for cidr, value in rows:
            net = IPv4Network(cidr) if not isinstance(cidr, IPv4Network) else cidr
            bucket = self._by_len.setdefault(net.prefixlen, {})
            key = int(net.network_address)
            if key in bucket:
                raise ValueError(f"duplicate table entry {net}")
            bucket[key] = value
        self._lengths = sorted(self._by_len, reverse=True)

    def __len__(self) -> int:
        return sum(len(b) for b in self._by_len.values())

    def __contains__(self, cidr: str) -> bool:
        net = IPv4Network(cidr)
        return int(net.network_address) in self._by_len.get(net.prefixlen, {})

    def lookup(self, ip: int) -> tuple[int, object] | None:
        for plen in self._lengths:
            hit = self._by_len[plen].get(ip & prefix_mask(plen))
            if hit is not None:
                return plen, hit
        return None

    def matches(self, ip: int) -> list[int]:
        """All prefix lengths with an entry covering ``ip``."""
        return [p for p in self._lengths if (ip & prefix_mask(p)) in self._by_len[p]]


@dataclass(frozen=True, slots=True)
class GeoInfo:
    asn: int = 0
    latitude: float = 0.0
    longitude: float = 0.0
    country_index: int = 0

    def __post_init__(self):
        if not 0 <= self.asn <= 0xFFFF:
            raise ValueError(f"asn {self.asn} outside 0..65535")
        if not -90.0 <= self.latitude <= 90.0 or not -180.0 <= self.longitude <= 180.0:
            raise ValueError("geo coordinates out of range")
        if not 0 <= self.country_index <= 239:
            raise ValueError(f"country_index {self.country_index} outside 0..239")


@dataclass(frozen=True, slots=True)
class EndpointContext:
    network: int
    prefix_len: int
    vlan: int
    locality: str
    asn: int
    longitude: float
    latitude: float
    country_index: int

    @property
    def is_private(self) -> bool:
        return self.locality == PRIVATE


@dataclass(frozen=True, slots=True)
class TimeParts:
    month: int
    day: int
    hour: int
    minute: int
    second: int


@dataclass(frozen=True, slots=True)
class EnrichedRecord:
    record: FlowRecord
    src: EndpointContext
    dst: EndpointContext
    time: TimeParts

    @property
    def communication_type(self) -> str:
        return f"{self.src.locality}->{self.dst.locality}"


@dataclass(frozen=True)
class LookupTables:
    subnets: PrefixTable
    geo: PrefixTable
    private: PrefixTable
    timezone: str = "UTC"
    _tz: ZoneInfo = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if "0.0.0.0/0" not in self.subnets or "0.0.0.0/0" not in self.geo:
            raise ValueError("subnet and geo tables need a 0.0.0.0/0 default entry")
        object.__setattr__(self, "_tz", ZoneInfo(self.timezone))

    @classmethod
    def build(cls, subnets: Sequence[tuple[str, int]] = (),
              geo: Sequence[tuple[str, GeoInfo]] = (),
              private_ranges: Sequence[str] = RFC1918,
              timezone: str = "UTC") -> "LookupTables":
        subnets = list(subnets)
        geo = list(geo)
        if not any(IPv4Network(c).prefixlen == 0 for c, _ in subnets):
            subnets.append(("0.0.0.0/0", 0))
        if not any(IPv4Network(c).prefixlen == 0 for c, _ in geo):
            geo.append(("0.0.0.0/0", GeoInfo()))
        for _, vlan in subnets:
            if not 0 <= vlan <= 4095:
                raise ValueError(f"vlan {vlan} outside 0..4095")
        return cls(PrefixTable(subnets), PrefixTable(geo),
                   PrefixTable((c, True) for c in private_ranges), timezone)

    @classmethod
    def from_files(cls, subnet_csv: str | Path, geo_csv: str | Path,
                   private_ranges: Sequence[str] = RFC1918,
                   timezone: str = "UTC") -> "LookupTables":
        subnets = [(row["cidr"], int(row["vlan"])) for row in _read_csv(subnet_csv)]
        geo = [(row["cidr"], GeoInfo(int(row["asn"]), float(row["latitude"]),
                                     float(row["longitude"]), int(row["country_index"])))
               for row in _read_csv(geo_csv)]
        return cls.build(subnets, geo, private_ranges, timezone)

    def is_private(self, ip: int) -> bool:
        return self.private.lookup(ip) is not None

    def decompose_time(self, epoch_ms: int) -> TimeParts:
        t = datetime.fromtimestamp(epoch_ms / 1000.0, tz=self._tz)
        return TimeParts(t.month, t.day, t.hour, t.minute, t.second)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_tables(tables_rows: dict, directory: str | Path) -> dict[str, Path]:
    """Write ``{'subnets': [(cidr, vlan)], 'geo': [(cidr, GeoInfo)], 'private': [cidr]}``."""
    directory = Path(directory)
    paths = {k: directory / f"{k}.csv" for k in ("subnets", "geo")}
    paths["private"] = directory / "private.txt"
    with open(paths["subnets"], "w") as fh:
        fh.write("cidr,vlan\n")
        for cidr, vlan in tables_rows["subnets"]:
            fh.write(f"{cidr},{vlan}\n")
    with open(paths["geo"], "w") as fh:
        fh.write("cidr,asn,latitude,longitude,country_index\n")
        for cidr, g in tables_rows["geo"]:
            fh.write(f"{cidr},{g.asn},{g.latitude!r},{g.longitude!r},{g.country_index}\n")
    with open(paths["private"], "w") as fh:
        fh.write("\n".join(tables_rows["private"]) + "\n")
    return paths


def read_private_ranges(path: str | Path) -> list[str]:
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def lookup_endpoint(ip: int, tables: LookupTables) -> EndpointContext:
    plen, vlan = tables.subnets.lookup(ip)
    _, geo = tables.geo.lookup(ip)
    return EndpointContext(
        network=ip & prefix_mask(plen),
        prefix_len=plen,
        vlan=vlan,
        locality=PRIVATE if tables.is_private(ip) else PUBLIC,
        asn=geo.asn,
        longitude=geo.longitude,
        latitude=geo.latitude,
        country_index=geo.country_index,
    )


def enrich_record(rec: FlowRecord, tables: LookupTables) -> EnrichedRecord:
    return EnrichedRecord(rec, lookup_endpoint(rec.src_ip, tables),
                          lookup_endpoint(rec.dst_ip, tables),
                          tables.decompose_time(rec.start_ms))
