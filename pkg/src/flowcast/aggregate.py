"""Dedup dual-exporter records and fuse partial records into flow entries."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .enrich import EndpointContext, EnrichedRecord, TimeParts
from .ingest import int_to_ip

TCP_FIN = 0x01
TCP_RST = 0x04
PORT_LIMIT = 32767


@dataclass(frozen=True, slots=True)
class FlowEntry:
    start_ms: int
    end_ms: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: int
    packets: int
    tcp_flags: int
    exporter_id: int
    vlan: int
    src: EndpointContext
    dst: EndpointContext
    time: TimeParts
    duration_ms: int
    total_bytes: int
    bit_rate_bps: float
    record_count: int

    @property
    def five_tuple(self):
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.protocol)

    @property
    def communication_type(self) -> str:
        return f"{self.src.locality}->{self.dst.locality}"


@dataclass(frozen=True)
class AggregateConfig:
    dedup_window_ms: int = 1000
    inactive_timeout_ms: int = 15_000


@dataclass(frozen=True)
class AggregateStats:
    n_records: int
    n_after_dedup: int
    n_entries: int

    @property
    def dedup_ratio(self) -> float:
        return self.n_after_dedup / self.n_records if self.n_records else 0.0

    @property
    def fusion_ratio(self) -> float:
        return self.n_entries / self.n_after_dedup if self.n_after_dedup else 0.0

    @property
    def total_ratio(self) -> float:
        return self.n_entries / self.n_records if self.n_records else 0.0


def dedup(records: Sequence[EnrichedRecord], window_ms: int = 1000) -> list[EnrichedRecord]:
    """Drop copies seen by a higher-numbered exporter.

    A record is a copy when another record with the same 5-tuple, bytes and
    packets, a smaller ``exporter_id`` and a start within ``window_ms`` exists.
    Output keeps input order.
    """
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, er in enumerate(records):
        r = er.record
        groups[(r.five_tuple, r.bytes, r.packets)].append(i)
    drop = set()
    for idx in groups.values():
        if len(idx) < 2:
            continue
        for i in idx:
            ri = records[i].record
            for j in idx:
                rj = records[j].record
                if (rj.exporter_id < ri.exporter_id
                        and abs(rj.start_ms - ri.start_ms) <= window_ms):
                    drop.add(i)
                    break
    return [er for i, er in enumerate(records) if i not in drop]


def _open(er: EnrichedRecord) -> dict:
    r = er.record
    return {"first": er, "start": r.start_ms, "end": r.end_ms, "bytes": r.bytes,
            "packets": r.packets, "flags": r.tcp_flags, "count": 1}


def _close(acc: dict) -> FlowEntry:
    er = acc["first"]
    r = er.record
    return FlowEntry(
        start_ms=acc["start"], end_ms=acc["end"], src_ip=r.src_ip, dst_ip=r.dst_ip,
        src_port=r.src_port, dst_port=r.dst_port, protocol=r.protocol,
        packets=acc["packets"], tcp_flags=acc["flags"], exporter_id=r.exporter_id,
        vlan=r.vlan, src=er.src, dst=er.dst, time=er.time,
        duration_ms=acc["end"] - acc["start"], total_bytes=acc["bytes"],
        bit_rate_bps=0.0, record_count=acc["count"],
    )


def fuse(records: Sequence[EnrichedRecord], inactive_timeout_ms: int = 15_000) -> list[FlowEntry]:
    """Merge same-5-tuple records into entries.

    A record joins the open entry for its 5-tuple when it starts no later than
    ``inactive_timeout_ms`` after that entry's end. FIN or RST closes the entry
    after the carrying record is merged. Entries are returned ordered by their
    first start (ties by creation order).
    """
    ordered = sorted(records, key=lambda er: er.record.start_ms)
    open_: dict[tuple, tuple[int, dict]] = {}
    done: list[tuple[int, dict]] = []
    serial = 0
    for er in ordered:
        r = er.record
        key = r.five_tuple
        slot = open_.get(key)
        if slot is not None and r.start_ms - slot[1]["end"] <= inactive_timeout_ms:
            acc = slot[1]
            acc["end"] = max(acc["end"], r.end_ms)
            acc["bytes"] += r.bytes
            acc["packets"] += r.packets
            acc["flags"] |= r.tcp_flags
            acc["count"] += 1
        else:
            if slot is not None:
                done.append(open_.pop(key))
            slot = (serial, _open(er))
            serial += 1
            open_[key] = slot
        if r.tcp_flags & (TCP_FIN | TCP_RST):
            done.append(open_.pop(key))
    done.extend(open_.values())
    done.sort(key=lambda s: (s[1]["start"], s[0]))
    return [_close(acc) for _, acc in done]


def mask_port(port: int) -> int:
    if not 0 <= port <= 0xFFFF:
        raise ValueError(f"port {port} outside 0..65535")
    return port if port <= PORT_LIMIT else 0


def bit_rate(total_bytes: int, duration_ms: int) -> float:
    """Bits per second with durations floored at one second."""
    return total_bytes * 8 * 1000 / max(duration_ms, 1000)


def finalize(entry: FlowEntry) -> FlowEntry:
    return replace(entry,
                   src_port=mask_port(entry.src_port),
                   dst_port=mask_port(entry.dst_port),
                   bit_rate_bps=bit_rate(entry.total_bytes, entry.duration_ms))


def aggregate_block(records: Sequence[EnrichedRecord],
                    config: AggregateConfig = AggregateConfig()) -> tuple[list[FlowEntry], AggregateStats]:
    kept = dedup(records, config.dedup_window_ms)
    entries = [finalize(e) for e in fuse(kept, config.inactive_timeout_ms)]
    return entries, AggregateStats(len(records), len(kept), len(entries))


# --- entry dump -------------------------------------------------------------

_CTX_FIELDS = [f.name for f in fields(EndpointContext)]
_TIME_FIELDS = [f.name for f in fields(TimeParts)]
_FLAT = [f.name for f in fields(FlowEntry) if f.name not in ("src", "dst", "time")]
ENTRY_COLUMNS = (_FLAT + [f"src_{n}" for n in _CTX_FIELDS]
                 + [f"dst_{n}" for n in _CTX_FIELDS] + _TIME_FIELDS)
ENTRY_HEADER = ",".join(ENTRY_COLUMNS)
_IP_COLUMNS = {"src_ip", "dst_ip", "src_network", "dst_network"}
_FLOAT_COLUMNS = {"bit_rate_bps", "src_longitude", "src_latitude", "dst_longitude", "dst_latitude"}
_STR_COLUMNS = {"src_locality", "dst_locality"}


def entry_to_row(e: FlowEntry) -> list[str]:
    values = {n: getattr(e, n) for n in _FLAT}
    for side in ("src", "dst"):
        ctx = getattr(e, side)
        for n in _CTX_FIELDS:
            values[f"{side}_{n}"] = getattr(ctx, n)
    for n in _TIME_FIELDS:
        values[n] = getattr(e.time, n)
    out = []
    for col in ENTRY_COLUMNS:
        v = values[col]
        if col in _IP_COLUMNS:
            out.append(int_to_ip(v))
        elif col in _FLOAT_COLUMNS:
            out.append(repr(float(v)))
        else:
            out.append(str(v))
    return out


def row_to_entry(row: Sequence[str]) -> FlowEntry:
    from .ingest import ip_to_int

    v = {}
    for col, text in zip(ENTRY_COLUMNS, row):
        if col in _IP_COLUMNS:
            v[col] = ip_to_int(text)
        elif col in _FLOAT_COLUMNS:
            v[col] = float(text)
        elif col in _STR_COLUMNS:
            v[col] = text
        else:
            v[col] = int(text)
    ctx = {side: EndpointContext(**{n: v[f"{side}_{n}"] for n in _CTX_FIELDS})
           for side in ("src", "dst")}
    return FlowEntry(**{n: v[n] for n in _FLAT}, src=ctx["src"], dst=ctx["dst"],
                     time=TimeParts(**{n: v[n] for n in _TIME_FIELDS}))


def write_entries(path: str | Path, entries: Iterable[FlowEntry]) -> None:
    with open(path, "w") as fh:
        fh.write(ENTRY_HEADER + "\n")
        for e in entries:
            fh.write(",".join(entry_to_row(e)) + "\n")


def read_entries(path: str | Path) -> list[FlowEntry]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ENTRY_HEADER:
            raise ValueError(f"{path}: unexpected entry header")
        return [row_to_entry(ln.rstrip("\n").split(",")) for ln in fh if ln.strip()]
