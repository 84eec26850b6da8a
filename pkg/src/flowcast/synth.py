"""Seeded synthetic flow records with a planted bit-rate rule.

Every flow gets a target class. Its cell, a (protocol, destination port
band) pair, is chosen so that ``RULE[cell]`` (optionally shifted by the
source locality) equals that class. Bytes come from a log-normal truncated
to the byte range that puts the flow's bit rate inside the class interval.
Durations mix a point mass under one second with an exponential tail.
Flows are then cut into about ``split_factor`` contiguous records and
mirrored to exporter 2 with probability ``duplicate_rate``.

Source locality is decided by a scattered pool of /24 networks that serve
as the configured private ranges, so an address-only model cannot read it
off a few leading bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .encode import DEFAULT_BOUNDARIES, ClassBoundaries
from .enrich import GeoInfo, LookupTables, prefix_mask
from .ingest import FlowRecord, int_to_ip

TCP, UDP = 6, 17
BANDS = ((1, 1023), (1024, 8191), (8192, 32767))
BAND_PORTS = {
    (TCP, 0): (80, 443, 22, 25, 993, 389),
    (UDP, 0): (53, 123, 161, 514),
    (TCP, 1): (1433, 3306, 5432, 8080, 1194),
    (UDP, 1): (1812, 5060, 3478, 4500),
}
# (protocol, band) -> class; every class owns exactly one cell per protocol
RULE = {(TCP, 0): 2, (TCP, 1): 1, (TCP, 2): 0,
        (UDP, 0): 0, (UDP, 1): 2, (UDP, 2): 1}
CELLS = tuple(RULE)
MAX_BIT_RATE = 2e6
EPOCH_START_MS = 1_550_221_200_000  # 2019-02-15 09:00 UTC


def port_band(port: int) -> int:
    """Index into BANDS, or -1 for port 0 / ephemeral ports."""
    for i, (lo, hi) in enumerate(BANDS):
        if lo <= port <= hi:
            return i
    return -1


@dataclass(frozen=True)
class DriftSpec:
    """From ``block_index`` on, a ``magnitude`` share of flows uses the rule
    rotated by one class. With ``ramp_blocks > 0`` the share grows linearly
    over that many blocks."""

    block_index: int
    magnitude: float = 1.0
    ramp_blocks: int = 0

    def share(self, block: int) -> float:
        if block < self.block_index:
            return 0.0
        if self.ramp_blocks <= 0:
            return self.magnitude
        return self.magnitude * min(1.0, (block - self.block_index + 1) / self.ramp_blocks)


@dataclass(frozen=True)
class SynthConfig:
    n_records: int = 100_000
    seed: int = 0
    class_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    split_factor: float = 1.0
    duplicate_rate: float = 0.0
    drift: DriftSpec | None = None
    rule_strength: float = 1.0
    rule: str = "port"              # "port" or "locality"
    block_size: int = 100_000       # only used to place drift
    records_per_second: float = 2000.0
    short_fraction: float = 0.6     # share of flows shorter than 1 s
    long_mean_ms: float = 8000.0
    private_fraction: float = 0.5   # share of clients inside the private pool
    private_pool: int = 65_536      # number of private /24 networks
    servers_per_cell: int = 16
    boundaries: ClassBoundaries = DEFAULT_BOUNDARIES

    def __post_init__(self):
        if self.n_records < 0:
            raise ValueError("n_records must be >= 0")
        mix = np.asarray(self.class_mix, dtype=float)
        if len(mix) != 3 or (mix < 0).any() or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError("class_mix must be 3 probabilities summing to 1")
        for name in ("duplicate_rate", "rule_strength", "short_fraction", "private_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.split_factor < 1.0:
            raise ValueError("split_factor must be >= 1")
        if self.rule not in ("port", "locality"):
            raise ValueError("rule must be 'port' or 'locality'")
        if self.boundaries.n_classes != 3:
            raise ValueError("synthetic rule needs 3 classes")
        if self.block_size < 1 or self.records_per_second <= 0 or self.private_pool < 1:
            raise ValueError("block_size, records_per_second and private_pool must be positive")


@dataclass
class AddressPlan:
    private_nets: np.ndarray            # /24 network addresses (ints)
    servers: dict[tuple[int, int], np.ndarray]
    subnets: list[tuple[str, int]] = field(default_factory=list)
    geo: list[tuple[str, GeoInfo]] = field(default_factory=list)

    @property
    def private_ranges(self) -> list[str]:
        return [f"{int_to_ip(int(n))}/24" for n in self.private_nets]

    def table_rows(self) -> dict:
        return {"subnets": self.subnets, "geo": self.geo, "private": self.private_ranges}

    def tables(self, timezone: str = "UTC") -> LookupTables:
        return LookupTables.build(self.subnets, self.geo, self.private_ranges, timezone)


def address_plan(config: SynthConfig) -> AddressPlan:
    rng = np.random.default_rng([config.seed, 7])
    nets = rng.choice(1 << 24, size=config.private_pool, replace=False).astype(np.int64) << 8
    private_set = set(nets.tolist())
    servers = {}
    for cell in CELLS:
        addrs = []
        for s in range(config.servers_per_cell):
            if s % 4 == 0:
                addrs.append(int(rng.choice(nets)) | int(rng.integers(1, 255)))
            else:
                addrs.append(_public_address(rng, private_set))
        servers[cell] = np.asarray(addrs, dtype=np.int64)
    # a few VLAN-tagged /16 and /20 subnets, geo per /8
    subnets = []
    for i, base in enumerate(rng.choice(1 << 16, size=32, replace=False)):
        subnets.append((f"{int_to_ip(int(base) << 16)}/16", 100 + i))
        subnets.append((f"{int_to_ip((int(base) << 16) | (int(rng.integers(16)) << 12))}/20", 200 + i))
    geo = []
    for octet in range(1, 224):
        geo.append((f"{octet}.0.0.0/8", GeoInfo(
            asn=int(rng.integers(1, 65535)),
            latitude=round(float(rng.uniform(-60, 70)), 4),
            longitude=round(float(rng.uniform(-180, 180)), 4),
            country_index=int(rng.integers(1, 240)))))
    return AddressPlan(nets, servers, subnets, geo)


def _public_address(rng, private_set) -> int:
    while True:
        ip = int(rng.integers(1 << 24, 224 << 24))
        if (ip & prefix_mask(24)) not in private_set:
            return ip


def _byte_range(cls: int, duration_ms: int, bounds: ClassBoundaries) -> tuple[int, int]:
    t = bounds.thresholds
    lo = t[cls]
    hi = t[cls + 1] if cls + 1 < len(t) else MAX_BIT_RATE
    span = max(duration_ms, 1000) / 8000.0
    return int(np.ceil(lo * span)), int(np.ceil(hi * span)) - 1


_STD_NORMAL = NormalDist()


def _truncated_lognormal(rng, lo: int, hi: int, median: float = 620.0, sigma: float = 2.0) -> int:
    """Log-normal sample restricted to the integer range ``[lo, hi]``."""
    def cdf(x):
        return 0.0 if x <= 0 else _STD_NORMAL.cdf(math.log(x / median) / sigma)

    a, b = cdf(lo), cdf(hi + 1)
    if b - a < 1e-12:
        return int(rng.integers(lo, hi + 1))
    u = min(max(rng.uniform(a, b), 1e-300), 1 - 1e-16)
    v = int(median * math.exp(sigma * _STD_NORMAL.inv_cdf(u)))
    return min(max(v, lo), hi)


def _pick_port(rng, cell) -> int:
    proto, band = cell
    if cell in BAND_PORTS and rng.random() < 0.8:
        ports = BAND_PORTS[cell]
        return int(ports[rng.integers(len(ports))])
    lo, hi = BANDS[band]
    return int(rng.integers(lo, hi + 1))


def _tcp_flags(k: int, m: int) -> int:
    flags = 0x10  # ACK
    if k == 0:
        flags |= 0x02
    if 0 < k < m - 1:
        flags |= 0x08
    if k == m - 1:
        flags |= 0x01
    return flags


def generate(config: SynthConfig, plan: AddressPlan | None = None) -> list[FlowRecord]:
    """Records sorted by start time; ``n_records`` before duplication."""
    plan = plan if plan is not None else address_plan(config)
    rng = np.random.default_rng([config.seed, 1])
    cells_by_class = {c: [cell for cell in CELLS if RULE[cell] == c] for c in range(3)}
    mean_gap = 1000.0 * config.split_factor / config.records_per_second
    private_set = set(plan.private_nets.tolist())
    records: list[FlowRecord] = []
    produced = 0
    t = float(EPOCH_START_MS)
    while produced < config.n_records:
        t += rng.exponential(mean_gap)
        start = int(t)
        block = produced // config.block_size
        target = int(rng.choice(3, p=config.class_mix))
        private = bool(rng.random() < config.private_fraction)
        shift = 1 if (config.drift and rng.random() < config.drift.share(block)) else 0
        base = target - (shift + (private if config.rule == "locality" else 0))
        options = cells_by_class[base % 3]
        cell = options[rng.integers(len(options))]
        cls = target
        if rng.random() >= config.rule_strength:
            cls = int((target + rng.integers(1, 3)) % 3)

        if rng.random() < config.short_fraction:
            duration = int(rng.integers(0, 1000))
        else:
            duration = 1000 + int(rng.exponential(config.long_mean_ms))
        b_lo, b_hi = _byte_range(cls, duration, config.boundaries)
        nbytes = _truncated_lognormal(rng, b_lo, b_hi)

        proto = cell[0]
        src = (int(rng.choice(plan.private_nets)) | int(rng.integers(1, 255))) if private \
            else _public_address(rng, private_set)
        pool = plan.servers[cell]
        dst = int(pool[rng.integers(len(pool))])
        sport = int(rng.integers(32768, 61000))
        dport = _pick_port(rng, cell)

        m = 1 + int(rng.poisson(config.split_factor - 1.0)) if config.split_factor > 1 else 1
        m = min(m, config.n_records - produced)
        packets = max(m, int(np.ceil(nbytes / rng.uniform(60, 1400))))
        byte_parts = rng.multinomial(nbytes, np.full(m, 1.0 / m)) if m > 1 else np.array([nbytes])
        pkt_parts = 1 + (rng.multinomial(packets - m, np.full(m, 1.0 / m)) if m > 1 else np.array([packets - 1]))
        cuts = np.sort(rng.integers(start, start + duration + 1, size=m - 1)) if m > 1 else np.array([], dtype=np.int64)
        bounds = [start, *cuts.tolist(), start + duration]
        vlan = int(rng.integers(1, 4095))
        for k in range(m):
            rec = FlowRecord(
                start_ms=int(bounds[k]), end_ms=int(bounds[k + 1]), src_ip=src, dst_ip=dst,
                src_port=sport, dst_port=dport, protocol=proto,
                bytes=int(byte_parts[k]), packets=int(pkt_parts[k]),
                tcp_flags=_tcp_flags(k, m) if proto == TCP else 0,
                exporter_id=1, vlan=vlan)
            records.append(rec)
            if rng.random() < config.duplicate_rate:
                jitter = int(rng.integers(0, 300))
                records.append(FlowRecord(rec.start_ms + jitter, rec.end_ms + jitter, src, dst,
                                          sport, dport, proto, rec.bytes, rec.packets,
                                          rec.tcp_flags, 2, vlan))
        produced += m
    records.sort(key=lambda r: r.start_ms)
    return records
