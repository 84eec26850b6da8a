"""Feature vectors, bit-rate labels and class balancing.

Two encoders exist for the same layouts: :func:`build_vector` works on one
entry through the scalar encoders, :func:`build_matrix` is the vectorized
path used for training. Tests check that both agree.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import FlowEntry


class ClampWarning(UserWarning):
    pass


class ClampCounter:
    """Counts min-max inputs that fell outside their range."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


CLAMPS = ClampCounter()


def encode_bits(value: int, width: int) -> list[float]:
    if value < 0 or value >= 1 << width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [float((value >> s) & 1) for s in range(width - 1, -1, -1)]


def decode_bits(bits: Sequence[float]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | (1 if b >= 0.5 else 0)
    return v


def encode_minmax(value: float, lo: float, hi: float, counter: ClampCounter = CLAMPS) -> float:
    if not lo < hi:
        raise ValueError("min-max range needs lo < hi")
    if value < lo or value > hi:
        counter.count += 1
        warnings.warn(f"{value} outside [{lo}, {hi}], clamped", ClampWarning, stacklevel=2)
        value = min(max(value, lo), hi)
    return (value - lo) / (hi - lo)


def encode_onehot(index: int, n: int) -> list[float]:
    if not 0 <= index < n:
        raise ValueError(f"index {index} outside 0..{n - 1}")
    out = [0.0] * n
    out[index] = 1.0
    return out


# --- layouts ----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    name: str          # column produced by entry_columns()
    encoding: str      # "bits" | "minmax" | "onehot"
    width: int
    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class FeatureLayout:
    name: str
    features: tuple[FeatureSpec, ...]

    @property
    def width(self) -> int:
        return sum(f.width for f in self.features)

    def slices(self) -> dict[str, slice]:
        out, pos = {}, 0
        for f in self.features:
            out[f.name] = slice(pos, pos + f.width)
            pos += f.width
        return out


def _bits(name, w):
    return FeatureSpec(name, "bits", w)


def _mm(name, lo, hi):
    return FeatureSpec(name, "minmax", 1, lo, hi)


def _both(fn, name, *args):
    return (fn(f"src_{name}", *args), fn(f"dst_{name}", *args))


FIVE_TUPLE = FeatureLayout("FIVE_TUPLE", (
    _bits("src_ip", 32), _bits("dst_ip", 32),
    _bits("src_port", 16), _bits("dst_port", 16),
    _bits("protocol", 8),
))

_ALL_FEATURES = (
    _mm("month", 1, 12), _mm("day", 1, 31), _mm("hour", 0, 23),
    _mm("minute", 0, 59), _mm("second", 0, 59),
    _bits("protocol", 8),
    *_both(_bits, "ip", 32),
    *_both(_bits, "port", 16),
    *_both(_bits, "network", 32),
    *_both(_bits, "prefix_len", 5),
    *_both(_bits, "asn", 16),
    *_both(_mm, "longitude", -180, 180),
    *_both(_mm, "latitude", -90, 90),
    *_both(_mm, "country_index", 0, 239),
    *_both(_bits, "vlan", 12),
    *_both(_bits, "private", 1),
)
ALL = FeatureLayout("ALL", _ALL_FEATURES)
ALL_WITH_FLAGS = FeatureLayout("ALL_WITH_FLAGS", _ALL_FEATURES + (_bits("tcp_flags", 8),))
LAYOUTS = {lay.name: lay for lay in (FIVE_TUPLE, ALL, ALL_WITH_FLAGS)}


def get_layout(name: str) -> FeatureLayout:
    key = {"5-tuple": "FIVE_TUPLE", "five_tuple": "FIVE_TUPLE", "all": "ALL"}.get(name, name)
    try:
        return LAYOUTS[key]
    except KeyError:
        raise ValueError(f"unknown feature layout {name!r}") from None


def _entry_value(e: FlowEntry, name: str):
    if name in ("month", "day", "hour", "minute", "second"):
        return getattr(e.time, name)
    if name.startswith(("src_", "dst_")):
        side, field = name[:3], name[4:]
        if field in ("ip", "port"):
            return getattr(e, name)
        ctx = getattr(e, side)
        if field == "private":
            return int(ctx.is_private)
        if field == "prefix_len":
            # 5-bit field: a /32 host route is stored as 31
            return min(ctx.prefix_len, 31)
        return getattr(ctx, field)
    return getattr(e, name)


def build_vector(entry: FlowEntry, layout: FeatureLayout) -> np.ndarray:
    out: list[float] = []
    for f in layout.features:
        try:
            v = _entry_value(entry, f.name)
        except AttributeError:
            raise ValueError(f"entry has no feature {f.name!r} for layout {layout.name}") from None
        if f.encoding == "bits":
            out.extend(encode_bits(int(v), f.width))
        elif f.encoding == "minmax":
            out.append(encode_minmax(v, f.lo, f.hi))
        else:
            out.extend(encode_onehot(int(v), f.width))
    return np.asarray(out, dtype=np.float64)


def entry_columns(entries: Sequence[FlowEntry]) -> dict[str, np.ndarray]:
    """Column-wise numeric view of entries (what build_matrix consumes)."""
    cols: dict[str, list] = {k: [] for k in (
        "start_ms", "bit_rate_bps", "month", "day", "hour", "minute", "second",
        "protocol", "tcp_flags", "src_ip", "dst_ip", "src_port", "dst_port")}
    ctx_fields = ("network", "prefix_len", "asn", "longitude", "latitude",
                  "country_index", "vlan", "private")
    for side in ("src", "dst"):
        for f in ctx_fields:
            cols[f"{side}_{f}"] = []
    for e in entries:
        for k in cols:
            cols[k].append(_entry_value(e, k))
    return {k: np.asarray(v, dtype=np.float64 if k in (
        "bit_rate_bps", "src_longitude", "dst_longitude", "src_latitude", "dst_latitude")
        else np.int64) for k, v in cols.items()}


def build_matrix(columns: dict[str, np.ndarray], layout: FeatureLayout,
                 counter: ClampCounter = CLAMPS) -> np.ndarray:
    n = len(columns["start_ms"])
    X = np.empty((n, layout.width), dtype=np.float64)
    for f, sl in zip(layout.features, layout.slices().values()):
        v = columns[f.name]
        if f.encoding == "bits":
            if n and (v.min() < 0 or v.max() >= 1 << f.width):
                raise ValueError(f"{f.name} does not fit in {f.width} bits")
            shifts = np.arange(f.width - 1, -1, -1, dtype=np.int64)
            X[:, sl] = (v[:, None] >> shifts) & 1
        elif f.encoding == "minmax":
            v = v.astype(np.float64)
            bad = (v < f.lo) | (v > f.hi)
            if bad.any():
                counter.count += int(bad.sum())
                warnings.warn(f"{int(bad.sum())} {f.name} values clamped", ClampWarning, stacklevel=2)
            X[:, sl.start] = (np.clip(v, f.lo, f.hi) - f.lo) / (f.hi - f.lo)
        else:
            X[:, sl] = 0.0
            X[np.arange(n), sl.start + v] = 1.0
    return X


# --- labels -----------------------------------------------------------------

@dataclass(frozen=True)
class ClassBoundaries:
    """Left-closed intervals ``[b0, b1), [b1, b2), ..., [b_last, inf]``."""

    thresholds: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        if t and math.isinf(t[-1]):
            t = t[:-1]
        if len(t) < 2 or t[0] != 0.0:
            raise ValueError("boundaries need at least [0, b1]")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("boundaries must be strictly increasing")
        object.__setattr__(self, "thresholds", t)

    @property
    def n_classes(self) -> int:
        return len(self.thresholds)

    @classmethod
    def parse(cls, text: str) -> "ClassBoundaries":
        parts = [p for p in text.replace("[", "").replace("]", "").replace(";", ",").split(",") if p.strip()]
        return cls(tuple(float(p) for p in parts))

    def __str__(self) -> str:
        return ";".join(f"{b:g}" for b in self.thresholds)


DEFAULT_BOUNDARIES = ClassBoundaries((0, 50, 8000))
ALT_BOUNDARIES = ClassBoundaries((0, 500, 5000))
MICE_ELEPHANT = ClassBoundaries((0, 500))


def assign_label(bit_rate_bps: float, boundaries: ClassBoundaries) -> int:
    if bit_rate_bps < 0:
        raise ValueError("bit rate must be non-negative")
    return bisect.bisect_right(boundaries.thresholds, bit_rate_bps) - 1


def assign_labels(bit_rates: np.ndarray, boundaries: ClassBoundaries) -> np.ndarray:
    return np.searchsorted(np.asarray(boundaries.thresholds), bit_rates, side="right") - 1


# --- labeled samples and balancing -----------------------------------------

@dataclass
class Samples:
    """Encoded, labeled samples of one block in time order."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __len__(self) -> int:
        return len(self.y)

    def counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, idx) -> "Samples":
        return Samples(self.X[idx], self.y[idx], self.n_classes)


class MissingClassError(ValueError):
    pass


def _require_all_classes(counts):
    if (counts == 0).any():
        raise MissingClassError(f"class histogram {counts.tolist()} has an empty class")


def balance_undersample(samples: Samples, seed: int) -> Samples:
    counts = samples.counts()
    _require_all_classes(counts)
    rng = np.random.default_rng(seed)
    m = counts.min()
    keep = [rng.choice(np.flatnonzero(samples.y == c), size=m, replace=False)
            for c in range(samples.n_classes)]
    return samples.subset(np.sort(np.concatenate(keep)))


def class_weights(labels: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=n_classes)
    _require_all_classes(counts)
    return len(labels) / (n_classes * counts.astype(np.float64))


# --- dataset block file -----------------------------------------------------

def write_dataset(path: str | Path, samples: Samples, layout: FeatureLayout,
                  boundaries: ClassBoundaries) -> None:
    """One header line, then ``floats...,label`` per sample (repr round-trip)."""
    with open(path, "w") as fh:
        fh.write(f"# layout={layout.name} width={layout.width} K={samples.n_classes} "
                 f"boundaries={boundaries}\n")
        for row, label in zip(samples.X.tolist(), samples.y.tolist()):
            fh.write(",".join(map(repr, row)) + f",{label}\n")


def read_dataset(path: str | Path) -> tuple[Samples, str, ClassBoundaries]:
    with open(path) as fh:
        header = fh.readline()
        meta = dict(kv.split("=", 1) for kv in header[1:].split())
        width, k = int(meta["width"]), int(meta["K"])
        rows = [ln.rstrip("\n").split(",") for ln in fh if ln.strip()]
    X = np.array([[float(v) for v in r[:width]] for r in rows], dtype=np.float64).reshape(-1, width)
    y = np.array([int(r[width]) for r in rows], dtype=np.int64)
    return Samples(X, y, k), meta["layout"], ClassBoundaries.parse(meta["boundaries"])
