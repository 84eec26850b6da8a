"""Run configuration: INI-style ``key = value`` files plus ``section.key=value`` overrides.

Grammar (parsed with :mod:`configparser`)::

    seed = 3               # keys before any [section] are global
    [hyper]
    size = 400             # aliases: L S eps di dh F C W Oc
    boundaries = 0;50;8000
    [sweep]
    keep = 1.0:1.0, 0.9:0.6
    boundaries = 0;500;5000 | 0;50;8000

Lists are comma separated (``|`` for boundary sets). Unknown sections or keys
and unparsable or out-of-domain values raise :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import configparser
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .analytics import OUTLIER_MODES
from .dnn import (BALANCING_VALUES, FEATURE_VALUES, KEEP_VALUES, LAYER_VALUES, LR_VALUES,
                  OUTLIER_VALUES, SIZE_VALUES, Hyperparams)
from .encode import ALT_BOUNDARIES, DEFAULT_BOUNDARIES, ClassBoundaries
from .enrich import RFC1918
from .synth import DriftSpec, SynthConfig
from .trainer import GridSpace


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: str, sep: str = ",") -> list[str]:
    return [p.strip() for p in text.split(sep) if p.strip()]


def _balancing(text: str) -> str:
    return {"0": "undersample", "1": "weight"}.get(text.strip(), text.strip())


def _features(text: str) -> str:
    t = text.strip()
    return {"5-tuple": "FIVE_TUPLE", "five_tuple": "FIVE_TUPLE", "all": "ALL"}.get(t.lower(), t)


def _keep_pair(text: str) -> tuple[float, float]:
    a, b = text.split(":")
    return (float(a), float(b))


def _boundaries(text: str) -> ClassBoundaries:
    return ClassBoundaries.parse(text)


HYPER_ALIASES = {"L": "layers", "S": "size", "eps": "learning_rate", "di": "keep_input",
                 "dh": "keep_hidden", "F": "features", "C": "boundaries", "W": "balancing",
                 "Oc": "outlier_centers"}


@dataclass
class GlobalSection:
    seed: int = 0
    workers: int = 1
    out: str = "runs"


@dataclass
class SynthSection:
    n_records: int = 100_000
    class_mix: list[float] = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    split_factor: float = 1.0
    duplicate_rate: float = 0.0
    rule: str = "port"
    rule_strength: float = 1.0
    records_per_second: float = 2000.0
    private_fraction: float = 0.5
    private_pool: int = 65_536
    drift_block: int = -1
    drift_magnitude: float = 1.0
    drift_ramp: int = 0


@dataclass
class PipelineSection:
    block_size: int = 100_000
    test_fraction: float = 0.1
    dedup_window_ms: int = 1000
    inactive_timeout_ms: int = 15_000
    timezone: str = "UTC"
    password: str = "flowcast"
    subnets: str = ""
    geo: str = ""
    private_ranges: list[str] = field(default_factory=lambda: list(RFC1918))
    private_ranges_file: str = ""
    max_blocks: int = 0


@dataclass
class HyperSection:
    layers: int = 3
    size: int = 200
    learning_rate: float = 0.001
    keep_input: float = 1.0
    keep_hidden: float = 1.0
    features: str = field(default="ALL", metadata={"parse": _features})
    boundaries: ClassBoundaries = field(default=DEFAULT_BOUNDARIES, metadata={"parse": _boundaries})
    balancing: str = field(default="undersample", metadata={"parse": _balancing})
    outlier_centers: int = 0
    batch_size: int = 100
    epochs: int = 10
    off_grid: bool = False


@dataclass
class SweepSection:
    keep: list = field(default_factory=lambda: list(KEEP_VALUES),
                       metadata={"parse": lambda t: [_keep_pair(p) for p in _split(t)]})
    layers: list[int] = field(default_factory=lambda: list(LAYER_VALUES))
    size: list[int] = field(default_factory=lambda: list(SIZE_VALUES))
    learning_rate: list[float] = field(default_factory=lambda: list(LR_VALUES))
    features: list = field(default_factory=lambda: list(FEATURE_VALUES),
                           metadata={"parse": lambda t: [_features(p) for p in _split(t)]})
    boundaries: list = field(default_factory=lambda: [ALT_BOUNDARIES, DEFAULT_BOUNDARIES],
                             metadata={"parse": lambda t: [_boundaries(p) for p in _split(t, "|")]})
    balancing: list = field(default_factory=lambda: list(BALANCING_VALUES),
                            metadata={"parse": lambda t: [_balancing(p) for p in _split(t)]})
    outlier_centers: list[int] = field(default_factory=lambda: list(OUTLIER_VALUES))


@dataclass
class ProbeSection:
    epochs: int = 20
    stride: int = 50


@dataclass
class AnalyzeSection:
    samples: int = 1000
    perplexity: float = 50.0
    learning_rate: float = 200.0
    iterations: int = 500
    clusters: int = 10
    outlier_clusters: int = 20
    outlier_mode: str = "avg+std"
    bins: int = 50
    model: str = ""


SECTIONS = {"global": GlobalSection, "synth": SynthSection, "pipeline": PipelineSection,
            "hyper": HyperSection, "sweep": SweepSection, "probe": ProbeSection,
            "analyze": AnalyzeSection}
ALIASES = {"hyper": HYPER_ALIASES, "sweep": HYPER_ALIASES | {"keep": "keep"}}


@dataclass
class RunConfig:
    global_: GlobalSection = field(default_factory=GlobalSection)
    synth: SynthSection = field(default_factory=SynthSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    hyper: HyperSection = field(default_factory=HyperSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)

    def section(self, name: str):
        return getattr(self, "global_" if name == "global" else name)

    # -- resolved objects ---------------------------------------------------

    def hyperparams(self) -> Hyperparams:
        h = self.hyper
        return Hyperparams(h.layers, h.size, h.learning_rate, h.keep_input, h.keep_hidden,
                           h.features, h.boundaries, h.balancing, h.outlier_centers,
                           h.batch_size, h.epochs, self.global_.seed, h.off_grid)

    def synth_config(self) -> SynthConfig:
        s = self.synth
        drift = DriftSpec(s.drift_block, s.drift_magnitude, s.drift_ramp) if s.drift_block >= 0 else None
        return SynthConfig(n_records=s.n_records, seed=self.global_.seed, class_mix=tuple(s.class_mix),
                           split_factor=s.split_factor, duplicate_rate=s.duplicate_rate, drift=drift,
                           rule_strength=s.rule_strength, rule=s.rule,
                           block_size=self.pipeline.block_size,
                           records_per_second=s.records_per_second,
                           private_fraction=s.private_fraction, private_pool=s.private_pool)

    def grid_space(self) -> GridSpace:
        s = self.sweep
        return GridSpace(tuple(s.keep), tuple(s.layers), tuple(s.size), tuple(s.learning_rate),
                         tuple(s.features), tuple(s.boundaries), tuple(s.balancing),
                         tuple(s.outlier_centers))

    def validate(self) -> None:
        def check(key, ok, msg):
            if not ok:
                raise ConfigError(f"{key}: {msg}")

        try:
            self.hyperparams()
        except ValueError as exc:
            raise ConfigError(f"hyper: {exc}") from None
        if self.synth.n_records > 0:
            try:
                self.synth_config()
            except ValueError as exc:
                raise ConfigError(f"synth: {exc}") from None
        p = self.pipeline
        check("pipeline.block_size", p.block_size >= 1, "must be >= 1")
        check("pipeline.test_fraction", 0 < p.test_fraction < 1, "must lie in (0, 1)")
        check("pipeline.max_blocks", p.max_blocks >= 0, "must be >= 0")
        check("global.workers", self.global_.workers >= 1, "must be >= 1")
        check("probe.stride", self.probe.stride >= 1, "must be >= 1")
        check("probe.epochs", self.probe.epochs >= 1, "must be >= 1")
        check("analyze.outlier_mode", self.analyze.outlier_mode in OUTLIER_MODES,
              f"must be one of {OUTLIER_MODES}")
        check("analyze.samples", self.analyze.samples >= 2, "must be >= 2")
        for axis in GridSpace.AXES:
            check(f"sweep.{axis}", len(getattr(self.sweep, axis)) > 0, "empty axis")
        for b in self.sweep.balancing:
            check("sweep.balancing", b in BALANCING_VALUES, f"unknown value {b!r}")


def _converter(section_cls, f):
    if "parse" in f.metadata:
        return f.metadata["parse"]
    hint = typing.get_type_hints(section_cls)[f.name]
    origin = typing.get_origin(hint)
    if origin is list:
        (inner,) = typing.get_args(hint)
        return lambda t: [inner(p) for p in _split(t)]
    if hint is bool:
        return _bool
    return hint


def _field_map(name: str) -> dict:
    return {f.name: f for f in fields(SECTIONS[name])}


def apply_value(cfg: RunConfig, section: str, key: str, text: str) -> None:
    if section not in SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    fmap = _field_map(section)
    name = ALIASES.get(section, {}).get(key, key)
    if name not in fmap:
        raise ConfigError(f"unknown key {section}.{key}")
    sec = cfg.section(section)
    try:
        value = _converter(type(sec), fmap[name])(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r} ({exc})") from None
    setattr(sec, name, value)


def parse_config(path: str | Path | None = None, overrides: typing.Sequence[str] = ()) -> RunConfig:
    """File values first, then ``section.key=value`` overrides, then validation."""
    cfg = RunConfig()
    if path is not None:
        text = Path(path).read_text()
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                           strict=False)
        parser.optionxform = str
        try:
            parser.read_string("[global]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                apply_value(cfg, section, key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        section, _, name = key.strip().rpartition(".")
        apply_value(cfg, section or "global", name, value.strip())
    cfg.validate()
    return cfg


def _render(value) -> str:
    if isinstance(value, ClassBoundaries):
        return str(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], ClassBoundaries):
            return " | ".join(map(str, value))
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{a!r}:{b!r}" for a, b in value)
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text that parses back to an equal config."""
    lines: list[str] = []
    for name in SECTIONS:
        sec = cfg.section(name)
        if name != "global":
            lines.append(f"\n[{name}]")
        for f in fields(sec):
            lines.append(f"{f.name} = {_render(getattr(sec, f.name))}")
    return "\n".join(lines).lstrip("\n") + "\n"

