"""Synthetic-data experiments behind the acceptance suite and ``scripts/``.

Each driver generates its own records, runs the full preparation pipeline and
trains with :mod:`flowcast.trainer`, so results depend only on the arguments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .anonymize import derive_key
from .dnn import Hyperparams
from .encode import Samples
from .pipeline import chronological_columns, make_samples, prepare_records
from .synth import DriftSpec, SynthConfig, address_plan, generate
from .trainer import GridSpace, drift_probe, enumerate_grid, train_sequential

log = logging.getLogger(__name__)


def synthetic_columns(config: SynthConfig, max_blocks: int | None = None) -> list[dict]:
    """Generate, enrich, anonymize and aggregate; one column dict per block."""
    plan = address_plan(config)
    blocks = prepare_records(generate(config, plan), plan.tables(), derive_key("flowcast"),
                             config.block_size, max_blocks=max_blocks)
    return [chronological_columns(b.entries) for b in blocks]


def sample_blocks(columns: list[dict], hyper: Hyperparams, test_fraction: float = 0.1):
    return [make_samples(c, hyper, test_fraction, hyper.seed, b) for b, c in enumerate(columns)]


def shuffle_labels(blocks, seed: int):
    """Break the feature/label link while keeping class counts."""
    rng = np.random.default_rng(seed)
    return [tuple(Samples(s.X, rng.permutation(s.y), s.n_classes) for s in pair) for pair in blocks]


# --- learnability ------------------------------------------------------------

@dataclass
class LearnabilityResult:
    block_accuracy: list[float]
    shuffled_accuracy: list[float]


def learnability(n_blocks: int = 3, block_size: int = 20_000, seed: int = 0,
                 hyper: Hyperparams | None = None) -> LearnabilityResult:
    """Planted port rule at full strength, then the same blocks with shuffled labels."""
    hyper = hyper or Hyperparams(seed=seed)
    cfg = SynthConfig(n_records=n_blocks * block_size, seed=seed, block_size=block_size)
    blocks = sample_blocks(synthetic_columns(cfg), hyper)
    real = train_sequential(blocks, hyper)
    fake = train_sequential(shuffle_labels(blocks, seed), hyper)
    return LearnabilityResult([b.confusion.accuracy for b in real.blocks],
                              [b.confusion.accuracy for b in fake.blocks])


# --- enrichment benefit --------------------------------------------------------

@dataclass
class EnrichmentResult:
    seeds: list[int]
    best: dict[str, list[float]]          # layout -> best accuracy per seed

    def mean(self, layout: str) -> float:
        return float(np.mean(self.best[layout]))

    @property
    def gap(self) -> float:
        return self.mean("ALL") - self.mean("FIVE_TUPLE")


def enrichment_benefit(seeds=(0, 1, 2), n_blocks: int = 3, block_size: int = 10_000,
                       learning_rates=(0.01, 0.001), epochs: int = 10) -> EnrichmentResult:
    """Best-of-sub-grid accuracy for ALL vs FIVE_TUPLE on a locality-dependent rule."""
    space = GridSpace(keep=((1.0, 1.0),), layers=(3,), size=(200,),
                      learning_rate=tuple(learning_rates), features=("FIVE_TUPLE", "ALL"),
                      balancing=("undersample",), outlier_centers=(0,),
                      boundaries=(GridSpace().boundaries[1],))
    best = {"FIVE_TUPLE": [], "ALL": []}
    for seed in seeds:
        cfg = SynthConfig(n_records=n_blocks * block_size, seed=seed, block_size=block_size,
                          rule="locality")
        columns = synthetic_columns(cfg)
        per_layout = {"FIVE_TUPLE": 0.0, "ALL": 0.0}
        for h in enumerate_grid(space, seed=seed, epochs=epochs):
            acc = train_sequential(sample_blocks(columns, h), h).best_accuracy
            log.info("seed %d %s eps=%g -> %.4f", seed, h.features, h.learning_rate, acc)
            per_layout[h.features] = max(per_layout[h.features], acc)
        for k, v in per_layout.items():
            best[k].append(v)
    return EnrichmentResult(list(seeds), best)


# --- drift -----------------------------------------------------------------------

@dataclass
class DriftResult:
    probes: list[tuple[int, float]]
    shift_block: int

    @property
    def baseline(self) -> float:
        return self.probes[0][1]

    def post_shift(self) -> list[float]:
        return [a for b, a in self.probes if b >= self.shift_block]


def drift_experiment(n_blocks: int = 8, block_size: int = 5000, shift_block: int | None = 2,
                     magnitude: float = 1.0, ramp_blocks: int = 4, seed: int = 0,
                     train_epochs: int = 20, stride: int = 1,
                     hyper: Hyperparams | None = None) -> DriftResult:
    """Train on block 0, probe later blocks; ``shift_block=None`` keeps the data stationary."""
    hyper = hyper or Hyperparams(seed=seed)
    drift = DriftSpec(shift_block, magnitude, ramp_blocks) if shift_block is not None else None
    cfg = SynthConfig(n_records=n_blocks * block_size, seed=seed, block_size=block_size, drift=drift)
    blocks = sample_blocks(synthetic_columns(cfg), hyper)
    probes = drift_probe(blocks, hyper, train_epochs, stride)
    return DriftResult(probes, shift_block if shift_block is not None else n_blocks)


def sequential_drift_trace(n_blocks: int = 10, block_size: int = 3000, shift_block: int | None = 5,
                           seed: int = 0, hyper: Hyperparams | None = None):
    """Block-sequential training with an evaluation before each block's first step."""
    hyper = hyper or Hyperparams(seed=seed)
    drift = DriftSpec(shift_block) if shift_block is not None else None
    cfg = SynthConfig(n_records=n_blocks * block_size, seed=seed, block_size=block_size, drift=drift)
    blocks = sample_blocks(synthetic_columns(cfg), hyper)
    return train_sequential(blocks, replace(hyper), eval_at_start=True)
