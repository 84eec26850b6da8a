"""Block-wise preparation: records -> enriched -> anonymized -> entries -> samples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregate import AggregateConfig, AggregateStats, FlowEntry, aggregate_block
from .analytics import detect_outliers, kmeans
from .anonymize import AnonKey, anonymize_entry
from .dnn import Hyperparams
from .encode import Samples, assign_labels, balance_undersample, build_matrix, entry_columns, get_layout
from .enrich import LookupTables, enrich_record
from .ingest import FlowRecord, partition_blocks, test_count


@dataclass(frozen=True)
class PreparedBlock:
    index: int
    entries: list[FlowEntry]
    stats: AggregateStats


def prepare_block(records: Sequence[FlowRecord], tables: LookupTables, key: AnonKey,
                  config: AggregateConfig = AggregateConfig()) -> tuple[list[FlowEntry], AggregateStats]:
    anon = [anonymize_entry(enrich_record(r, tables), key) for r in records]
    return aggregate_block(anon, config)


def prepare_records(records: Sequence[FlowRecord], tables: LookupTables, key: AnonKey,
                    block_size: int = 100_000, config: AggregateConfig = AggregateConfig(),
                    max_blocks: int | None = None) -> list[PreparedBlock]:
    out = []
    for block in partition_blocks(records, block_size):
        if max_blocks is not None and block.index >= max_blocks:
            break
        entries, stats = prepare_block(block.records, tables, key, config)
        out.append(PreparedBlock(block.index, entries, stats))
    return out


def chronological_columns(entries: Sequence[FlowEntry]) -> dict[str, np.ndarray]:
    cols = entry_columns(entries)
    order = np.argsort(cols["start_ms"], kind="stable")
    return {k: v[order] for k, v in cols.items()}


def remove_outliers(X: np.ndarray, centers: int, seed: int, mode: str = "avg+std",
                    iters: int = 20) -> np.ndarray:
    """Boolean keep-mask after k-means outlier detection (all True for centers=0)."""
    if centers <= 0 or len(X) == 0:
        return np.ones(len(X), dtype=bool)
    km = kmeans(X, min(centers, len(X)), iters=iters, seed=seed)
    return ~detect_outliers(km, X, mode)


def make_samples(columns: dict[str, np.ndarray], hyper: Hyperparams, test_fraction: float = 0.1,
                 seed: int = 0, block_index: int = 0) -> tuple[Samples, Samples]:
    """Encode, label, split, drop outliers and balance one block.

    ``columns`` must already be in chronological order.
    """
    n = len(columns["start_ms"])
    if n < 2:
        raise ValueError(f"block {block_index} has {n} entries; cannot split")
    layout = get_layout(hyper.features)
    X = build_matrix(columns, layout)
    y = assign_labels(columns["bit_rate_bps"], hyper.boundaries)
    k = hyper.boundaries.n_classes
    cut = n - test_count(n, test_fraction)
    train, test = Samples(X[:cut], y[:cut], k), Samples(X[cut:], y[cut:], k)
    if hyper.outlier_centers:
        train = train.subset(remove_outliers(train.X, hyper.outlier_centers, seed))
    if hyper.balancing == "undersample":
        train = balance_undersample(train, seed * 7919 + 2 * block_index)
        test = balance_undersample(test, seed * 7919 + 2 * block_index + 1)
    return train, test
