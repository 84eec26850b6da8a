"""Block-sequential training, evaluation, grid enumeration, sweeps and drift probes."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dnn import (BALANCING_VALUES, FEATURE_VALUES, KEEP_VALUES, LAYER_VALUES, LR_VALUES,
                  OUTLIER_VALUES, SIZE_VALUES, Classifier, Hyperparams)
from .encode import ALT_BOUNDARIES, DEFAULT_BOUNDARIES, ClassBoundaries, Samples, class_weights

log = logging.getLogger(__name__)

EVAL_STRIDE = 50
UNDEFINED = None


# --- evaluation -------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> "ConfusionMatrix":
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(cm)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_csv(self) -> str:
        return "".join(",".join(str(int(v)) for v in row) + "\n" for row in self.counts)

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        return cls(np.array([[int(v) for v in ln.split(",")] for ln in text.splitlines() if ln.strip()]))


def evaluate(model: Classifier, samples: Samples) -> ConfusionMatrix:
    return ConfusionMatrix.from_predictions(samples.y, model.predict(samples.X), samples.n_classes)


@dataclass
class ClassMetrics:
    precision: float | None
    recall: float | None
    specificity: float | None
    accuracy: float


@dataclass
class MetricReport:
    per_class: list[ClassMetrics]
    accuracy: float


def _ratio(num: int, den: int):
    return num / den if den else UNDEFINED


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """One-vs-all measures per class; empty denominators give ``None``."""
    c = np.asarray(cm.counts, dtype=np.int64)
    total = int(c.sum())
    if total == 0:
        raise ValueError("metrics of an all-zero confusion matrix")
    out = []
    for k in range(len(c)):
        tp = int(c[k, k])
        fp = int(c[:, k].sum()) - tp
        fn = int(c[k, :].sum()) - tp
        tn = total - tp - fp - fn
        out.append(ClassMetrics(_ratio(tp, tp + fp), _ratio(tp, tp + fn),
                                _ratio(tn, tn + fp), (tp + tn) / total))
    return MetricReport(out, int(np.trace(c)) / total)


# --- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TracePoint:
    block: int
    iteration: int
    accuracy: float


@dataclass
class BlockResult:
    trace: list[TracePoint]
    confusion: ConfusionMatrix
    iterations: int


class BlockError(RuntimeError):
    def __init__(self, block: int, cause: Exception):
        self.block = block
        super().__init__(f"block {block}: {cause}")


def train_block(model: Classifier, train: Samples, test: Samples, hyper: Hyperparams | None = None,
                block_index: int = 0, eval_stride: int = EVAL_STRIDE,
                eval_at_start: bool = False) -> BlockResult:
    """Minibatch training for ``hyper.epochs`` epochs with periodic test evaluation.

    Test accuracy is recorded every ``eval_stride`` iterations; a final
    evaluation is appended when the block does not end on a stride multiple.
    """
    hyper = hyper or model.hyper
    weights = class_weights(train.y, train.n_classes) if hyper.balancing == "weight" else None
    trace: list[TracePoint] = []
    if eval_at_start:
        trace.append(TracePoint(block_index, 0, evaluate(model, test).accuracy))
    it = 0
    n, bs = len(train), hyper.batch_size
    for _ in range(hyper.epochs):
        order = model.rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            model.step(train.X[idx], train.y[idx], weights)
            it += 1
            if it % eval_stride == 0:
                trace.append(TracePoint(block_index, it, evaluate(model, test).accuracy))
    cm = evaluate(model, test)
    if it % eval_stride != 0 or it == 0:
        trace.append(TracePoint(block_index, it, cm.accuracy))
    return BlockResult(trace, cm, it)


@dataclass
class SequentialResult:
    model: Classifier
    blocks: list[BlockResult] = field(default_factory=list)

    @property
    def trace(self) -> list[TracePoint]:
        return [p for b in self.blocks for p in b.trace]

    @property
    def best_accuracy(self) -> float:
        return max(p.accuracy for p in self.trace)

    @property
    def final_accuracy(self) -> float:
        return self.blocks[-1].confusion.accuracy


def train_sequential(blocks: Sequence[tuple[Samples, Samples]], hyper: Hyperparams,
                     eval_stride: int = EVAL_STRIDE, eval_at_start: bool = False,
                     model: Classifier | None = None) -> SequentialResult:
    """One model (and one Adam state) carried through the blocks in order."""
    if not blocks:
        raise ValueError("need at least one block")
    in_dim = blocks[0][0].X.shape[1]
    model = model or Classifier(hyper, in_dim, blocks[0][0].n_classes)
    result = SequentialResult(model)
    for b, (train, test) in enumerate(blocks):
        try:
            result.blocks.append(train_block(model, train, test, hyper, b, eval_stride, eval_at_start))
        except Exception as exc:
            raise BlockError(b, exc) from exc
    return result


def drift_probe(blocks: Sequence[tuple[Samples, Samples]], hyper: Hyperparams,
                train_epochs: int = 20, stride: int = 50) -> list[tuple[int, float]]:
    """Train on block 0 only, then score the frozen model on every stride-th test split."""
    if not blocks:
        raise ValueError("need at least one block")
    h = replace(hyper, epochs=train_epochs)
    train, _ = blocks[0]
    model = Classifier(h, train.X.shape[1], train.n_classes)
    train_block(model, train, blocks[0][1], h, 0)
    return [(b, evaluate(model, blocks[b][1]).accuracy) for b in range(0, len(blocks), stride)]


# --- grid -------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpace:
    """Axis order here is the enumeration order (last axis varies fastest)."""

    keep: tuple[tuple[float, float], ...] = KEEP_VALUES
    layers: tuple[int, ...] = LAYER_VALUES
    size: tuple[int, ...] = SIZE_VALUES
    learning_rate: tuple[float, ...] = LR_VALUES
    features: tuple[str, ...] = FEATURE_VALUES
    boundaries: tuple[ClassBoundaries, ...] = (ALT_BOUNDARIES, DEFAULT_BOUNDARIES)
    balancing: tuple[str, ...] = BALANCING_VALUES
    outlier_centers: tuple[int, ...] = OUTLIER_VALUES

    AXES = ("keep", "layers", "size", "learning_rate", "features", "boundaries",
            "balancing", "outlier_centers")

    def cardinality(self) -> int:
        return int(np.prod([len(getattr(self, a)) for a in self.AXES]))


def enumerate_grid(space: GridSpace = GridSpace(), **fixed) -> list[Hyperparams]:
    axes = [getattr(space, a) for a in GridSpace.AXES]
    if any(len(a) == 0 for a in axes):
        raise ValueError("every grid axis needs at least one value")
    out = []
    for keep, L, S, lr, F, C, W, oc in itertools.product(*axes):
        out.append(Hyperparams(layers=L, size=S, learning_rate=lr, keep_input=keep[0],
                               keep_hidden=keep[1], features=F, boundaries=C, balancing=W,
                               outlier_centers=oc, **fixed))
    return out


def config_hash(hyper: Hyperparams) -> str:
    blob = json.dumps(hyper.to_dict(), sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


# --- sweep ------------------------------------------------------------------

RESULT_COLUMNS = ("config_hash", "L", "S", "eps", "di", "dh", "F", "C", "W", "Oc",
                  "best_acc", "final_acc", "seconds")

_WORKER_BLOCKS = None


def _init_worker(columns_blocks, test_fraction):
    global _WORKER_BLOCKS
    _WORKER_BLOCKS = (columns_blocks, test_fraction)


def run_config(columns_blocks: Sequence[dict], hyper: Hyperparams, test_fraction: float = 0.1) -> dict:
    from .pipeline import make_samples

    t0 = time.perf_counter()
    try:
        samples = [make_samples(cols, hyper, test_fraction, hyper.seed, b)
                   for b, cols in enumerate(columns_blocks)]
        res = train_sequential(samples, hyper)
        rec = {"status": "ok", "best_acc": res.best_accuracy, "final_acc": res.final_accuracy}
    except Exception as exc:  # recorded, sweep continues
        rec = {"status": "failed", "error": f"{type(exc).__name__}: {exc}",
               "best_acc": None, "final_acc": None}
    rec.update(config_hash=config_hash(hyper), hyper=hyper.to_dict(),
               seconds=round(time.perf_counter() - t0, 3))
    return rec


def _worker(hyper):
    blocks, frac = _WORKER_BLOCKS
    return run_config(blocks, hyper, frac)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def sweep(columns_blocks: Sequence[dict], configs: Sequence[Hyperparams], out_dir: str | Path,
          workers: int = 1, test_fraction: float = 0.1) -> list[dict]:
    """Train every config; one JSON record per config allows resuming.

    Returns all records (old and new) ranked by best accuracy, failures last.
    """
    out_dir = Path(out_dir)
    rec_dir = out_dir / "results"
    rec_dir.mkdir(parents=True, exist_ok=True)
    todo = [h for h in configs if not (rec_dir / f"{config_hash(h)}.json").exists()]
    log.info("sweep: %d configs, %d already done", len(configs), len(configs) - len(todo))

    def store(rec):
        _write_atomic(rec_dir / f"{rec['config_hash']}.json", json.dumps(rec, sort_keys=True, indent=1))

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(list(columns_blocks), test_fraction)) as pool:
            for rec in pool.map(_worker, todo):
                store(rec)
    else:
        for h in todo:
            store(run_config(columns_blocks, h, test_fraction))

    records = [json.loads((rec_dir / f"{config_hash(h)}.json").read_text()) for h in configs]
    ranked = rank_results(records)
    write_results_csv(out_dir / "results.csv", ranked)
    return ranked


def rank_results(records: Sequence[dict]) -> list[dict]:
    return sorted(records, key=lambda r: (r["best_acc"] is None, -(r["best_acc"] or 0.0), r["config_hash"]))


def _fmt(v) -> str:
    return "NA" if v is None else repr(v) if isinstance(v, float) else str(v)


def result_row(rec: dict) -> list[str]:
    h = rec["hyper"]
    return [rec["config_hash"], str(h["layers"]), str(h["size"]), repr(h["learning_rate"]),
            repr(h["keep_input"]), repr(h["keep_hidden"]), h["features"], h["boundaries"],
            "0" if h["balancing"] == "undersample" else "1", str(h["outlier_centers"]),
            _fmt(rec["best_acc"]), _fmt(rec["final_acc"]), _fmt(rec["seconds"])]


def write_results_csv(path: str | Path, records: Sequence[dict]) -> None:
    lines = [",".join(RESULT_COLUMNS)] + [",".join(result_row(r)) for r in records]
    _write_atomic(Path(path), "\n".join(lines) + "\n")


# --- csv helpers -------------------------------------------------------------

def trace_csv(trace: Sequence[TracePoint]) -> str:
    return "block,iteration,accuracy\n" + "".join(
        f"{p.block},{p.iteration},{p.accuracy!r}\n" for p in trace)


def metrics_csv(reports: Sequence[tuple[int, MetricReport]]) -> str:
    lines = ["block,class,precision,recall,specificity,accuracy"]
    for block, rep in reports:
        for k, m in enumerate(rep.per_class):
            lines.append(f"{block},{k},{_fmt(m.precision)},{_fmt(m.recall)},"
                         f"{_fmt(m.specificity)},{_fmt(m.accuracy)}")
        lines.append(f"{block},overall,NA,NA,NA,{_fmt(rep.accuracy)}")
    return "\n".join(lines) + "\n"
