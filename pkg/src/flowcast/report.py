"""Static SVG plots rendered from the CSV artifacts of a run directory."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata and hash salt keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "flowcast"
SVG_META = {"Date": None}


def _rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return path


def plot_trace(trace_csv: Path, out: Path) -> Path:
    rows = _rows(trace_csv)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    acc = [float(r["accuracy"]) for r in rows]
    ax.plot(range(len(acc)), acc, lw=1)
    ax.set_xlabel("evaluation step")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    # block boundaries as faint vertical lines
    blocks = [int(r["block"]) for r in rows]
    for i in range(1, len(blocks)):
        if blocks[i] != blocks[i - 1]:
            ax.axvline(i - 0.5, color="0.85", lw=0.5)
    return _save(fig, out)


def plot_histogram(hist_csv: Path, out: Path, title: str = "") -> Path:
    rows = _rows(hist_csv)
    lo = np.array([float(r["bin_lo"]) for r in rows])
    hi = np.array([float(r["bin_hi"]) for r in rows])
    counts = np.array([int(r["count"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(lo, counts, width=hi - lo, align="edge")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.set_ylabel("count")
    return _save(fig, out)


def plot_confusion(cm_csv: Path, out: Path) -> Path:
    cm = np.loadtxt(cm_csv, delimiter=",", ndmin=2)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    fig, ax = plt.subplots(figsize=(4, 3.5))
    im = ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
    for (i, j), v in np.ndenumerate(norm):
        ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=8)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(im, ax=ax)
    return _save(fig, out)


def plot_embedding(emb_csv: Path, out: Path) -> Path:
    rows = _rows(emb_csv)
    tags = sorted({r["tag"] for r in rows})
    fig, ax = plt.subplots(figsize=(5, 4.5))
    for tag in tags:
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows if r["tag"] == tag])
        ax.scatter(pts[:, 0], pts[:, 1], s=4, label=tag)
    if len(tags) <= 12:
        ax.legend(fontsize=7, markerscale=2)
    ax.set_xticks([])
    ax.set_yticks([])
    return _save(fig, out)


def plot_probe(probe_csv: Path, out: Path) -> Path:
    rows = _rows(probe_csv)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([int(r["block"]) for r in rows], [float(r["accuracy"]) for r in rows], marker="o")
    ax.set_xlabel("block")
    ax.set_ylabel("accuracy of block-0 model")
    ax.set_ylim(0, 1)
    return _save(fig, out)


def render_run(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render every recognised CSV under ``run_dir`` into ``out_dir``."""
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []
    if (run_dir / "trace.csv").exists():
        made.append(plot_trace(run_dir / "trace.csv", out_dir / "accuracy_trend.svg"))
    if (run_dir / "probe.csv").exists():
        made.append(plot_probe(run_dir / "probe.csv", out_dir / "drift_probe.svg"))
    for p in sorted(run_dir.glob("histogram_*.csv")):
        made.append(plot_histogram(p, out_dir / f"{p.stem}.svg", p.stem.removeprefix("histogram_")))
    for p in sorted(run_dir.glob("embedding_*.csv")):
        made.append(plot_embedding(p, out_dir / f"{p.stem}.svg"))
    cms = sorted((run_dir / "confusion").glob("block_*.csv")) if (run_dir / "confusion").is_dir() else []
    if cms:
        made.append(plot_confusion(cms[-1], out_dir / "confusion_last_block.svg"))
    return made
