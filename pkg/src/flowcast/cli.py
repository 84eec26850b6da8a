"""``flowcast`` command line: generate, prepare, train, sweep, probe-drift, analyze, report.

Every command writes into a fresh run directory ``<out>/<command>-<timestamp>``
(or ``<out>/<name>`` with ``--name``) that starts with the resolved config.
Inputs are only read.
"""
from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

from . import analytics, report
from .aggregate import AggregateConfig, read_entries, write_entries
from .anonymize import derive_key
from .config import ConfigError, RunConfig, dump_config, parse_config
from .dnn import Classifier, Hyperparams, load_checkpoint
from .encode import assign_labels, build_matrix, entry_columns, get_layout, write_dataset
from .enrich import LookupTables, read_private_ranges, write_tables
from .ingest import read_records, write_records
from .pipeline import chronological_columns, make_samples, prepare_records
from .synth import address_plan, generate
from .trainer import (drift_probe, enumerate_grid, metrics, metrics_csv,
                      sweep, trace_csv, train_sequential)

log = logging.getLogger("flowcast")

COMMANDS = ("generate", "prepare", "train", "sweep", "probe-drift", "analyze", "report")
NEEDS_INPUT = {"prepare", "train", "sweep", "probe-drift", "analyze", "report"}


# --- run directories ---------------------------------------------------------

def make_run_dir(out: str | Path, command: str, name: str | None = None) -> Path:
    out = Path(out)
    if name:
        run = out / name
        run.mkdir(parents=True, exist_ok=True)
        return run
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    run, n = out / f"{command}-{stamp}", 1
    while run.exists():
        run, n = out / f"{command}-{stamp}-{n}", n + 1
    run.mkdir(parents=True)
    return run


def _block_files(directory: Path) -> list[Path]:
    files = sorted(directory.glob("block_*.csv"))
    if not files:
        raise FileNotFoundError(f"no block_*.csv files under {directory}")
    return files


def load_entry_blocks(prepared: Path) -> list[list]:
    """Entries per block from a ``prepare`` run directory."""
    return [read_entries(p) for p in _block_files(Path(prepared) / "entries")]


def load_columns(prepared: Path) -> list[dict]:
    return [chronological_columns(e) for e in load_entry_blocks(prepared)]


def _sample_blocks(columns: list[dict], hyper: Hyperparams, cfg: RunConfig):
    frac = cfg.pipeline.test_fraction
    return [make_samples(c, hyper, frac, hyper.seed, b) for b, c in enumerate(columns)]


def _tables(cfg: RunConfig, input_dir: Path | None) -> LookupTables:
    """Tables shipped next to the records win over the configured ones."""
    p = cfg.pipeline
    subnets, geo = p.subnets, p.geo
    private = list(p.private_ranges)
    if p.private_ranges_file:
        private = read_private_ranges(p.private_ranges_file)
    if input_dir is not None and (input_dir / "subnets.csv").exists():
        subnets, geo = str(input_dir / "subnets.csv"), str(input_dir / "geo.csv")
        if (input_dir / "private.txt").exists():
            private = read_private_ranges(input_dir / "private.txt")
    if subnets and geo:
        return LookupTables.from_files(subnets, geo, private, p.timezone)
    if subnets or geo:
        raise ConfigError("pipeline.subnets and pipeline.geo must be given together")
    return LookupTables.build(private_ranges=private, timezone=p.timezone)


# --- commands ------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, args, run: Path) -> None:
    sc = cfg.synth_config()
    plan = address_plan(sc)
    records = generate(sc, plan)
    write_records(run / "records.csv", records)
    write_tables(plan.table_rows(), run)
    log.info("generate: %d records -> %s", len(records), run)


def cmd_prepare(cfg: RunConfig, args, run: Path) -> None:
    src = Path(args.input)
    input_dir = src if src.is_dir() else None
    records = read_records(src / "records.csv" if input_dir else src)
    p = cfg.pipeline
    blocks = prepare_records(records, _tables(cfg, input_dir), derive_key(p.password), p.block_size,
                             AggregateConfig(p.dedup_window_ms, p.inactive_timeout_ms),
                             p.max_blocks or None)
    hyper = cfg.hyperparams()
    layout = get_layout(hyper.features)
    (run / "entries").mkdir()
    (run / "datasets").mkdir()
    stats = ["block,n_records,n_after_dedup,n_entries,total_ratio"]
    for b in blocks:
        write_entries(run / "entries" / f"block_{b.index:04d}.csv", b.entries)
        st = b.stats
        stats.append(f"{b.index},{st.n_records},{st.n_after_dedup},{st.n_entries},{st.total_ratio!r}")
        if len(b.entries) >= 2:
            train, test = make_samples(chronological_columns(b.entries), hyper, p.test_fraction,
                                       hyper.seed, b.index)
            write_dataset(run / "datasets" / f"block_{b.index:04d}_train.csv", train, layout,
                          hyper.boundaries)
            write_dataset(run / "datasets" / f"block_{b.index:04d}_test.csv", test, layout,
                          hyper.boundaries)
    (run / "stats.csv").write_text("\n".join(stats) + "\n")
    log.info("prepare: %d records -> %d blocks", len(records), len(blocks))


def cmd_train(cfg: RunConfig, args, run: Path) -> None:
    hyper = cfg.hyperparams()
    blocks = _sample_blocks(load_columns(Path(args.input)), hyper, cfg)
    res = train_sequential(blocks, hyper)
    (run / "trace.csv").write_text(trace_csv(res.trace))
    (run / "confusion").mkdir()
    reports = []
    for b, br in enumerate(res.blocks):
        (run / "confusion" / f"block_{b:04d}.csv").write_text(br.confusion.to_csv())
        reports.append((b, metrics(br.confusion)))
    (run / "metrics.csv").write_text(metrics_csv(reports))
    res.model.save(run / "model.ckpt")
    log.info("train: best %.4f final %.4f", res.best_accuracy, res.final_accuracy)


def cmd_sweep(cfg: RunConfig, args, run: Path) -> None:
    h = cfg.hyper
    configs = enumerate_grid(cfg.grid_space(), batch_size=h.batch_size, epochs=h.epochs,
                             seed=cfg.global_.seed, off_grid=h.off_grid)
    ranked = sweep(load_columns(Path(args.input)), configs, run, cfg.global_.workers,
                   cfg.pipeline.test_fraction)
    done = [r for r in ranked if r["status"] == "ok"]
    log.info("sweep: %d configs, %d ok", len(ranked), len(done))
    if done:
        log.info("sweep: best %s acc %.4f", done[0]["config_hash"], done[0]["best_acc"])


def cmd_probe(cfg: RunConfig, args, run: Path) -> None:
    hyper = cfg.hyperparams()
    blocks = _sample_blocks(load_columns(Path(args.input)), hyper, cfg)
    probes = drift_probe(blocks, hyper, cfg.probe.epochs, cfg.probe.stride)
    (run / "probe.csv").write_text("block,accuracy\n" + "".join(f"{b},{a!r}\n" for b, a in probes))


def _write_embedding(path: Path, emb: analytics.Embedding2D) -> None:
    lines = ["x,y,tag"] + [f"{x!r},{y!r},{t}" for (x, y), t in zip(emb.coords.tolist(), emb.tags)]
    path.write_text("\n".join(lines) + "\n")


def cmd_analyze(cfg: RunConfig, args, run: Path) -> None:
    a = cfg.analyze
    hyper = cfg.hyperparams()
    entries = sorted(load_entry_blocks(Path(args.input))[0], key=lambda e: e.start_ms)
    for name, values in (("bytes", [e.total_bytes for e in entries]),
                         ("duration", [e.duration_ms / 1000.0 for e in entries]),
                         ("bit_rate", [e.bit_rate_bps for e in entries])):
        h = analytics.histogram(values, a.bins)
        rows = ["bin_lo,bin_hi,count"] + [f"{lo!r},{hi!r},{c}" for lo, hi, c in
                                          zip(h.edges[:-1].tolist(), h.edges[1:].tolist(), h.counts.tolist())]
        (run / f"histogram_{name}.csv").write_text("\n".join(rows) + "\n")

    subset = entries[:a.samples]
    cols = entry_columns(subset)
    X = build_matrix(cols, get_layout("ALL"))
    emb = analytics.tsne(X, a.perplexity, a.learning_rate, a.iterations, cfg.global_.seed)
    km = analytics.kmeans(X, min(a.clusters, len(X)), seed=cfg.global_.seed)
    km_out = analytics.kmeans(X, min(a.outlier_clusters, len(X)), seed=cfg.global_.seed)
    outliers = analytics.detect_outliers(km_out, X, a.outlier_mode)
    labels = assign_labels(cols["bit_rate_bps"], hyper.boundaries)
    values = {"cluster": km.assignments.tolist(),
              "outlier": outliers.tolist(),
              "true_label": labels.tolist()}
    if a.model:
        params, saved = load_checkpoint(a.model)
        model_hyper = Hyperparams.from_dict(saved) if saved else hyper
        model = Classifier(model_hyper, get_layout(model_hyper.features).width,
                           model_hyper.boundaries.n_classes)
        model.params = params
        values["predicted_label"] = model.predict(build_matrix(cols, get_layout(model_hyper.features))).tolist()
    for kind in analytics.TAG_KINDS:
        if kind in ("cluster", "outlier", "true_label", "predicted_label") and kind not in values:
            continue
        tagged = analytics.tag_overlay(subset, emb, kind, values.get(kind))
        _write_embedding(run / f"embedding_{kind}.csv", tagged)
    (run / "tsne_kl.csv").write_text("iteration,kl\n" + "".join(f"{i},{v!r}\n" for i, v in emb.kl_history))
    log.info("analyze: %d samples, %.1f%% outliers", len(X), 100.0 * outliers.mean())


def cmd_report(cfg: RunConfig, args, run: Path) -> None:
    made = report.render_run(Path(args.input), run)
    if not made:
        raise FileNotFoundError(f"nothing to render under {args.input}")
    log.info("report: %d figures", len(made))


HANDLERS = {"generate": cmd_generate, "prepare": cmd_prepare, "train": cmd_train,
            "sweep": cmd_sweep, "probe-drift": cmd_probe, "analyze": cmd_analyze,
            "report": cmd_report}


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="parent directory for run directories")
    common.add_argument("--name", help="fixed run directory name (reuse to resume a sweep)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="flowcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in NEEDS_INPUT:
            p.add_argument("--input", required=True,
                           help="records file/dir (prepare), prepare run dir, or run dir (report)")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = list(args.overrides)
    for flag in ("seed", "workers", "out"):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"global.{flag}={value}")
    return parse_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command in NEEDS_INPUT and not Path(args.input).exists():
            raise FileNotFoundError(f"--input {args.input} does not exist")
        run = make_run_dir(cfg.global_.out, args.command, args.name)
        (run / "resolved.cfg").write_text(dump_config(cfg))
        HANDLERS[args.command](cfg, args, run)
    except Exception as exc:  # any failure -> message and nonzero exit
        print(f"flowcast {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(run)
    return 0


if __name__ == "__main__":
    sys.exit(main())
