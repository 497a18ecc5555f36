"""Training runs and the depth sweep, shared by the CLI and the acceptance suite."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ExperimentConfig
from .network import build_network, save_checkpoint
from .tasks import generate, split
from .training import EpochMetrics, train, write_metrics_csv

log = logging.getLogger(__name__)

SUMMARY_HEADER = ("kind", "layers", "train_ce", "cv_ce", "frame_err")


@dataclass
class SweepRow:
    kind: str
    layers: int
    train_ce: float
    cv_ce: float
    frame_err: float


def make_datasets(cfg: ExperimentConfig):
    return split(generate(cfg.task), cfg.cv_fraction, cfg.seed)


def run_training(cfg: ExperimentConfig, metrics_path=None, checkpoint_path=None,
                 datasets=None) -> tuple[list[EpochMetrics], object]:
    train_set, cv_set = datasets if datasets is not None else make_datasets(cfg)
    net = build_network(cfg.network)
    history = train(net, train_set, cv_set, cfg.train)
    if metrics_path is not None:
        write_metrics_csv(history, metrics_path, wallclock=cfg.wallclock)
    if checkpoint_path is not None:
        save_checkpoint(net, checkpoint_path)
    return history, net


def _sweep_cell(args) -> SweepRow:
    cfg, kind, layers, out_dir = args
    cell_cfg = cfg.with_network(cell_kind=kind, layers=layers)
    metrics = None if out_dir is None else Path(out_dir) / f"{kind}_L{layers}_metrics.csv"
    log.info("depth sweep: %s x %d layers", kind, layers)
    history, _ = run_training(cell_cfg, metrics_path=metrics)
    last = history[-1]
    return SweepRow(kind, layers, last.train_ce, last.cv_ce, 1.0 - last.frame_acc)


def worker_count() -> int:
    raw = os.environ.get("RESLSTM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"RESLSTM_THREADS must be an integer, got {raw!r}") from None


def depth_sweep(cfg: ExperimentConfig, out_dir=None, kinds=None, layers=None) -> list[SweepRow]:
    """Train every (kind, depth) cell; rows come back in grid order whatever the worker count."""
    kinds = tuple(kinds or cfg.sweep_kinds)
    layers = tuple(layers or cfg.sweep_layers)
    jobs = [(cfg, k, L, out_dir) for k in kinds for L in layers]
    workers = min(worker_count(), len(jobs))
    if workers == 1:
        return [_sweep_cell(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_cell, jobs))


def write_summary_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow((r.kind, r.layers, repr(r.train_ce), repr(r.cv_ce), repr(r.frame_err)))
