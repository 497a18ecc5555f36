"""``reslstm`` command line entry point."""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .analysis import count_params, variance_sweep
from .config import ConfigError, load_config
from .experiments import depth_sweep, run_training, write_summary_csv
from .gradcheck import check_cell
from .network import NET_KINDS


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _load(config_path):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        _fail(str(exc))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log per-epoch progress to stderr.")
def main(verbose: bool) -> None:
    """Plain, highway and residual LSTM stacks with exact truncated BPTT."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
def train(config_path: Path) -> None:
    """Train one network; writes metrics.csv and checkpoint.npz to [output] dir."""
    cfg = _load(config_path)
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        history, _ = run_training(cfg, metrics_path=out / "metrics.csv",
                                  checkpoint_path=out / "checkpoint.npz")
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        _fail(str(exc))
    last = history[-1] if history else None
    if last is not None:
        click.echo(f"epochs={len(history)} train_ce={last.train_ce:.5f} cv_ce={last.cv_ce:.5f} "
                   f"frame_acc={last.frame_acc:.4f}")
    click.echo(f"wrote {out / 'metrics.csv'} and {out / 'checkpoint.npz'}")


@main.command()
@click.option("--cell", "cell", type=click.Choice(NET_KINDS + ("all",)), default="plain", show_default=True)
@click.option("--layers", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--n", "N", type=int, default=3, show_default=True, help="Cell size.")
@click.option("--k", "K", type=int, default=2, show_default=True, help="Input width.")
@click.option("--m", "M", type=int, default=2, show_default=True, help="Output width.")
@click.option("--t", "T", type=int, default=4, show_default=True, help="Sequence length.")
@click.option("--bptt", type=int, default=None, help="Truncation length (default: T).")
@click.option("--shortcut", type=click.Choice(("auto", "matrix")), default="auto", show_default=True)
@click.option("--threshold", type=float, default=1e-4, show_default=True)
@click.option("--corrupt-backward", is_flag=True, hidden=True)
def gradcheck(cell, layers, seed, N, K, M, T, bptt, shortcut, threshold, corrupt_backward) -> None:
    """Compare analytic gradients with central finite differences."""
    kinds = NET_KINDS if cell == "all" else (cell,)
    ok = True
    for kind in kinds:
        report = check_cell(kind, N, K, M, T, seed, threshold=threshold, layers=layers,
                            shortcut=shortcut, bptt_len=bptt, corrupt=corrupt_backward)
        click.echo(report.format())
        ok &= report.passed
    sys.exit(0 if ok else 1)


@main.command()
@click.option("--n", "N", type=int, required=True, help="Cell size.")
@click.option("--m", "M", type=int, required=True, help="Output width.")
@click.option("--d", "D", type=int, required=True, help="Network input width.")
@click.option("--layers", type=int, required=True)
@click.option("--c", "C", type=int, default=0, help="Classes; counts the softmax head when > 0.")
def params(N, M, D, layers, C) -> None:
    """Exact parameter counts per cell kind and the residual-vs-highway saving."""
    try:
        report = count_params("plain", layers, N, M, D, C, include_head=C > 0)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(report.format())


@main.command()
@click.option("--layers", type=int, default=10, show_default=True)
@click.option("--gate", type=float, default=2 ** -0.5, show_default=True)
@click.option("--scaled/--unscaled", default=True, show_default=True)
@click.option("--samples", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("variance.csv"),
              show_default=True)
def variance(layers, gate, scaled, samples, seed, out) -> None:
    """Monte-Carlo output variance per layer with a frozen output gate."""
    try:
        report = variance_sweep(layers, gate, scaled, samples, seed)
        report.write_csv(out)
    except (ValueError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"{'layer':>5} {'variance':>10} {'closed form':>12}")
    for l, (v, ref) in enumerate(zip(report.variances, report.closed_form()), start=1):
        click.echo(f"{l:>5} {v:>10.5f} {ref:>12.5f}")
    click.echo(f"wrote {out}")


@main.command("depth-sweep")
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
def depth_sweep_cmd(config_path: Path) -> None:
    """Train every kind x depth in [sweep]; writes summary.csv plus per-run metrics."""
    cfg = _load(config_path)
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = depth_sweep(cfg, out_dir=out)
        write_summary_csv(rows, out / "summary.csv")
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        _fail(str(exc))
    click.echo(f"{'kind':<18} {'layers':>6} {'train_ce':>9} {'cv_ce':>9} {'frame_err':>9}")
    for r in rows:
        click.echo(f"{r.kind:<18} {r.layers:>6} {r.train_ce:>9.4f} {r.cv_ce:>9.4f} {r.frame_err:>9.4f}")
    click.echo(f"wrote {out / 'summary.csv'}")


if __name__ == "__main__":
    main()
