"""CLI for ngseq."""

from __future__ import annotations

import argparse
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Callable

from rich.console import Console
from rich.markup import escape
from rich.table import Table

from . import config as cfg
from .errors import ConfigurationError, NgseqError, TrainingAborted, UsageError
from .harness import (
    DEFAULT_PRESET,
    available_checks,
    available_presets,
    generate_task,
    load_dataset,
    run_checks,
    save_dataset,
    train,
    train_matrix,
    write_comparison,
)
from .harness.compare import DEFAULT_METHODS, comparison_rows, convergence_trend
from .logging_setup import configure
from .optim.config import OptimizerMethod
from .telemetry import create_tracer

console = Console(stderr=True)

EXIT_RUNTIME = 1
EXIT_USAGE = 2
METHODS = [str(m) for m in OptimizerMethod]


def _overrides(args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    """CLI flags, the highest-priority config layer."""
    training: dict[str, Any] = {}
    task: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        training["seed"] = args.seed
        task["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        training["output_dir"] = str(args.out)
    if getattr(args, "epochs", None) is not None:
        training["epochs"] = args.epochs
    if getattr(args, "criterion", None) is not None:
        training["criterion"] = args.criterion
    out: dict[str, dict[str, Any]] = {"training": training, "task": task}
    if getattr(args, "method", None) is not None:
        out["optimizer"] = {"method": args.method}
    if getattr(args, "debug", False):
        out["logging"] = {"debug": True}
    return out


def _load(args: argparse.Namespace):
    run = cfg.load_run_config(args.config, preset=args.preset, overrides=_overrides(args))
    configure(run.log_file, debug=run.debug)
    return run


def _require_out(run) -> Path:
    if run.output_dir is None:
        raise ConfigurationError("no output directory; pass --out or set NGSEQ_OUT")
    return run.output_dir


def _summary_table(title: str, rows: list[dict[str, Any]]) -> Table:
    table = Table(title=title)
    table.add_column("Method")
    table.add_column("Epochs", justify="right")
    table.add_column("Updates", justify="right")
    table.add_column("Train acc.", justify="right")
    table.add_column("Valid acc.", justify="right")
    table.add_column("Valid TER", justify="right")
    for row in rows:
        if "train_accuracy" not in row:
            table.add_row(row["method"], "-", "-", "-", "-", "[red]aborted[/red]")
            continue
        table.add_row(
            row["method"],
            f"{row['epochs']:g}",
            f"{row['updates']:g}",
            f"{row['train_accuracy']:.4f}",
            f"{row['validation_accuracy']:.4f}",
            f"{row['validation_token_error_rate']:.4f}",
        )
    return table


def cmd_generate(args: argparse.Namespace) -> int:
    run = _load(args)
    out = _require_out(run)
    dataset = generate_task(run.task)
    save_dataset(dataset, out)

    table = Table(title="ngseq dataset")
    table.add_column("Split")
    table.add_column("Utterances", justify="right")
    table.add_column("Frames", justify="right")
    for split, utts in (("train", dataset.train), ("validation", dataset.validation)):
        table.add_row(split, str(len(utts)), str(sum(u.num_frames for u in utts)))
    console.print(table)
    console.print(f"Mean lattice paths: [bold]{dataset.mean_paths():.1f}[/bold]")
    console.print(f"Wrote [bold]{out}[/bold]")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = _load(args)
    out = _require_out(run)
    dataset = load_dataset(args.data) if args.data else None
    out.mkdir(parents=True, exist_ok=True)
    cfg.save_run_config(run, out / "config.resolved.toml")

    tracer = create_tracer(run.telemetry_endpoint, run.telemetry_headers, run_name=out.name)
    try:
        result = train(run, dataset=dataset, listener=tracer)
    finally:
        if tracer is not None:
            tracer.flush()
            tracer.shutdown()

    summary = result.summary
    console.print(_summary_table(f"ngseq {summary['criterion']}", [summary["ce_baseline"], summary]))
    compute = summary["compute"]
    console.print(
        f"Compute: {compute['gradient_evaluations']} gradient passes, "
        f"{compute['curvature_products']} curvature products "
        f"({compute['curvature_fraction']:.0%} curvature)"
    )
    console.print(f"Wrote [bold]{out}[/bold]")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    configure(None, debug=args.debug)
    results = run_checks(args.check, seed=args.seed if args.seed is not None else 0)

    table = Table(title="ngseq verify")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Max error", justify="right")
    table.add_column("Seconds", justify="right")
    table.add_column("Detail")
    for r in results:
        status = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.name, status, f"{r.max_error:.2e}", f"{r.seconds:.1f}", escape(r.detail))
    console.print(table)
    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[red]{len(failed)} check(s) failed:[/red] {', '.join(failed)}")
        return EXIT_RUNTIME
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    run = _load(args)
    out = _require_out(run)
    if args.seeds < 1:
        raise ConfigurationError(f"--seeds must be positive, got {args.seeds}")
    seeds = [run.seed + k for k in range(args.seeds)]
    methods = args.methods or [str(m) for m in DEFAULT_METHODS]
    matrix = train_matrix(run, seeds, methods)
    rows = comparison_rows(matrix)
    write_comparison(out, rows, matrix.summaries())
    console.print(
        _summary_table(
            f"ngseq compare ({run.criterion}, median of {len(seeds)} seed(s))",
            [r.to_mapping() for r in rows],
        )
    )
    if {"hf", "ng"} <= set(matrix.methods):
        report = convergence_trend(matrix)
        colour = "green" if report.passed else "yellow"
        console.print(f"[{colour}]trend:[/{colour}] {escape(report.describe())}")
    console.print(f"Wrote [bold]{out / 'compare.csv'}[/bold]")
    return EXIT_RUNTIME if any(r.aborted for r in rows) else 0


def cmd_version(_args: argparse.Namespace) -> int:
    try:
        console.print(version("ngseq"))
    except PackageNotFoundError:
        console.print("unknown")
    return 0


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Run config (TOML)")
    parser.add_argument("--preset", choices=available_presets(), default=DEFAULT_PRESET, help="Base preset")
    parser.add_argument("--seed", type=int, help="Seed for the task and the run")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--debug", action="store_true", help="Log DEBUG messages")


def _guarded(fn: Callable[[argparse.Namespace], int]) -> Callable[[argparse.Namespace], int]:
    """Map ngseq errors to a one-line diagnostic and an exit status."""

    def run(args: argparse.Namespace) -> int:
        try:
            return fn(args)
        except (ConfigurationError, UsageError) as exc:
            console.print(f"[red]error:[/red] {escape(str(exc))}")
            return EXIT_USAGE
        except TrainingAborted as exc:
            console.print(f"[red]training aborted:[/red] {escape(str(exc))}")
            return EXIT_RUNTIME
        except NgseqError as exc:
            console.print(f"[red]error:[/red] {escape(str(exc))}")
            return EXIT_RUNTIME

    return run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngseq",
        description="Sequence-discriminative training with natural-gradient and Hessian-free optimizers",
    )
    sub = parser.add_subparsers(dest="command")

    p_generate = sub.add_parser("generate", help="Write a synthetic dataset to --out")
    _add_run_flags(p_generate)

    p_train = sub.add_parser("train", help="CE pre-training then sequence training")
    _add_run_flags(p_train)
    p_train.add_argument("--method", choices=METHODS, help="Optimizer")
    p_train.add_argument("--criterion", choices=["mmi", "mpe", "smbr"], help="Training criterion")
    p_train.add_argument("--epochs", type=int, help="Sequence-training epochs")
    p_train.add_argument("--data", type=Path, help="Dataset directory written by `generate`")

    p_verify = sub.add_parser("verify", help="Run the oracle property checks")
    p_verify.add_argument("--seed", type=int, help="Seed for the check fixtures")
    p_verify.add_argument("--check", action="append", choices=available_checks(), help="Run only this check")
    p_verify.add_argument("--debug", action="store_true", help="Log DEBUG messages")

    p_compare = sub.add_parser("compare", help="Run every optimizer over several seeds")
    _add_run_flags(p_compare)
    p_compare.add_argument("--seeds", type=int, default=5, help="Number of seeds")
    p_compare.add_argument("--methods", nargs="+", choices=METHODS, help="Optimizers to compare")
    p_compare.add_argument("--criterion", choices=["mmi", "mpe", "smbr"], help="Training criterion")
    p_compare.add_argument("--epochs", type=int, help="Sequence-training epochs")

    sub.add_parser("version", help="Show version")
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        sys.exit(0)

    commands = {
        "generate": _guarded(cmd_generate),
        "train": _guarded(cmd_train),
        "verify": _guarded(cmd_verify),
        "compare": _guarded(cmd_compare),
        "version": cmd_version,
    }
    sys.exit(commands[args.command](args))


if __name__ == "__main__":
    main()
