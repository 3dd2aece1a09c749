"""``gemmas`` command line: validate, analyze, sweep, generate, compare.

Exit status: 0 on success, 1 for invalid traces or failed metrics, 2 for
I/O, network and usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .metrics import AnalysisConfig, analyze_run, build_provider
from .report import (
    DEFAULT_GRID,
    MetricRow,
    RunMeta,
    aggregate,
    compare,
    lambda_sweep,
    parse_grid,
    read_comparison_csv,
    render,
)
from .text_features import ProviderError
from .trace_io import GenSpec, TraceFormatError, generate_synthetic_run, parse_run, serialize_run
from .trace_model import AnswerKind

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_IO = 2

logger = logging.getLogger("gemmas")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _error(message: str) -> None:
    print(f"gemmas: {message}", file=sys.stderr)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_IO) from None


def _load_run(path: str):
    try:
        return parse_run(_read_bytes(path))
    except TraceFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_FAILED) from None


def _emit(data: bytes, output: str | None) -> None:
    if output:
        try:
            Path(output).write_bytes(data)
        except OSError as exc:
            raise CliError(f"{output}: {exc.strerror or exc}", EXIT_IO) from None
        return
    stream = getattr(sys.stdout, "buffer", None)
    if stream is not None:
        sys.stdout.flush()
        stream.write(data)
        stream.flush()
    else:
        sys.stdout.write(data.decode("utf-8"))


def _config(args: argparse.Namespace) -> AnalysisConfig:
    try:
        return AnalysisConfig(
            lambda1=args.lambda1,
            upr_threshold=args.threshold,
            provider=args.provider,
            remote_url=args.remote_url,
            token_scale=args.token_scale,
            workers=args.workers,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def _provider(config: AnalysisConfig):
    try:
        return build_provider(config)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def cmd_validate(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for path in args.paths:
        try:
            data = _read_bytes(path)
        except CliError as exc:
            _error(str(exc))
            status = EXIT_IO
            continue
        try:
            run = parse_run(data)
        except TraceFormatError as exc:
            print(f"{path}: INVALID")
            for line in getattr(exc, "violations", None) or [exc]:
                print(f"  {line}")
            status = max(status, EXIT_FAILED)
            continue
        print(f"{path}: OK ({len(run.traces)} traces)")
    return status


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _config(args)
    runs = [_load_run(path) for path in args.paths]
    provider = _provider(config)
    rows: list[MetricRow] = []
    try:
        for run in runs:
            rows.append(MetricRow.from_report(RunMeta.of(run), analyze_run(run, config, provider)))
    except ProviderError as exc:
        if args.keep_partial and rows:
            suffix = "csv" if args.format == "csv" else "md"
            partial = f"{args.output}.partial" if args.output else f"partial-results.{suffix}"
            _emit(render(aggregate(rows), args.format, raw=args.raw), partial)
            _error(f"wrote {len(rows)} completed run(s) to {partial}")
        raise CliError(f"embedding provider failed: {exc}", EXIT_IO) from None
    finally:
        close = getattr(provider, "close", None)
        if close:
            close()
    try:
        table = aggregate(rows)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_FAILED) from None
    _emit(render(table, args.format, raw=args.raw), args.output)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config(args)
    try:
        grid = parse_grid(args.grid) if args.grid else DEFAULT_GRID
    except ValueError as exc:
        raise CliError(f"bad --grid: {exc}", EXIT_IO) from None
    run = _load_run(args.path)
    provider = _provider(config)
    try:
        table = lambda_sweep(run, grid, config, provider)
    except ProviderError as exc:
        raise CliError(f"embedding provider failed: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError(f"bad --grid: {exc}", EXIT_IO) from None
    _emit(render(table, args.format or "csv"), args.output)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        spec = GenSpec(
            num_agents=args.agents,
            num_problems=args.problems,
            edge_density=args.density,
            correctness_rate=args.correctness,
            vocabulary_size=args.vocabulary,
            seed=args.seed,
            answer_kind=AnswerKind(args.answer_kind),
            method=args.method,
            model=args.model,
            benchmark=args.benchmark,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    _emit(serialize_run(generate_synthetic_run(spec)), args.output)
    return EXIT_OK


def _load_metrics(path: str, config: AnalysisConfig) -> MetricRow:
    """A metrics row from either a trace file or a one-row comparison CSV."""
    data = _read_bytes(path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise CliError(f"{path}: not UTF-8", EXIT_FAILED) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict):
        run = _load_run(path)
        provider = _provider(config)
        try:
            return MetricRow.from_report(RunMeta.of(run), analyze_run(run, config, provider))
        except ProviderError as exc:
            raise CliError(f"embedding provider failed: {exc}", EXIT_IO) from None
    try:
        rows = read_comparison_csv(text)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_FAILED) from None
    if len(rows) != 1:
        raise CliError(f"{path}: expected exactly one metrics row, found {len(rows)}", EXIT_FAILED)
    return rows[0]


def cmd_compare(args: argparse.Namespace) -> int:
    config = _config(args)
    baseline = _load_metrics(args.baseline, config)
    candidate = _load_metrics(args.candidate, config)
    _emit(render(compare(baseline, candidate), args.format), args.output)
    return EXIT_OK


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--lambda1", type=float, default=0.5, help="weight of the TF-IDF channel (default 0.5)")
    shared.add_argument("--threshold", type=float, default=0.5, help="path necessity threshold (default 0.5)")
    shared.add_argument("--provider", choices=("local", "remote"), default="local")
    shared.add_argument("--remote-url", default=None, help="embeddings endpoint (or $GEMMAS_EMBED_URL)")
    shared.add_argument("--workers", type=int, default=4)
    shared.add_argument("--token-scale", type=float, default=1000.0)
    shared.add_argument("--output", "-o", default=None, help="write here instead of stdout")
    return shared


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemmas", description="Process-level metrics for multi-agent traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    shared = _shared_flags()

    p = sub.add_parser("validate", help="check trace files against the schema and DAG invariants")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", parents=[shared], help="compute the metrics table for one or more runs")
    p.add_argument("paths", nargs="+")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--raw", action="store_true", help="unrounded values in CSV output")
    p.add_argument("--keep-partial", action="store_true", help="on provider failure, save finished runs")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[shared], help="mean IDS across lambda1 values")
    p.add_argument("path")
    p.add_argument("--grid", default=None, help="START:END:STEP or comma list (default 0:1:0.1)")
    p.add_argument("--format", choices=("markdown", "csv"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate", help="write a synthetic trace file")
    p.add_argument("--agents", type=int, default=5)
    p.add_argument("--problems", type=int, default=10)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--correctness", type=float, default=0.5)
    p.add_argument("--vocabulary", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--answer-kind", choices=("numeric", "choice"), default="numeric")
    p.add_argument("--method", default="synthetic")
    p.add_argument("--model", default="synthetic")
    p.add_argument("--benchmark", default="synthetic")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compare", parents=[shared], help="relative change from a baseline to a candidate")
    p.add_argument("baseline", help="trace file or one-row comparison CSV")
    p.add_argument("candidate", help="trace file or one-row comparison CSV")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("GEMMAS_LOG_LEVEL", "WARNING"), format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        _error(str(exc))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
