"""Comparison tables, run-to-run deltas and the lambda sensitivity sweep."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .metrics import (
    AnalysisConfig,
    MetricsReport,
    build_provider,
    information_diversity_score,
    map_traces,
)
from .text_features import EmbeddingProvider, LambdaWeights, combine_similarity, similarity_channels
from .trace_model import RunRecord

COLUMNS = ("accuracy", "ptok", "ctok", "ids", "upr")
HIGHER_IS_BETTER = {"accuracy": True, "ptok": False, "ctok": False, "ids": True, "upr": False}
DECIMALS = {"accuracy": 4, "ptok": 2, "ctok": 2, "ids": 2, "upr": 2}
HEADERS = {"accuracy": "Accuracy ↑", "ptok": "Ptok ↓", "ctok": "Ctok ↓", "ids": "IDS ↑", "upr": "UPR ↓"}

COMPARISON_CSV_FIELDS = (
    "benchmark", "model", "method", *COLUMNS, *(f"best_{c}" for c in COLUMNS),
)


class ZeroBaselineError(ZeroDivisionError):
    pass


class DuplicateRowError(ValueError):
    pass


def relative_delta(a: float, b: float) -> float:
    """Percentage change from baseline ``a`` to candidate ``b``."""
    if a == 0:
        raise ZeroBaselineError("relative change from a zero baseline is undefined")
    return (b - a) / a * 100.0


@dataclass(frozen=True)
class RunMeta:
    benchmark: str
    model: str
    method: str

    @classmethod
    def of(cls, run: RunRecord) -> RunMeta:
        return cls(benchmark=run.benchmark, model=run.model, method=run.method)


@dataclass(frozen=True)
class MetricRow:
    meta: RunMeta
    accuracy: float
    ptok: float
    ctok: float
    ids: float | None
    upr: float | None

    @classmethod
    def from_report(cls, meta: RunMeta, report: MetricsReport) -> MetricRow:
        return cls(meta, report.accuracy, report.ptok, report.ctok, report.ids, report.upr)

    def value(self, column: str) -> float | None:
        return getattr(self, column)

    def rounded(self, column: str) -> float | None:
        value = self.value(column)
        return None if value is None else round(value, DECIMALS[column])


@dataclass
class ComparisonTable:
    rows: list[MetricRow]
    # (row index, column) pairs holding the best value of their group
    best: set[tuple[int, str]] = field(default_factory=set)

    def is_best(self, index: int, column: str) -> bool:
        return (index, column) in self.best

    def groups(self) -> dict[tuple[str, str], list[int]]:
        out: dict[tuple[str, str], list[int]] = {}
        for index, row in enumerate(self.rows):
            out.setdefault((row.meta.benchmark, row.meta.model), []).append(index)
        return out


def aggregate(reports: Iterable[tuple[RunMeta, MetricsReport] | MetricRow]) -> ComparisonTable:
    """One row per run, best value per column marked within each (benchmark, model).

    Best is decided on the displayed (rounded) values; ties go to the row
    that came first.
    """
    rows = [r if isinstance(r, MetricRow) else MetricRow.from_report(*r) for r in reports]
    if not rows:
        raise ValueError("nothing to aggregate")
    seen = set()
    for row in rows:
        key = (row.meta.benchmark, row.meta.model, row.meta.method)
        if key in seen:
            raise DuplicateRowError(f"duplicate row for {key}")
        seen.add(key)

    table = ComparisonTable(rows)
    for members in table.groups().values():
        for column in COLUMNS:
            best_index = None
            best_value = None
            for index in members:
                value = rows[index].rounded(column)
                if value is None:
                    continue
                if best_value is None or (
                    value > best_value if HIGHER_IS_BETTER[column] else value < best_value
                ):
                    best_index, best_value = index, value
            if best_index is not None:
                table.best.add((best_index, column))
    return table


@dataclass(frozen=True)
class SweepTable:
    grid: tuple[float, ...]
    # method -> mean IDS per grid point (None where no trace had a defined IDS)
    mean_ids: dict[str, tuple[float | None, ...]]

    def __post_init__(self) -> None:
        if not self.grid:
            raise ValueError("sweep grid is empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("sweep grid must be strictly ascending")
        if any(not 0.0 <= x <= 1.0 for x in self.grid):
            raise ValueError("sweep grid values must lie in [0, 1]")


DEFAULT_GRID = tuple(round(0.1 * k, 10) for k in range(11))


def lambda_sweep(
    run: RunRecord,
    grid: Sequence[float] = DEFAULT_GRID,
    config: AnalysisConfig | None = None,
    provider: EmbeddingProvider | None = None,
) -> SweepTable:
    """Mean IDS of one run at every lambda1 in ``grid``.

    Each trace is embedded once; only the channel blend changes per point.
    """
    config = config or AnalysisConfig()
    provider = provider or build_provider(config)
    grid = tuple(float(x) for x in grid)
    SweepTable(grid, {})  # validate before doing any work

    def channels(trace):
        return trace.graph, similarity_channels(trace.graph.responses, provider)

    prepared = map_traces(channels, run.traces, config.workers)
    means = []
    for lambda1 in grid:
        weights = LambdaWeights.from_lambda1(lambda1)
        values = []
        for graph, (ss_syn, ss_sem) in prepared:
            ids = information_diversity_score(graph, combine_similarity(ss_syn, ss_sem, weights))
            if ids is not None:
                values.append(ids)
        means.append(math.fsum(values) / len(values) if values else None)
    return SweepTable(grid, {run.method: tuple(means)})


def parse_grid(spec: str) -> tuple[float, ...]:
    """``START:END:STEP`` (inclusive of END) or a comma list like ``0,0.5,1``."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be START:END:STEP, got {spec!r}")
        start, end, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        if end < start:
            raise ValueError("grid end must not be below its start")
        count = math.floor((end - start) / step + 1e-9) + 1
        return tuple(round(start + k * step, 10) for k in range(count))
    return tuple(float(p) for p in spec.split(","))


@dataclass(frozen=True)
class DeltaRow:
    metric: str
    baseline: float | None
    candidate: float | None
    delta_pct: float | None
    ratio: float | None


def compare(baseline: MetricRow, candidate: MetricRow) -> list[DeltaRow]:
    """Relative change per metric and the baseline/candidate ratio."""
    out = []
    for column in COLUMNS:
        a, b = baseline.value(column), candidate.value(column)
        delta = ratio = None
        if a is not None and b is not None:
            if a != 0:
                delta = relative_delta(a, b)
            if b != 0:
                ratio = a / b
        out.append(DeltaRow(column, a, b, delta, ratio))
    return out


def _fmt(value: float | None, column: str, raw: bool = False) -> str:
    if value is None:
        return ""
    if raw:
        return repr(float(value))
    return f"{value:.{DECIMALS[column]}f}"


def _csv_bytes(header: Sequence[str], rows: Iterable[Sequence[str]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _render_comparison(table: ComparisonTable, fmt: str, raw: bool) -> bytes:
    if fmt == "csv":
        rows = []
        for index, row in enumerate(table.rows):
            rows.append(
                [row.meta.benchmark, row.meta.model, row.meta.method]
                + [_fmt(row.value(c), c, raw) for c in COLUMNS]
                + [str(table.is_best(index, c)).lower() for c in COLUMNS]
            )
        return _csv_bytes(COMPARISON_CSV_FIELDS, rows)

    lines = []
    for (benchmark, model), members in table.groups().items():
        if lines:
            lines.append("")
        lines.append(f"### {benchmark} ({model})")
        lines.append("")
        lines.append("| Method | " + " | ".join(HEADERS[c] for c in COLUMNS) + " |")
        lines.append("|---|" + "---:|" * len(COLUMNS))
        for index in members:
            row = table.rows[index]
            cells = []
            for column in COLUMNS:
                text = _fmt(row.value(column), column) or "n/a"
                if table.is_best(index, column):
                    text = f"**{text}**"
                cells.append(text)
            lines.append(f"| {row.meta.method} | " + " | ".join(cells) + " |")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_sweep(table: SweepTable, fmt: str) -> bytes:
    methods = list(table.mean_ids)
    if fmt == "csv":
        if len(methods) == 1:
            header = ["lambda1", "mean_ids"]
        else:
            header = ["lambda1", *(f"mean_ids[{m}]" for m in methods)]
        rows = [
            [repr(x)] + ["" if table.mean_ids[m][k] is None else repr(table.mean_ids[m][k]) for m in methods]
            for k, x in enumerate(table.grid)
        ]
        return _csv_bytes(header, rows)
    lines = ["| λ1 | " + " | ".join(methods) + " |", "|---:|" + "---:|" * len(methods)]
    for k, x in enumerate(table.grid):
        cells = [_fmt(table.mean_ids[m][k], "ids") or "n/a" for m in methods]
        lines.append(f"| {x:.2f} | " + " | ".join(cells) + " |")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_deltas(rows: list[DeltaRow], fmt: str) -> bytes:
    if fmt == "csv":
        return _csv_bytes(
            ["metric", "baseline", "candidate", "delta_pct", "ratio"],
            [
                [
                    r.metric,
                    "" if r.baseline is None else repr(r.baseline),
                    "" if r.candidate is None else repr(r.candidate),
                    "n/a" if r.delta_pct is None else f"{r.delta_pct:.4f}",
                    "n/a" if r.ratio is None else f"{r.ratio:.4f}",
                ]
                for r in rows
            ],
        )
    lines = [
        "| Metric | Baseline | Candidate | Change | Baseline/Candidate |",
        "|---|---:|---:|---:|---:|",
    ]
    for r in rows:
        delta = "n/a" if r.delta_pct is None else f"{r.delta_pct:+.1f}%"
        ratio = "n/a" if r.ratio is None else f"{r.ratio:.2f}x"
        lines.append(
            f"| {HEADERS[r.metric]} | {_fmt(r.baseline, r.metric) or 'n/a'} | "
            f"{_fmt(r.candidate, r.metric) or 'n/a'} | {delta} | {ratio} |"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def render(table, fmt: str = "markdown", *, raw: bool = False) -> bytes:
    """Render a comparison table, sweep table or delta list as markdown or CSV."""
    if fmt not in ("markdown", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(table, ComparisonTable):
        return _render_comparison(table, fmt, raw)
    if isinstance(table, SweepTable):
        return _render_sweep(table, fmt)
    if isinstance(table, list) and all(isinstance(r, DeltaRow) for r in table):
        return _render_deltas(table, fmt)
    raise TypeError(f"cannot render {type(table).__name__}")


def read_comparison_csv(text: str) -> list[MetricRow]:
    """Load rows written by the CSV comparison renderer."""
    reader = csv.DictReader(io.StringIO(text))
    missing = [f for f in ("benchmark", "model", "method", *COLUMNS) if f not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"comparison CSV lacks columns: {', '.join(missing)}")

    def num(cell: str) -> float | None:
        return float(cell) if cell.strip() else None

    rows = []
    for record in reader:
        meta = RunMeta(record["benchmark"], record["model"], record["method"])
        acc, ptok, ctok = (num(record[c]) for c in ("accuracy", "ptok", "ctok"))
        if acc is None or ptok is None or ctok is None:
            raise ValueError(f"row {meta} is missing accuracy or token columns")
        rows.append(MetricRow(meta, acc, ptok, ctok, num(record["ids"]), num(record["upr"])))
    return rows
