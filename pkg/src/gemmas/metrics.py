"""Process-level metrics over recorded traces.

* information diversity: connection-weighted mean of (1 - similarity) over
  agent pairs;
* unnecessary path ratio: share of spatial paths whose members mostly fail
  to reach the gold answer;
* the outcome baselines, accuracy and token usage.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .text_features import (
    EmbeddingProvider,
    HashingEmbeddingProvider,
    LambdaWeights,
    RemoteEmbeddingProvider,
    combine_similarity,
    similarity_channels,
)
from .trace_model import (
    Answer,
    AnswerKind,
    CycleError,
    ProblemTrace,
    RunRecord,
    TraceGraph,
    connection_weight,
    final_node,
)

logger = logging.getLogger(__name__)

Path = tuple[int, ...]


def information_diversity_score(graph: TraceGraph, ss_total: np.ndarray) -> float | None:
    """Weighted diversity over connected pairs; None when no pair is connected."""
    n = graph.size
    ss_total = np.asarray(ss_total, dtype=float)
    if ss_total.shape != (n, n):
        raise ValueError(f"similarity matrix is {ss_total.shape}, graph has {n} nodes")
    weighted = 0.0
    total = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            w = connection_weight(graph, i, j)
            if w > 0:
                weighted += w * (1.0 - float(ss_total[i, j]))
                total += w
    if total == 0:
        return None
    return weighted / total


def iter_paths(graph: TraceGraph) -> Iterator[Path]:
    """Depth-first over the spatial graph, roots and neighbours in id order.

    Every simple path with at least one edge is yielded once, as soon as it
    is reached, so prefixes come before their extensions.
    """
    successors = [graph.spatial_successors(i) for i in range(graph.size)]
    for root in range(graph.size):
        path = [root]
        on_path = {root}
        stack = [iter(successors[root])]
        while stack:
            for nxt in stack[-1]:
                if nxt in on_path:
                    raise CycleError(path[path.index(nxt):] + [nxt])
                path.append(nxt)
                on_path.add(nxt)
                yield tuple(path)
                stack.append(iter(successors[nxt]))
                break
            else:
                stack.pop()
                on_path.discard(path.pop())


def enumerate_paths(graph: TraceGraph) -> list[Path]:
    return list(iter_paths(graph))


_NUMERAL = re.compile(
    r"(?:(?<![\w)\]])(?P<sign>[-+]))?"
    r"(?P<body>\d{1,3}(?:,\d{3})+(?!\d)(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)"
)
_CHOICE = re.compile(r"(?<![A-Za-z0-9])([A-E])(?![A-Za-z0-9])")


def extract_numeric(text: str) -> Answer | None:
    """The last decimal numeral in the text, commas dropped from digit groups."""
    last = None
    for last in _NUMERAL.finditer(text):
        pass
    if last is None:
        return None
    literal = (last.group("sign") or "") + last.group("body").replace(",", "")
    return Answer.numeric(Decimal(literal))


def extract_choice(text: str) -> Answer | None:
    """The last standalone capital A-E, bare or parenthesised like "(B)"."""
    found = _CHOICE.findall(text)
    if not found:
        return None
    return Answer.choice(found[-1])


Extractor = Callable[[str], "Answer | None"]

EXTRACTORS: dict[AnswerKind, Extractor] = {
    AnswerKind.NUMERIC: extract_numeric,
    AnswerKind.CHOICE: extract_choice,
}


def register_extractor(kind: AnswerKind | str, extractor: Extractor) -> None:
    EXTRACTORS[AnswerKind(kind)] = extractor


def extract_answer(text: str, kind: AnswerKind | str) -> Answer | None:
    return EXTRACTORS[AnswerKind(kind)](text)


def node_correctness(graph: TraceGraph, gold: Answer, kind: AnswerKind | str) -> list[bool]:
    return [gold.matches(extract_answer(node.response, kind)) for node in graph.nodes]


@dataclass(frozen=True)
class PathAssessment:
    path: Path
    correct_count: int
    total_count: int
    score: Fraction
    necessary: bool


def _assess(path: Path, correct: Sequence[bool], threshold: Fraction) -> PathAssessment:
    c = sum(1 for v in path if correct[v])
    t = len(path)
    score = Fraction(c, t) if t > 0 else Fraction(0)
    return PathAssessment(path, c, t, score, score >= threshold)


def path_contribution(
    path: Path,
    graph: TraceGraph,
    gold: Answer,
    kind: AnswerKind | str,
    threshold: float = 0.5,
) -> PathAssessment:
    correct = {v: gold.matches(extract_answer(graph.nodes[v].response, kind)) for v in path}
    return _assess(tuple(path), correct, Fraction(threshold))


def unnecessary_path_ratio(
    graph: TraceGraph,
    gold: Answer,
    kind: AnswerKind | str,
    threshold: float = 0.5,
) -> Fraction | None:
    """Exact ratio of unnecessary spatial paths; None when there are no paths."""
    correct = node_correctness(graph, gold, kind)
    limit = Fraction(threshold)
    total = 0
    necessary = 0
    for path in iter_paths(graph):
        total += 1
        if _assess(path, correct, limit).necessary:
            necessary += 1
    if total == 0:
        return None
    return 1 - Fraction(necessary, total)


def trace_is_correct(trace: ProblemTrace, kind: AnswerKind | str) -> bool:
    final = trace.graph.nodes[final_node(trace.graph)]
    return trace.gold_answer.matches(extract_answer(final.response, kind))


def accuracy(run: RunRecord) -> float:
    correct = sum(1 for trace in run.traces if trace_is_correct(trace, run.answer_kind))
    return correct / len(run.traces)


def token_usage(run: RunRecord, scale: float = 1000.0) -> tuple[float, float]:
    """Mean prompt and completion tokens per problem, divided by ``scale``."""
    prompt = sum(node.prompt_tokens for t in run.traces for node in t.graph.nodes)
    completion = sum(node.completion_tokens for t in run.traces for node in t.graph.nodes)
    denom = scale * len(run.traces)
    return prompt / denom, completion / denom


@dataclass(frozen=True)
class AnalysisConfig:
    lambda1: float = 0.5
    upr_threshold: float = 0.5
    provider: str = "local"
    remote_url: str | None = None
    remote_model: str = "default"
    remote_timeout: float = 30.0
    remote_max_in_flight: int = 4
    token_scale: float = 1000.0
    workers: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda1 <= 1.0:
            raise ValueError("lambda1 must lie in [0, 1]")
        if not 0.0 <= self.upr_threshold <= 1.0:
            raise ValueError("upr_threshold must lie in [0, 1]")
        if self.provider not in ("local", "remote"):
            raise ValueError(f"unknown provider {self.provider!r}")
        if self.token_scale <= 0:
            raise ValueError("token_scale must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    @property
    def weights(self) -> LambdaWeights:
        return LambdaWeights.from_lambda1(self.lambda1)


def build_provider(config: AnalysisConfig) -> EmbeddingProvider:
    if config.provider == "local":
        return HashingEmbeddingProvider()
    return RemoteEmbeddingProvider(
        config.remote_url,
        model=config.remote_model,
        timeout=config.remote_timeout,
        max_in_flight=config.remote_max_in_flight,
    )


@dataclass(frozen=True)
class TraceMetrics:
    problem_id: str
    correct: bool
    ids: float | None
    upr: Fraction | None
    num_paths: int

    @property
    def ids_defined(self) -> bool:
        return self.ids is not None

    @property
    def upr_defined(self) -> bool:
        return self.upr is not None


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    ptok: float
    ctok: float
    ids: float | None
    upr: float | None
    per_problem: tuple[TraceMetrics, ...] = field(default_factory=tuple)


def _mean(values: Sequence[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def map_traces(fn, traces: Sequence[ProblemTrace], workers: int) -> list:
    """Apply ``fn`` to every trace, possibly in threads; results keep trace order."""
    if workers <= 1 or len(traces) <= 1:
        return [fn(t) for t in traces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, traces))


def analyze_run(
    run: RunRecord,
    config: AnalysisConfig | None = None,
    provider: EmbeddingProvider | None = None,
) -> MetricsReport:
    """Per-trace IDS and UPR plus the run-level baselines.

    Traces whose IDS or UPR is undefined are flagged in ``per_problem`` and
    left out of the means.
    """
    config = config or AnalysisConfig()
    provider = provider or build_provider(config)
    weights = config.weights
    kind = run.answer_kind

    def one(trace: ProblemTrace) -> TraceMetrics:
        graph = trace.graph
        ss_syn, ss_sem = similarity_channels(graph.responses, provider)
        ids = information_diversity_score(graph, combine_similarity(ss_syn, ss_sem, weights))
        upr = unnecessary_path_ratio(graph, trace.gold_answer, kind, config.upr_threshold)
        return TraceMetrics(
            problem_id=trace.problem_id,
            correct=trace_is_correct(trace, kind),
            ids=ids,
            upr=upr,
            num_paths=sum(1 for _ in iter_paths(graph)),
        )

    per_problem = map_traces(one, run.traces, config.workers)
    ids_values = [m.ids for m in per_problem if m.ids is not None]
    upr_values = [m.upr for m in per_problem if m.upr is not None]
    ptok, ctok = token_usage(run, config.token_scale)
    return MetricsReport(
        accuracy=sum(m.correct for m in per_problem) / len(per_problem),
        ptok=ptok,
        ctok=ctok,
        ids=_mean(ids_values),
        upr=float(sum(upr_values, Fraction(0)) / len(upr_values)) if upr_values else None,
        per_problem=tuple(per_problem),
    )
