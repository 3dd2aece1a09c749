"""Reading, writing and synthesising trace files.

A trace file is one UTF-8 JSON document per run::

    {"method": ..., "model": ..., "benchmark": ..., "answer_kind": "numeric" | "choice",
     "traces": [{"problem_id": ..., "question": ..., "gold_answer": ...,
                 "nodes": [{"id", "role", "prompt", "response",
                            "prompt_tokens", "completion_tokens", "is_final"}],
                 "spatial": [[0, 1], [0, 0]], "temporal": [[0, 0], [0, 0]]}]}
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from typing import Any

from .trace_model import (
    AgentNode,
    Answer,
    AnswerKind,
    ProblemTrace,
    RunRecord,
    TraceGraph,
    Violation,
    validate_graph,
)

logger = logging.getLogger(__name__)

RUN_FIELDS = ("method", "model", "benchmark", "answer_kind", "traces")
TRACE_FIELDS = ("problem_id", "question", "gold_answer", "nodes", "spatial", "temporal")
NODE_FIELDS = ("id", "role", "prompt", "response", "prompt_tokens", "completion_tokens", "is_final")

AGENT_ROLES = ("AnalyzeAgent", "CodeWritingAgent", "MathSolverAgent", "AdversarialAgent")
FINAL_ROLE = "FinalRefer"


class TraceFormatError(ValueError):
    """Base class for everything that can go wrong reading a trace file."""


class MalformedTraceError(TraceFormatError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"malformed JSON at line {line}, column {column}: {message}")


class SchemaError(TraceFormatError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GraphInvariantError(TraceFormatError):
    def __init__(self, problem_id: str, violations: list[Violation]):
        self.problem_id = problem_id
        self.violations = violations
        details = "; ".join(v.message for v in violations)
        super().__init__(f"trace {problem_id!r} violates graph invariants: {details}")


def _expect(obj: dict, key: str, kind: type, where: str) -> Any:
    name = f"{where}.{key}" if where else key
    if key not in obj:
        raise SchemaError(name, "missing required field")
    value = obj[key]
    # bool is an int subclass; never accept it where a count is expected
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise SchemaError(name, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _note_unknown(obj: dict, known: tuple[str, ...], where: str, warnings: list[str]) -> None:
    for key in obj:
        if key not in known:
            warnings.append(f"ignoring unknown field {key!r} at {where or 'top level'}")


def _parse_matrix(raw: Any, name: str, n: int) -> list[list[int]]:
    if not isinstance(raw, list) or len(raw) != n:
        got = len(raw) if isinstance(raw, list) else type(raw).__name__
        raise SchemaError(name, f"expected {n} rows, got {got}")
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != n:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise SchemaError(f"{name}[{i}]", f"expected {n} columns, got {got}")
        for j, value in enumerate(row):
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"{name}[{i}][{j}]", f"expected integer, got {type(value).__name__}")
    return raw


def _parse_node(raw: Any, where: str, warnings: list[str]) -> AgentNode:
    if not isinstance(raw, dict):
        raise SchemaError(where, "expected object")
    _note_unknown(raw, NODE_FIELDS, where, warnings)
    is_final = raw.get("is_final", False)
    if not isinstance(is_final, bool):
        raise SchemaError(f"{where}.is_final", f"expected bool, got {type(is_final).__name__}")
    return AgentNode(
        node_id=_expect(raw, "id", int, where),
        role=_expect(raw, "role", str, where),
        prompt=_expect(raw, "prompt", str, where),
        response=_expect(raw, "response", str, where),
        prompt_tokens=_expect(raw, "prompt_tokens", int, where),
        completion_tokens=_expect(raw, "completion_tokens", int, where),
        is_final=is_final,
    )


def _parse_trace(raw: Any, where: str, kind: AnswerKind, warnings: list[str]) -> ProblemTrace:
    if not isinstance(raw, dict):
        raise SchemaError(where, "expected object")
    _note_unknown(raw, TRACE_FIELDS, where, warnings)
    problem_id = _expect(raw, "problem_id", str, where)
    question = _expect(raw, "question", str, where)
    gold_text = _expect(raw, "gold_answer", str, where)
    try:
        gold = Answer.parse(gold_text, kind)
    except ValueError as exc:
        raise SchemaError(f"{where}.gold_answer", str(exc)) from None
    raw_nodes = _expect(raw, "nodes", list, where)
    nodes = [_parse_node(node, f"{where}.nodes[{k}]", warnings) for k, node in enumerate(raw_nodes)]
    n = len(nodes)
    graph = TraceGraph(
        nodes=tuple(nodes),
        spatial=_parse_matrix(raw.get("spatial"), f"{where}.spatial" if where else "spatial", n),
        temporal=_parse_matrix(raw.get("temporal"), f"{where}.temporal" if where else "temporal", n),
    )
    violations = validate_graph(graph)
    if violations:
        raise GraphInvariantError(problem_id, violations)
    return ProblemTrace(problem_id=problem_id, question=question, gold_answer=gold, graph=graph)


def parse_run(data: bytes | str, warnings: list[str] | None = None) -> RunRecord:
    """Parse one trace file.

    Unknown fields are skipped; a message for each is appended to
    ``warnings`` when given, and logged either way.
    """
    collected: list[str] = []
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = data[: exc.start]
            line = prefix.count(b"\n") + 1
            column = exc.start - (prefix.rfind(b"\n") + 1) + 1
            raise MalformedTraceError("invalid UTF-8", line, column) from None
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedTraceError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected a JSON object")

    _note_unknown(doc, RUN_FIELDS, "", collected)
    method = _expect(doc, "method", str, "")
    model = _expect(doc, "model", str, "")
    benchmark = _expect(doc, "benchmark", str, "")
    kind_text = _expect(doc, "answer_kind", str, "")
    try:
        kind = AnswerKind(kind_text)
    except ValueError:
        raise SchemaError("answer_kind", f"expected 'numeric' or 'choice', got {kind_text!r}") from None
    raw_traces = _expect(doc, "traces", list, "")
    if not raw_traces:
        raise SchemaError("traces", "a run needs at least one trace")
    traces = [_parse_trace(t, f"traces[{k}]", kind, collected) for k, t in enumerate(raw_traces)]

    for message in collected:
        logger.warning(message)
    if warnings is not None:
        warnings.extend(collected)
    return RunRecord(method=method, model=model, benchmark=benchmark, answer_kind=kind, traces=tuple(traces))


def run_to_dict(run: RunRecord) -> dict[str, Any]:
    return {
        "method": run.method,
        "model": run.model,
        "benchmark": run.benchmark,
        "answer_kind": run.answer_kind.value,
        "traces": [
            {
                "problem_id": trace.problem_id,
                "question": trace.question,
                "gold_answer": trace.gold_answer.to_text(),
                "nodes": [
                    {
                        "id": node.node_id,
                        "role": node.role,
                        "prompt": node.prompt,
                        "response": node.response,
                        "prompt_tokens": node.prompt_tokens,
                        "completion_tokens": node.completion_tokens,
                        "is_final": node.is_final,
                    }
                    for node in trace.graph.nodes
                ],
                "spatial": [list(row) for row in trace.graph.spatial],
                "temporal": [list(row) for row in trace.graph.temporal],
            }
            for trace in run.traces
        ],
    }


def serialize_run(run: RunRecord) -> bytes:
    return (json.dumps(run_to_dict(run), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


@dataclass(frozen=True)
class GenSpec:
    """Parameters for a synthetic run."""

    num_agents: int = 5
    num_problems: int = 10
    edge_density: float = 0.5
    correctness_rate: float = 0.5
    vocabulary_size: int = 50
    seed: int = 0
    answer_kind: AnswerKind = AnswerKind.NUMERIC
    method: str = "synthetic"
    model: str = "synthetic"
    benchmark: str = "synthetic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "answer_kind", AnswerKind(self.answer_kind))
        if self.num_agents < 2:
            raise ValueError("num_agents must be at least 2")
        if self.num_problems < 1:
            raise ValueError("num_problems must be at least 1")
        if not 0.0 <= self.edge_density <= 1.0:
            raise ValueError("edge_density must lie in [0, 1]")
        if not 0.0 <= self.correctness_rate <= 1.0:
            raise ValueError("correctness_rate must lie in [0, 1]")
        if self.vocabulary_size < 10:
            raise ValueError("vocabulary_size must be at least 10")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _vocabulary(size: int) -> list[str]:
    # lowercase letters only, so no word can be read as a numeral or a choice letter
    syllables = [c + v for c in _ONSETS for v in _VOWELS]
    words = []
    for index in range(size):
        parts = []
        k = index
        while True:
            parts.append(syllables[k % len(syllables)])
            k //= len(syllables)
            if k == 0:
                break
        words.append("".join(parts) + "n")
    return words


def _answer_sentence(answer: Answer) -> str:
    if answer.kind is AnswerKind.CHOICE:
        return f"The answer is ({answer.choice_label})."
    return f"The answer is {answer.numeric_value}."


def _wrong_answer(gold: Answer, rng: random.Random) -> Answer:
    if gold.kind is AnswerKind.CHOICE:
        return Answer.choice(rng.choice([c for c in "ABCDE" if c != gold.choice_label]))
    return Answer.numeric(gold.numeric_value + rng.randint(1, 50))


def generate_synthetic_run(spec: GenSpec) -> RunRecord:
    """Build a random but valid run; identical specs give identical runs.

    Edges only go from lower to higher node ids, so every graph is acyclic.
    The last node is the final aggregator.
    """
    rng = random.Random(spec.seed)
    vocab = _vocabulary(spec.vocabulary_size)
    n = spec.num_agents
    traces = []
    for p in range(spec.num_problems):
        if spec.answer_kind is AnswerKind.CHOICE:
            gold = Answer.choice(rng.choice("ABCDE"))
        else:
            gold = Answer.numeric(rng.randint(1, 999))
        question = f"Synthetic problem {p}: " + " ".join(rng.choice(vocab) for _ in range(8)) + "?"
        nodes = []
        for k in range(n):
            final = k == n - 1
            role = FINAL_ROLE if final else AGENT_ROLES[k % len(AGENT_ROLES)]
            answer = gold if rng.random() < spec.correctness_rate else _wrong_answer(gold, rng)
            words = " ".join(rng.choice(vocab) for _ in range(rng.randint(4, 16)))
            nodes.append(
                AgentNode(
                    node_id=k,
                    role=role,
                    prompt=f"[{role}] {question}",
                    response=f"{words}. {_answer_sentence(answer)}",
                    prompt_tokens=rng.randint(50, 2000),
                    completion_tokens=rng.randint(10, 600),
                    is_final=final,
                )
            )
        spatial = [[0] * n for _ in range(n)]
        temporal = [[0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                spatial[i][j] = int(rng.random() < spec.edge_density)
                temporal[i][j] = int(rng.random() < spec.edge_density)
        traces.append(
            ProblemTrace(
                problem_id=f"synthetic-{p:04d}",
                question=question,
                gold_answer=gold,
                graph=TraceGraph(nodes=tuple(nodes), spatial=spatial, temporal=temporal),
            )
        )
    return RunRecord(
        method=spec.method,
        model=spec.model,
        benchmark=spec.benchmark,
        answer_kind=spec.answer_kind,
        traces=tuple(traces),
    )
