"""Data model for recorded multi-agent traces.

A trace is a DAG of agent turns. Each node holds one agent's prompt and
response; two binary adjacency matrices record the communication links
(``spatial``) and the time-ordered dependencies (``temporal``) between them.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Sequence

Matrix = tuple[tuple[int, ...], ...]


class CycleError(ValueError):
    """Raised when an operation that needs a DAG meets a cycle."""

    def __init__(self, cycle: Sequence[int]):
        self.cycle = tuple(cycle)
        super().__init__("cycle in union graph: " + " -> ".join(map(str, self.cycle)))


class AnswerKind(str, enum.Enum):
    NUMERIC = "numeric"
    CHOICE = "choice"


CHOICE_LABELS = "ABCDE"
NUMERIC_REL_TOL = Decimal("1e-9")


@dataclass(frozen=True)
class Answer:
    """A task answer, either a decimal number or a multiple-choice letter."""

    kind: AnswerKind
    numeric_value: Decimal | None = None
    choice_label: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AnswerKind(self.kind))
        if self.kind is AnswerKind.NUMERIC:
            if self.numeric_value is None or self.choice_label is not None:
                raise ValueError("numeric answer needs numeric_value only")
            if not self.numeric_value.is_finite():
                raise ValueError(f"numeric answer must be finite, got {self.numeric_value}")
        else:
            if self.choice_label is None or self.numeric_value is not None:
                raise ValueError("choice answer needs choice_label only")
            if len(self.choice_label) != 1 or self.choice_label not in CHOICE_LABELS:
                raise ValueError(f"choice label must be one of {CHOICE_LABELS}, got {self.choice_label!r}")

    @classmethod
    def numeric(cls, value: Decimal | int | str) -> Answer:
        return cls(AnswerKind.NUMERIC, numeric_value=Decimal(value))

    @classmethod
    def choice(cls, label: str) -> Answer:
        return cls(AnswerKind.CHOICE, choice_label=label)

    @classmethod
    def parse(cls, text: str, kind: AnswerKind | str) -> Answer:
        """Parse a gold-answer literal: a decimal number or a single letter A-E."""
        kind = AnswerKind(kind)
        stripped = text.strip()
        if not stripped:
            raise ValueError("answer literal is empty")
        if kind is AnswerKind.CHOICE:
            return cls.choice(stripped)
        try:
            value = Decimal(stripped.replace(",", ""))
        except InvalidOperation:
            raise ValueError(f"not a decimal literal: {text!r}") from None
        return cls(AnswerKind.NUMERIC, numeric_value=value)

    def to_text(self) -> str:
        if self.kind is AnswerKind.NUMERIC:
            return str(self.numeric_value)
        return str(self.choice_label)

    def matches(self, other: Answer | None) -> bool:
        """Answer equality used for correctness: numbers within 1e-9 relative tolerance."""
        if other is None or other.kind is not self.kind:
            return False
        if self.kind is AnswerKind.CHOICE:
            return self.choice_label == other.choice_label
        a, b = self.numeric_value, other.numeric_value
        assert a is not None and b is not None
        return abs(a - b) <= NUMERIC_REL_TOL * max(abs(a), abs(b))


@dataclass(frozen=True)
class AgentNode:
    node_id: int
    role: str
    prompt: str
    response: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    is_final: bool = False


def _freeze_matrix(rows: Sequence[Sequence[int]]) -> Matrix:
    return tuple(tuple(row) for row in rows)


@dataclass(frozen=True)
class TraceGraph:
    """Agent nodes plus the spatial and temporal adjacency matrices.

    Construction does not enforce the structural invariants; use
    :func:`validate_graph` to check them.
    """

    nodes: tuple[AgentNode, ...]
    spatial: Matrix
    temporal: Matrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "spatial", _freeze_matrix(self.spatial))
        object.__setattr__(self, "temporal", _freeze_matrix(self.temporal))

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def responses(self) -> list[str]:
        return [node.response for node in self.nodes]

    def spatial_successors(self, i: int) -> list[int]:
        return [j for j, bit in enumerate(self.spatial[i]) if bit]

    def union_successors(self, i: int) -> list[int]:
        return [j for j in range(self.size) if self.spatial[i][j] or self.temporal[i][j]]

    def has_spatial_edges(self) -> bool:
        return any(any(row) for row in self.spatial)


@dataclass(frozen=True)
class ProblemTrace:
    problem_id: str
    question: str
    gold_answer: Answer
    graph: TraceGraph


@dataclass(frozen=True)
class RunRecord:
    """One benchmark run: a method/model pair evaluated over many problems."""

    method: str
    model: str
    benchmark: str
    answer_kind: AnswerKind
    traces: tuple[ProblemTrace, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "answer_kind", AnswerKind(self.answer_kind))
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise ValueError("a run needs at least one trace")
        for trace in self.traces:
            if trace.gold_answer.kind is not self.answer_kind:
                raise ValueError(
                    f"trace {trace.problem_id!r} has a {trace.gold_answer.kind.value} gold answer "
                    f"in a {self.answer_kind.value} run"
                )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    location: tuple[int, ...] = ()

    def __str__(self) -> str:
        return self.message


def _check_matrix(name: str, matrix: Matrix, n: int) -> list[Violation]:
    if len(matrix) != n or any(len(row) != n for row in matrix):
        shape = f"{len(matrix)}x{'/'.join(sorted({str(len(r)) for r in matrix})) or 0}"
        return [Violation("shape", f"{name} matrix is {shape}, expected {n}x{n}")]
    found = []
    for i, row in enumerate(matrix):
        for j, value in enumerate(row):
            if isinstance(value, bool) or value not in (0, 1):
                found.append(Violation("non_binary", f"non-binary entry at ({i},{j}) in {name}: {value!r}", (i, j)))
            elif i == j and value == 1:
                found.append(Violation("self_loop", f"self-loop at ({i},{i}) in {name}", (i, i)))
    return found


def find_cycle(graph: TraceGraph) -> list[int] | None:
    """Return one cycle of the union graph as a closed node list, or None."""
    n = graph.size
    white, grey, black = 0, 1, 2
    colour = [white] * n
    parent = [-1] * n
    for root in range(n):
        if colour[root] != white:
            continue
        stack = [(root, iter(graph.union_successors(root)))]
        colour[root] = grey
        while stack:
            node, successors = stack[-1]
            for nxt in successors:
                if colour[nxt] == white:
                    colour[nxt] = grey
                    parent[nxt] = node
                    stack.append((nxt, iter(graph.union_successors(nxt))))
                    break
                if colour[nxt] == grey:
                    cycle = [node]
                    while cycle[-1] != nxt:
                        cycle.append(parent[cycle[-1]])
                    cycle.reverse()
                    return cycle + [nxt]
            else:
                colour[node] = black
                stack.pop()
    return None


def validate_graph(graph: TraceGraph) -> list[Violation]:
    """Check every structural invariant; an empty list means the graph is valid."""
    violations: list[Violation] = []
    n = graph.size
    finals = []
    for position, node in enumerate(graph.nodes):
        if node.node_id != position:
            violations.append(
                Violation("node_id", f"node at position {position} has id {node.node_id}", (position,))
            )
        for name in ("prompt_tokens", "completion_tokens"):
            if getattr(node, name) < 0:
                violations.append(
                    Violation("tokens", f"node {node.node_id} has negative {name}", (position,))
                )
        if node.is_final:
            finals.append(position)
    if len(finals) > 1:
        violations.append(Violation("final", f"more than one final node: {finals}", tuple(finals)))

    matrix_violations = _check_matrix("spatial", graph.spatial, n) + _check_matrix(
        "temporal", graph.temporal, n
    )
    violations.extend(matrix_violations)
    # the cycle search needs square 0/1 matrices
    if not any(v.code in ("shape", "non_binary") for v in matrix_violations):
        cycle = find_cycle(graph)
        if cycle is not None:
            violations.append(
                Violation("cycle", "cycle in union graph: " + " -> ".join(map(str, cycle)), tuple(cycle))
            )
    return violations


def topological_order(graph: TraceGraph) -> list[int]:
    """Kahn's algorithm over the union graph, smallest ready node first."""
    n = graph.size
    indegree = [0] * n
    for i in range(n):
        for j in graph.union_successors(i):
            indegree[j] += 1
    ready = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for nxt in graph.union_successors(node):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != n:
        raise CycleError(find_cycle(graph) or [])
    return order


def connection_weight(graph: TraceGraph, i: int, j: int) -> int:
    """Pair weight: max(S_ij, S_ji) + max(T_ij, T_ji), in {0, 1, 2}."""
    n = graph.size
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node pair ({i}, {j}) out of range for {n} nodes")
    if i == j:
        raise ValueError("connection weight is defined for distinct nodes only")
    s, t = graph.spatial, graph.temporal
    return max(s[i][j], s[j][i]) + max(t[i][j], t[j][i])


def final_node(graph: TraceGraph) -> int:
    """The aggregator node: the one flagged final, else the highest-id union sink."""
    for node in graph.nodes:
        if node.is_final:
            return node.node_id
    sinks = [i for i in range(graph.size) if not graph.union_successors(i)]
    if not sinks:
        raise CycleError(find_cycle(graph) or [])
    return max(sinks)
