from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import strategies as st

from gemmas.trace_model import AgentNode, Answer, AnswerKind, ProblemTrace, RunRecord, TraceGraph

FIXTURES = Path(__file__).parent / "fixtures"


def make_graph(n, spatial_edges=(), temporal_edges=(), responses=None, final=None):
    spatial = [[0] * n for _ in range(n)]
    temporal = [[0] * n for _ in range(n)]
    for i, j in spatial_edges:
        spatial[i][j] = 1
    for i, j in temporal_edges:
        temporal[i][j] = 1
    responses = responses or [f"agent {k} says nothing" for k in range(n)]
    nodes = [
        AgentNode(k, f"agent{k}", f"prompt {k}", responses[k], 10 * (k + 1), k + 1, is_final=(k == final))
        for k in range(n)
    ]
    return TraceGraph(tuple(nodes), spatial, temporal)


def make_run(graphs, golds, kind=AnswerKind.NUMERIC, method="m", model="x", benchmark="b"):
    traces = [
        ProblemTrace(f"p{k}", f"question {k}", Answer.parse(str(gold), kind), graph)
        for k, (graph, gold) in enumerate(zip(graphs, golds))
    ]
    return RunRecord(method, model, benchmark, kind, tuple(traces))


@st.composite
def dags(draw, min_nodes=1, max_nodes=7):
    """Binary spatial/temporal matrices whose union is acyclic, over a random node order."""
    n = draw(st.integers(min_nodes, max_nodes))
    order = draw(st.permutations(range(n)))
    spatial = [[0] * n for _ in range(n)]
    temporal = [[0] * n for _ in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            i, j = order[a], order[b]
            spatial[i][j] = int(draw(st.booleans()))
            temporal[i][j] = int(draw(st.booleans()))
    return spatial, temporal


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance.append((name, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{outcome}  {name}")
