from decimal import Decimal

import pytest
from hypothesis import given, settings

from conftest import dags, make_graph
from gemmas.trace_model import (
    AgentNode,
    Answer,
    AnswerKind,
    CycleError,
    RunRecord,
    TraceGraph,
    connection_weight,
    final_node,
    topological_order,
    validate_graph,
)


def codes(graph):
    return [v.code for v in validate_graph(graph)]


def test_single_edge_is_valid():
    assert validate_graph(make_graph(2, [(0, 1)])) == []


def test_mutual_spatial_edges_form_a_cycle():
    violations = validate_graph(make_graph(2, [(0, 1), (1, 0)]))
    assert [v.code for v in violations] == ["cycle"]
    assert "cycle in union graph" in violations[0].message
    assert set(violations[0].location) == {0, 1}


def test_cycle_through_both_matrices():
    # neither matrix alone is cyclic, the union is
    graph = make_graph(3, spatial_edges=[(0, 1), (1, 2)], temporal_edges=[(2, 0)])
    assert codes(graph) == ["cycle"]


def test_non_binary_entry_reported_with_coordinates():
    graph = make_graph(3)
    spatial = [list(r) for r in graph.spatial]
    spatial[0][2] = 2
    bad = TraceGraph(graph.nodes, spatial, graph.temporal)
    (violation,) = validate_graph(bad)
    assert violation.code == "non_binary"
    assert violation.location == (0, 2)
    assert "non-binary entry at (0,2)" in violation.message


def test_self_loop_and_shape_and_node_checks():
    graph = make_graph(2, temporal_edges=[(1, 1)])
    # a self-loop is also a length-1 cycle
    assert codes(graph) == ["self_loop", "cycle"]

    wrong_shape = TraceGraph(graph.nodes, [[0, 1]], graph.temporal)
    assert "shape" in codes(wrong_shape)

    nodes = (
        AgentNode(1, "a", "", "", -1, 0, True),
        AgentNode(0, "b", "", "", 0, 0, True),
    )
    broken = TraceGraph(nodes, [[0, 0], [0, 0]], [[0, 0], [0, 0]])
    assert sorted(codes(broken)) == ["final", "node_id", "node_id", "tokens"]


@pytest.mark.parametrize(
    "n, spatial, temporal, expected",
    [
        (3, [(0, 1), (1, 2)], [], [0, 1, 2]),
        (3, [], [], [0, 1, 2]),
        (3, [(2, 0)], [(2, 1)], [2, 0, 1]),
    ],
)
def test_topological_order_examples(n, spatial, temporal, expected):
    assert topological_order(make_graph(n, spatial, temporal)) == expected


def test_topological_order_rejects_cycles():
    with pytest.raises(CycleError):
        topological_order(make_graph(2, [(0, 1)], [(1, 0)]))


def test_connection_weight_examples():
    assert connection_weight(make_graph(2, [(0, 1)]), 0, 1) == 1
    assert connection_weight(make_graph(2, [(0, 1)], [(1, 0)]), 0, 1) == 2
    assert connection_weight(make_graph(2), 0, 1) == 0


def test_connection_weight_bad_indices():
    graph = make_graph(2)
    with pytest.raises(IndexError):
        connection_weight(graph, 0, 2)
    with pytest.raises(ValueError):
        connection_weight(graph, 1, 1)


@settings(max_examples=150, deadline=None)
@given(dags())
def test_valid_graphs_sort_consistently(matrices):
    spatial, temporal = matrices
    n = len(spatial)
    graph = make_graph(n)
    graph = TraceGraph(graph.nodes, spatial, temporal)
    assert validate_graph(graph) == []
    order = topological_order(graph)
    assert sorted(order) == list(range(n))
    position = {v: k for k, v in enumerate(order)}
    for i in range(n):
        for j in range(n):
            if spatial[i][j] or temporal[i][j]:
                assert position[i] < position[j]
    for i in range(n):
        for j in range(n):
            if i != j:
                w = connection_weight(graph, i, j)
                assert w == connection_weight(graph, j, i)
                assert w in (0, 1, 2)


def test_answer_parsing_and_matching():
    assert Answer.parse("8", "numeric").matches(Answer.parse("8.0", "numeric"))
    assert Answer.parse("1,000", "numeric").numeric_value == Decimal("1000")
    assert not Answer.parse("8", "numeric").matches(Answer.parse("8.001", "numeric"))
    assert Answer.parse(" B ", "choice").matches(Answer.choice("B"))
    assert not Answer.choice("B").matches(None)
    assert not Answer.choice("B").matches(Answer.numeric(2))
    with pytest.raises(ValueError):
        Answer.parse("", "numeric")
    with pytest.raises(ValueError):
        Answer.parse("F", "choice")
    with pytest.raises(ValueError):
        Answer.parse("twelve", "numeric")
    with pytest.raises(ValueError):
        Answer.parse("nan", "numeric")


def test_run_record_invariants():
    with pytest.raises(ValueError):
        RunRecord("m", "x", "b", AnswerKind.NUMERIC, ())


def test_final_node_falls_back_to_highest_sink():
    assert final_node(make_graph(3, [(0, 1)], final=0)) == 0
    # sinks are 1 and 2; 2 wins
    assert final_node(make_graph(3, [(0, 1)])) == 2
    # 2 feeds 0 so the only sinks are 0 and 1
    assert final_node(make_graph(3, [(2, 0)], [(2, 1)])) == 1
