import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemmas.metrics import extract_answer
from gemmas.trace_io import (
    GenSpec,
    GraphInvariantError,
    MalformedTraceError,
    SchemaError,
    generate_synthetic_run,
    parse_run,
    serialize_run,
)
from gemmas.trace_model import AnswerKind, validate_graph


def minimal_doc(**trace_overrides):
    trace = {
        "problem_id": "p0",
        "question": "What is 6 * 7?",
        "gold_answer": "42",
        "nodes": [
            {"id": 0, "role": "AnalyzeAgent", "prompt": "q", "response": "maybe 40",
             "prompt_tokens": 10, "completion_tokens": 3, "is_final": False},
            {"id": 1, "role": "FinalRefer", "prompt": "q", "response": "it is 42",
             "prompt_tokens": 12, "completion_tokens": 4, "is_final": True},
        ],
        "spatial": [[0, 1], [0, 0]],
        "temporal": [[0, 0], [0, 0]],
    }
    trace.update(trace_overrides)
    return {"method": "Vanilla-AD", "model": "m", "benchmark": "GSM8K", "answer_kind": "numeric", "traces": [trace]}


def encode(doc):
    return json.dumps(doc).encode("utf-8")


def test_minimal_file_parses():
    run = parse_run(encode(minimal_doc()))
    assert len(run.traces) == 1
    assert run.traces[0].graph.size == 2
    assert run.traces[0].gold_answer.to_text() == "42"


def test_wrong_dimension_names_spatial():
    with pytest.raises(SchemaError) as info:
        parse_run(encode(minimal_doc(spatial=[[0, 1, 0], [0, 0, 0], [0, 0, 0]])))
    assert "spatial" in info.value.field


def test_cycle_is_a_graph_invariant_error():
    with pytest.raises(GraphInvariantError) as info:
        parse_run(encode(minimal_doc(spatial=[[0, 1], [1, 0]])))
    assert [v.code for v in info.value.violations] == ["cycle"]
    assert "0 -> 1 -> 0" in str(info.value)


def test_malformed_json_reports_position():
    with pytest.raises(MalformedTraceError) as info:
        parse_run(b'{"method": "x",\n  "model": }')
    assert info.value.line == 2
    assert info.value.column > 1


def test_invalid_utf8_is_malformed():
    with pytest.raises(MalformedTraceError):
        parse_run(b'{"method": "\xff"}')


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("method"), "method"),
        (lambda d: d.update(answer_kind="free"), "answer_kind"),
        (lambda d: d.update(traces=[]), "traces"),
        (lambda d: d["traces"][0].update(gold_answer="x"), "traces[0].gold_answer"),
        (lambda d: d["traces"][0]["nodes"][0].update(prompt_tokens="10"), "traces[0].nodes[0].prompt_tokens"),
        (lambda d: d["traces"][0]["nodes"][0].update(prompt_tokens=True), "traces[0].nodes[0].prompt_tokens"),
        (lambda d: d["traces"][0]["temporal"][0].__setitem__(1, 0.5), "traces[0].temporal[0][1]"),
    ],
)
def test_schema_violations_name_the_field(mutate, field):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        parse_run(encode(doc))
    assert info.value.field == field


def test_non_binary_entry_is_delegated_to_validation():
    with pytest.raises(GraphInvariantError) as info:
        parse_run(encode(minimal_doc(spatial=[[0, 2], [0, 0]])))
    assert info.value.violations[0].code == "non_binary"


def test_unknown_fields_become_warnings():
    doc = minimal_doc(extra_trace_field=1)
    doc["harness"] = "x"
    warnings = []
    parse_run(encode(doc), warnings)
    assert len(warnings) == 2
    assert any("harness" in w for w in warnings)


def test_round_trip_preserves_empty_and_unicode_text():
    doc = minimal_doc()
    doc["traces"][0]["nodes"][0]["response"] = ""
    doc["traces"][0]["nodes"][1]["response"] = "答案是 42 ✓ … naïve"
    run = parse_run(encode(doc))
    data = serialize_run(run)
    again = parse_run(data)
    assert again == run
    assert again.traces[0].graph.nodes[0].response == ""
    assert "答案是 42 ✓ … naïve".encode("utf-8") in data
    assert serialize_run(again) == data


def test_generator_degenerate_rates():
    run = generate_synthetic_run(GenSpec(num_agents=4, num_problems=5, correctness_rate=1.0, seed=3))
    for trace in run.traces:
        for node in trace.graph.nodes:
            assert trace.gold_answer.matches(extract_answer(node.response, run.answer_kind))

    empty = generate_synthetic_run(GenSpec(num_agents=4, num_problems=3, edge_density=0.0, seed=3))
    for trace in empty.traces:
        assert not any(map(any, trace.graph.spatial))
        assert not any(map(any, trace.graph.temporal))


def test_generator_is_deterministic():
    spec = GenSpec(num_agents=6, num_problems=4, seed=2**64 - 1)
    assert serialize_run(generate_synthetic_run(spec)) == serialize_run(generate_synthetic_run(spec))
    other = GenSpec(num_agents=6, num_problems=4, seed=1)
    assert serialize_run(generate_synthetic_run(spec)) != serialize_run(generate_synthetic_run(other))


def test_generator_correctness_rate_converges():
    run = generate_synthetic_run(GenSpec(num_agents=5, num_problems=400, correctness_rate=0.3, seed=11))
    hits = [
        t.gold_answer.matches(extract_answer(n.response, run.answer_kind))
        for t in run.traces
        for n in t.graph.nodes
    ]
    # 2000 Bernoulli(0.3) draws: sd ~ 0.01
    assert abs(sum(hits) / len(hits) - 0.3) < 0.04


@pytest.mark.parametrize(
    "bad",
    [
        dict(num_agents=1),
        dict(num_problems=0),
        dict(edge_density=1.5),
        dict(correctness_rate=-0.1),
        dict(vocabulary_size=9),
        dict(seed=2**64),
    ],
)
def test_genspec_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        GenSpec(**bad)


gen_specs = st.builds(
    GenSpec,
    num_agents=st.integers(2, 8),
    num_problems=st.integers(1, 4),
    edge_density=st.floats(0, 1),
    correctness_rate=st.floats(0, 1),
    vocabulary_size=st.integers(10, 200),
    seed=st.integers(0, 2**64 - 1),
    answer_kind=st.sampled_from(list(AnswerKind)),
)


@settings(max_examples=60, deadline=None)
@given(gen_specs)
def test_generated_runs_are_valid_and_round_trip(spec):
    run = generate_synthetic_run(spec)
    for trace in run.traces:
        assert validate_graph(trace.graph) == []
    assert parse_run(serialize_run(run)) == run
