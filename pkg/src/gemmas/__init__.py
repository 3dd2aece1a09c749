"""Process-level evaluation of multi-agent LLM systems from recorded traces."""

from .metrics import (
    AnalysisConfig,
    MetricsReport,
    accuracy,
    analyze_run,
    enumerate_paths,
    extract_answer,
    information_diversity_score,
    path_contribution,
    token_usage,
    unnecessary_path_ratio,
)
from .report import aggregate, lambda_sweep, relative_delta, render
from .trace_io import GenSpec, generate_synthetic_run, parse_run, serialize_run
from .trace_model import (
    AgentNode,
    Answer,
    AnswerKind,
    ProblemTrace,
    RunRecord,
    TraceGraph,
    connection_weight,
    topological_order,
    validate_graph,
)

__version__ = "0.1.0"

__all__ = [
    "AgentNode",
    "AnalysisConfig",
    "Answer",
    "AnswerKind",
    "GenSpec",
    "MetricsReport",
    "ProblemTrace",
    "RunRecord",
    "TraceGraph",
    "accuracy",
    "aggregate",
    "analyze_run",
    "connection_weight",
    "enumerate_paths",
    "extract_answer",
    "generate_synthetic_run",
    "information_diversity_score",
    "lambda_sweep",
    "parse_run",
    "path_contribution",
    "relative_delta",
    "render",
    "serialize_run",
    "token_usage",
    "topological_order",
    "unnecessary_path_ratio",
    "validate_graph",
]
