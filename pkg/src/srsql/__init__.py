"""SQL <-> SSQL transpilation, Steiner-tree join recovery and beam reranking."""

from __future__ import annotations

from importlib import resources

from .errors import (
    DisconnectedTerminals,
    MalformedBeamFile,
    MissingLabel,
    ScorerFailure,
    SQLSyntaxError,
    SrsqlError,
    UnknownDbId,
    UnknownFusedToken,
    UnsupportedSelfJoin,
)
from .evaluate import exact_set_match, rerank_report, roundtrip_report
from .rerank import (
    BeamCandidate,
    BeamSet,
    LabelConfig,
    RerankConfig,
    assign_soft_logits,
    combine_score,
    filter_schema,
    rerank_beams,
    standalone_rank,
)
from .schema import JoinPlan, Schema, SchemaGraph, build_graph, join_plan_from_tree, load_schema, load_schemas, steiner_tree
from .sqlast import normalize_sql, parse_sql, print_sql
from .ssql import lift_to_sql, lower_to_ssql, parse_ssql, print_ssql


def bundled_path(name: str):
    """Path of a bundled data file (``tables.json`` or ``corpus.jsonl``)."""
    return resources.files(__name__).joinpath("data", name)


__all__ = [
    "BeamCandidate",
    "BeamSet",
    "DisconnectedTerminals",
    "JoinPlan",
    "LabelConfig",
    "MalformedBeamFile",
    "MissingLabel",
    "RerankConfig",
    "SQLSyntaxError",
    "Schema",
    "SchemaGraph",
    "ScorerFailure",
    "SrsqlError",
    "UnknownDbId",
    "UnknownFusedToken",
    "UnsupportedSelfJoin",
    "assign_soft_logits",
    "build_graph",
    "bundled_path",
    "combine_score",
    "exact_set_match",
    "filter_schema",
    "join_plan_from_tree",
    "lift_to_sql",
    "load_schema",
    "load_schemas",
    "lower_to_ssql",
    "normalize_sql",
    "parse_sql",
    "parse_ssql",
    "print_sql",
    "print_ssql",
    "rerank_beams",
    "rerank_report",
    "roundtrip_report",
    "standalone_rank",
    "steiner_tree",
]
