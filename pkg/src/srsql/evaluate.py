"""Structural exact match, round-trip recovery and rerank accuracy reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import (
    DisconnectedTerminals,
    MalformedBeamFile,
    SrsqlError,
    UnsupportedSelfJoin,
)
from .rerank import BeamSet, RerankConfig, rerank_beams, standalone_rank
from .schema import Schema
from .sqlast.nodes import (
    Aggregate,
    And,
    BinaryOp,
    ColumnRef,
    Literal,
    Or,
    Predicate,
    Query,
    Star,
    Subquery,
    SubquerySource,
    TableSource,
)
from .sqlast.normalize import normalize_sql
from .sqlast.parser import parse_sql
from .sqlast.printer import print_sql
from .ssql import lift_to_sql, lower_to_ssql, print_ssql

FAILURE_REASONS = ("self_join", "non_minimal_join", "disconnected", "mismatch")

_VALUE = ("value",)


def _expr_key(e, ignore_values: bool):
    if isinstance(e, ColumnRef):
        return ("col", e.table, e.column, e.instance)
    if isinstance(e, Literal):
        return _VALUE if ignore_values else ("lit", e.kind, e.text)
    if isinstance(e, Star):
        return ("*",)
    if isinstance(e, Aggregate):
        return ("agg", e.func, e.distinct, _expr_key(e.arg, ignore_values))
    if isinstance(e, BinaryOp):
        return ("op", e.op, _expr_key(e.left, ignore_values), _expr_key(e.right, ignore_values))
    if isinstance(e, Subquery):
        return ("sub", _query_key(e.query, ignore_values))
    if e is None:
        return None
    raise TypeError(f"not an expression: {e!r}")


def _cond_key(c, ignore_values: bool):
    if c is None:
        return None
    if isinstance(c, Predicate):
        return (
            "pred",
            _expr_key(c.left, ignore_values),
            c.op,
            _expr_key(c.right, ignore_values),
            _expr_key(c.upper, ignore_values),
        )
    tag = "and" if isinstance(c, And) else "or"
    return (tag, frozenset(_cond_key(ch, ignore_values) for ch in c.children))


def _conjunct_keys(c, ignore_values: bool) -> list:
    if isinstance(c, And):
        return [k for ch in c.children for k in _conjunct_keys(ch, ignore_values)]
    return [_cond_key(c, ignore_values)]


def _query_key(q: Query, ignore_values: bool):
    sources = tuple(
        ("table", s.table) if isinstance(s, TableSource) else ("derived", _query_key(s.query, ignore_values))
        for s in q.from_.sources
    )
    on = frozenset(k for j in q.from_.joins for k in _conjunct_keys(j, ignore_values))
    # literals outside conditions (select arithmetic) always count
    return (
        q.distinct,
        frozenset(_expr_key(e, False) for e in q.select),
        sources,
        on,
        _cond_key(q.where, ignore_values),
        frozenset(_expr_key(e, False) for e in q.group_by),
        _cond_key(q.having, ignore_values),
        tuple((_expr_key(o.expr, False), o.direction) for o in q.order_by),
        q.limit,
        q.set_op,
        _query_key(q.set_query, ignore_values) if q.set_query is not None else None,
    )


def match_key(q: Query, ignore_values: bool = False):
    """Hashable canonical key; two queries match exactly when their keys are equal."""
    return _query_key(normalize_sql(q), ignore_values)


def exact_set_match(predicted: Query, gold: Query, ignore_values: bool = False) -> bool:
    """Structural match: sets for SELECT, AND/OR children and GROUP BY; order kept for ORDER BY."""
    return match_key(predicted, ignore_values) == match_key(gold, ignore_values)


# -- corpora -------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    db_id: str
    sql: str
    question: str = ""
    ssql: str | None = None
    id: str | None = None


def read_corpus(path) -> list[CorpusEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(
                    CorpusEntry(
                        db_id=rec["db_id"],
                        sql=rec.get("sql", ""),
                        question=rec.get("question", ""),
                        ssql=rec.get("ssql"),
                        id=str(rec.get("id", lineno)),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed corpus record ({exc})") from None
    return entries


def token_count(text: str) -> int:
    return len(text.split())


def _table_count(q: Query) -> int:
    n = sum(isinstance(s, TableSource) for s in q.from_.sources)
    for s in q.from_.sources:
        if isinstance(s, SubquerySource):
            n += _table_count(s.query)
    for sub in _subqueries(q):
        n += _table_count(sub)
    if q.set_query is not None:
        n += _table_count(q.set_query)
    return n


def _subqueries(q: Query) -> list[Query]:
    found: list[Query] = []

    def expr(e):
        if isinstance(e, Subquery):
            found.append(e.query)
        elif isinstance(e, Aggregate):
            expr(e.arg)
        elif isinstance(e, BinaryOp):
            expr(e.left)
            expr(e.right)

    def cond(c):
        if isinstance(c, Predicate):
            for e in (c.left, c.right, c.upper):
                expr(e)
        elif isinstance(c, (And, Or)):
            for ch in c.children:
                cond(ch)

    for e in q.select:
        expr(e)
    for o in q.order_by:
        expr(o.expr)
    for c in (q.where, q.having):
        cond(c)
    return found


# -- round trip ----------------------------------------------------------


@dataclass
class QueryRecord:
    id: str
    db_id: str
    sql_tokens: int | None = None
    ssql_tokens: int | None = None
    joins: int = 0
    recovered: bool = False
    reason: str | None = None
    detail: str = ""
    ssql: str | None = None
    lifted: str | None = None


@dataclass
class RecoveryReport:
    total: int
    recovered: int
    recovery_rate: float
    failures: list[tuple[str, str]]
    avg_sql_tokens: float
    avg_ssql_tokens: float
    records: list[QueryRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["failures"] = [list(f) for f in self.failures]
        return out

    def render(self) -> str:
        lines = [
            f"queries: {self.total}",
            f"recovered: {self.recovered}",
            f"recovery rate: {self.recovery_rate:.4f}",
            f"avg sql tokens: {self.avg_sql_tokens:.2f}",
            f"avg ssql tokens: {self.avg_ssql_tokens:.2f}",
        ]
        lines += [f"failure {qid}: {reason}" for qid, reason in self.failures]
        return "\n".join(lines)


def _count_joins(q: Query) -> int:
    n = len(q.from_.joins)
    for s in q.from_.sources:
        if isinstance(s, SubquerySource):
            n += _count_joins(s.query)
    for sub in _subqueries(q):
        n += _count_joins(sub)
    if q.set_query is not None:
        n += _count_joins(q.set_query)
    return n


def roundtrip_one(entry: CorpusEntry, schema: Schema) -> QueryRecord:
    rec = QueryRecord(id=entry.id or "", db_id=entry.db_id)
    try:
        gold = parse_sql(entry.sql, schema)
    except SrsqlError as exc:
        rec.reason, rec.detail = "mismatch", f"gold does not parse: {exc}"
        return rec
    rec.sql_tokens = token_count(print_sql(gold))
    rec.joins = _count_joins(gold)
    try:
        lowered = lower_to_ssql(gold, schema)
    except UnsupportedSelfJoin as exc:
        rec.reason, rec.detail = "self_join", str(exc)
        return rec
    rec.ssql = print_ssql(lowered)
    rec.ssql_tokens = token_count(rec.ssql)
    try:
        lifted = lift_to_sql(lowered, schema)
    except DisconnectedTerminals as exc:
        rec.reason, rec.detail = "disconnected", str(exc)
        return rec
    rec.lifted = print_sql(lifted)
    if exact_set_match(lifted, gold, ignore_values=False):
        rec.recovered = True
    elif _table_count(lifted) < _table_count(gold):
        rec.reason = "non_minimal_join"
        rec.detail = "gold joins tables beyond the minimal tree"
    else:
        rec.reason = "mismatch"
    return rec


def roundtrip_report(corpus: Iterable, schemas: Mapping[str, Schema]) -> RecoveryReport:
    """Lower then lift every corpus query and compare with the original."""
    records = []
    for k, item in enumerate(corpus, start=1):
        entry = item if isinstance(item, CorpusEntry) else CorpusEntry(db_id=item[0], sql=item[1])
        if entry.id is None:
            entry = CorpusEntry(entry.db_id, entry.sql, entry.question, entry.ssql, str(k))
        schema = schemas.get(entry.db_id)
        if schema is None:
            records.append(QueryRecord(entry.id, entry.db_id, reason="mismatch", detail=f"unknown db_id {entry.db_id!r}"))
            continue
        records.append(roundtrip_one(entry, schema))
    if not records:
        raise ValueError("round-trip report needs a non-empty corpus")
    paired = [r for r in records if r.sql_tokens is not None and r.ssql_tokens is not None]
    recovered = sum(r.recovered for r in records)
    return RecoveryReport(
        total=len(records),
        recovered=recovered,
        recovery_rate=recovered / len(records),
        failures=[(r.id, r.reason) for r in records if not r.recovered],
        avg_sql_tokens=sum(r.sql_tokens for r in paired) / len(paired) if paired else 0.0,
        avg_ssql_tokens=sum(r.ssql_tokens for r in paired) / len(paired) if paired else 0.0,
        records=records,
    )


# -- reranking -----------------------------------------------------------


@dataclass
class RerankReport:
    total: int
    top1_by_g: int
    top1_by_combined: int
    top1_by_standalone: int
    selections: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def render(self) -> str:
        return "\n".join(
            [
                f"beam sets: {self.total}",
                f"top1 by generator: {self.top1_by_g}",
                f"top1 by combined: {self.top1_by_combined}",
                f"top1 by standalone: {self.top1_by_standalone}",
            ]
        )


def rerank_report(
    beam_sets: Iterable[BeamSet],
    schemas: Mapping[str, Schema] | None = None,
    scorer=None,
    config: RerankConfig = RerankConfig(),
    scorer_factory: Callable[[BeamSet], Callable] | None = None,
) -> RerankReport:
    """Count beam sets whose first candidate is correct under each ranking.

    ``scorer`` is shared by every beam set; ``scorer_factory`` builds one per
    set instead (the label-reading oracle needs this).
    """
    if (scorer is None) == (scorer_factory is None):
        raise ValueError("pass exactly one of scorer or scorer_factory")
    schemas = schemas or {}
    total = by_g = by_combined = by_standalone = 0
    selections = []
    for k, beams in enumerate(beam_sets, start=1):
        if any(c.correct is None for c in beams.candidates):
            raise MalformedBeamFile(f"beam set {k} ({beams.question!r}) lacks correctness labels")
        fn = scorer if scorer is not None else scorer_factory(beams)
        schema = schemas.get(beams.db_id)
        combined = rerank_beams(beams, fn, config, schema)
        alone = standalone_rank(beams, fn, config, schema)
        total += 1
        by_g += beams.candidates[0].correct
        by_combined += combined.candidates[0].correct
        by_standalone += alone.candidates[0].correct
        selections.append(
            {
                "question": beams.question,
                "by_g": beams.candidates[0].sql_text,
                "by_combined": combined.candidates[0].sql_text,
                "by_standalone": alone.candidates[0].sql_text,
            }
        )
    return RerankReport(total, by_g, by_combined, by_standalone, selections)
