"""Beam reranking with a re-estimated score.

A generator proposes candidates with probability ``g``; a scorer judges each
(question, SQL, filtered schema) triple with ``d`` in (0, 1]; the SQL match
score is ``alpha * ln g + (1 - alpha) * ln d``.
"""

from __future__ import annotations

import json
import math
import re
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Iterator, Protocol

from .errors import (
    ConfigError,
    InvalidScore,
    MalformedBeamFile,
    MissingLabel,
    ScorerFailure,
    SrsqlError,
    UnresolvedReference,
)
from .schema import Schema
from .sqlast.nodes import Aggregate, BinaryOp, Predicate, Query, Subquery, SubquerySource, TableSource
from .sqlast.normalize import column_refs
from .sqlast.parser import parse_sql

SEPARATOR = " [SEP] "


@dataclass(frozen=True)
class RerankConfig:
    alpha: float = 0.7
    d_floor: float = 1e-6
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.d_floor < 1.0:
            raise ConfigError(f"d_floor must lie in (0, 1), got {self.d_floor}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")


@dataclass(frozen=True)
class LabelConfig:
    delta: float = 0.7

    def __post_init__(self):
        if not 0.5 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0.5, 1), got {self.delta}")


@dataclass(frozen=True)
class BeamCandidate:
    sql_text: str
    g: float
    d: float | None = None
    s_combined: float | None = None
    correct: bool | None = None

    def __post_init__(self):
        if not 0.0 < self.g <= 1.0:
            raise InvalidScore(f"generator probability must lie in (0, 1], got {self.g}")
        if self.d is not None and not 0.0 < self.d <= 1.0:
            raise InvalidScore(f"re-estimated score must lie in (0, 1], got {self.d}")


@dataclass(frozen=True)
class BeamSet:
    question: str
    db_id: str
    candidates: tuple[BeamCandidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a beam set needs at least one candidate")

    def is_generator_ordered(self) -> bool:
        gs = [c.g for c in self.candidates]
        return all(a >= b for a, b in zip(gs, gs[1:]))

    def selected(self) -> BeamCandidate:
        return self.candidates[0]


@dataclass(frozen=True)
class TrainingTarget:
    question: str
    sql_text: str
    filtered_schema_text: str
    target: float

    def to_record(self) -> dict:
        return {"question": self.question, "sql": self.sql_text, "schema": self.filtered_schema_text, "target": self.target}


class Scorer(Protocol):
    def __call__(self, question: str, sql_text: str, filtered_schema_text: str) -> float: ...


def combine_score(g: float, d: float, config: RerankConfig = RerankConfig()) -> float:
    if not 0.0 < g <= 1.0:
        raise InvalidScore(f"generator probability must lie in (0, 1], got {g}")
    d = min(max(d, config.d_floor), 1.0)
    if config.alpha == 1.0:
        return math.log(g)
    return config.alpha * math.log(g) + (1.0 - config.alpha) * math.log(d)


# -- schema filtering ----------------------------------------------------


def _walk_blocks(q: Query) -> Iterator[Query]:
    def exprs(e):
        if isinstance(e, Subquery):
            yield from _walk_blocks(e.query)
        elif isinstance(e, Aggregate):
            yield from exprs(e.arg)
        elif isinstance(e, BinaryOp):
            yield from exprs(e.left)
            yield from exprs(e.right)

    def conds(c):
        if c is None:
            return
        if isinstance(c, Predicate):
            for e in (c.left, c.right, c.upper):
                yield from exprs(e)
        else:
            for ch in c.children:
                yield from conds(ch)

    yield q
    for e in q.select:
        yield from exprs(e)
    for o in q.order_by:
        yield from exprs(o.expr)
    for c in (q.where, q.having, *q.from_.joins):
        yield from conds(c)
    for s in q.from_.sources:
        if isinstance(s, SubquerySource):
            yield from _walk_blocks(s.query)
    if q.set_query is not None:
        yield from _walk_blocks(q.set_query)


def filter_schema(sql: Query, schema: Schema) -> str:
    """``"table : col , col | table : col"`` over the tables and columns ``sql`` touches.

    Every FROM table is listed, join connectors included, but join keys used
    only in ON conditions are left out of the column lists.
    """
    used: dict[str, set[str]] = {}
    for block in _walk_blocks(sql):
        for src in block.from_.sources:
            if isinstance(src, TableSource):
                used.setdefault(src.table, set())
        nodes = [*block.select, *block.group_by, *(o.expr for o in block.order_by)]
        nodes += [c for c in (block.where, block.having) if c is not None]
        for node in nodes:
            for ref in column_refs(node):
                used.setdefault(ref.table, set()).add(ref.column)
    parts = []
    for table in schema.tables:
        cols = used.get(table.name.lower())
        if cols is None:
            continue
        names = [c.name.lower() for c in table.columns if c.name.lower() in cols]
        parts.append(f"{table.name.lower()} : {' , '.join(names)}".rstrip())
    unknown = set(used) - {t.name.lower() for t in schema.tables}
    if unknown:
        raise UnresolvedReference(f"tables not in {schema.db_id}: {', '.join(sorted(unknown))}")
    return " | ".join(parts)


def scorer_input(question: str, sql_text: str, filtered_schema_text: str) -> str:
    """The single line handed to out-of-process scorers."""
    return SEPARATOR.join(" ".join(part.split()) for part in (question, sql_text, filtered_schema_text))


# -- scorers -------------------------------------------------------------

_WORD = re.compile(r"[a-z0-9]+")


def _stem(word: str) -> str:
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


def _words(text: str) -> list[str]:
    return [_stem(w) for w in _WORD.findall(text.lower())]


def schema_terms(filtered_schema_text: str) -> list[str]:
    """Table and column names of a filtered schema string, in order, without repeats."""
    terms: list[str] = []
    for chunk in filtered_schema_text.split("|"):
        table, _, cols = chunk.partition(":")
        for name in [table, *cols.split(",")]:
            name = name.strip().lower()
            if name and name not in terms:
                terms.append(name)
    return terms


class BaselineScorer:
    """Lexical-overlap stand-in for a trained re-estimator.

    ``d = matched / total`` where the terms are the table and column names in
    the filtered schema and a term matches when every ``_``-separated word of
    it (plural-stripped) occurs among the question's words.  Candidates that
    do not parse against the schema, and degenerate inputs, score ``d_floor``.
    """

    serial = False

    def __init__(self, schema: Schema | None = None, d_floor: float = 1e-6):
        self.schema = schema
        self.d_floor = d_floor

    def __call__(self, question: str, sql_text: str, filtered_schema_text: str) -> float:
        if not question.strip() or not sql_text.strip() or not filtered_schema_text.strip():
            return self.d_floor
        if self.schema is not None:
            try:
                parse_sql(sql_text, self.schema)
            except SrsqlError:
                return self.d_floor
        terms = schema_terms(filtered_schema_text)
        if not terms:
            return self.d_floor
        q_words = set(_words(question))
        matched = sum(1 for t in terms if all(w in q_words for w in _words(t)))
        return max(matched / len(terms), self.d_floor)


def baseline_scorer(question: str, sql_text: str, filtered_schema_text: str, schema: Schema | None = None,
                    d_floor: float = 1e-6) -> float:
    return BaselineScorer(schema, d_floor)(question, sql_text, filtered_schema_text)


class ExternalScorer:
    """Line protocol over a child process: one request line in, one decimal score out."""

    serial = True

    def __init__(self, command: str | list[str]):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
                )
            except OSError as exc:
                raise ScorerFailure(f"cannot start scorer {self.argv!r}: {exc}") from None
        return self._proc

    def __call__(self, question: str, sql_text: str, filtered_schema_text: str) -> float:
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(scorer_input(question, sql_text, filtered_schema_text) + "\n")
                proc.stdin.flush()
                reply = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise ScorerFailure(f"scorer process failed: {exc}") from None
        if not reply:
            raise ScorerFailure("scorer process closed its output")
        try:
            return float(reply.strip())
        except ValueError:
            raise ScorerFailure(f"scorer replied {reply.strip()!r}, expected a decimal") from None

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def oracle_scorer(beams: BeamSet, wrong: float = 1e-6) -> Callable[[str, str, str], float]:
    """d = 1 for candidates labelled correct, ``wrong`` for everything else."""
    labels = {c.sql_text: c.correct for c in beams.candidates}

    def score(question, sql_text, filtered_schema_text):
        return 1.0 if labels.get(sql_text) else wrong

    return score


# -- ranking -------------------------------------------------------------


def _scored(beams: BeamSet, scorer, config: RerankConfig, schema: Schema | None) -> list[BeamCandidate]:
    def one(cand: BeamCandidate) -> BeamCandidate:
        filtered = ""
        if schema is not None:
            try:
                filtered = filter_schema(parse_sql(cand.sql_text, schema), schema)
            except SrsqlError:
                filtered = ""
        try:
            d = scorer(beams.question, cand.sql_text, filtered)
        except ScorerFailure:
            raise
        except Exception as exc:  # a plug-in may fail in any way
            raise ScorerFailure(f"scorer raised {type(exc).__name__}: {exc}") from exc
        if not isinstance(d, (int, float)) or math.isnan(d) or not 0.0 < d <= 1.0:
            raise ScorerFailure(f"scorer returned {d!r}; scores must lie in (0, 1]")
        d = max(float(d), config.d_floor)
        return replace(cand, d=d, s_combined=combine_score(cand.g, d, config))

    if config.workers > 1 and not getattr(scorer, "serial", False):
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, beams.candidates))
    return [one(c) for c in beams.candidates]


def rerank_beams(beams: BeamSet, scorer, config: RerankConfig = RerankConfig(), schema: Schema | None = None) -> BeamSet:
    """Score every candidate and sort by combined score; ties keep generator rank."""
    scored = _scored(beams, scorer, config, schema)
    order = sorted(range(len(scored)), key=lambda k: (-scored[k].s_combined, k))
    return replace(beams, candidates=tuple(scored[k] for k in order))


def standalone_rank(beams: BeamSet, scorer, config: RerankConfig = RerankConfig(), schema: Schema | None = None) -> BeamSet:
    """Rank by the re-estimated score alone (the alpha = 0 comparator)."""
    scored = _scored(beams, scorer, replace(config, alpha=0.0), schema)
    order = sorted(range(len(scored)), key=lambda k: (-scored[k].d, k))
    return replace(beams, candidates=tuple(scored[k] for k in order))


# -- supervision ---------------------------------------------------------


def soft_logit(rank: int, correct: bool, config: LabelConfig = LabelConfig()) -> float:
    """Target for a candidate at 1-based generator ``rank``."""
    if rank == 1:
        return config.delta if correct else 1.0 - config.delta
    return 1.0 if correct else 1.0 - config.delta


def assign_soft_logits(beams: BeamSet, config: LabelConfig = LabelConfig(), schema: Schema | None = None) -> list[TrainingTarget]:
    targets = []
    for rank, cand in enumerate(beams.candidates, start=1):
        if cand.correct is None:
            raise MissingLabel(f"candidate {rank} of {beams.question!r} has no correctness label")
        filtered = ""
        if schema is not None:
            try:
                filtered = filter_schema(parse_sql(cand.sql_text, schema), schema)
            except SrsqlError:
                filtered = ""
        targets.append(TrainingTarget(beams.question, cand.sql_text, filtered, soft_logit(rank, cand.correct, config)))
    return targets


# -- beam dump files -----------------------------------------------------


def parse_beam_record(line: str, lineno: int | None = None) -> BeamSet:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedBeamFile(f"invalid JSON: {exc.msg}", lineno) from None
    if not isinstance(rec, dict):
        raise MalformedBeamFile("record is not an object", lineno)
    try:
        question, db_id, beams = rec["question"], rec["db_id"], rec["beams"]
    except KeyError as exc:
        raise MalformedBeamFile(f"missing field {exc}", lineno) from None
    if not isinstance(beams, list) or not beams:
        raise MalformedBeamFile("beams must be a non-empty array", lineno)
    cands = []
    for b in beams:
        try:
            logprob = float(b["logprob"])
            g = math.exp(logprob)
            correct = b.get("correct")
            if correct is not None and not isinstance(correct, bool):
                raise MalformedBeamFile("correct must be a boolean", lineno)
            cands.append(BeamCandidate(str(b["sql"]), g, correct=correct))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBeamFile(f"bad beam entry {b!r}: {exc}", lineno) from None
    # generator order: descending g, stable for equal scores
    cands = sorted(cands, key=lambda c: -c.g)
    return BeamSet(str(question), str(db_id), tuple(cands))


def read_beam_file(path) -> list[BeamSet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_beam_record(line, lineno))
    return out


def write_targets(targets: Iterable[TrainingTarget], fh) -> None:
    for t in targets:
        fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")
