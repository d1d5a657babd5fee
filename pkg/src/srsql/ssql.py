"""Translation between standard SQL and SSQL.

Lowering drops every JOIN chain and alias: a block keeps only the tables its
columns mention outside ON conditions (plus tables no column refers to at
all), and each column prints as one fused ``table.column`` token.  Lifting
goes back by solving a Steiner tree over the mentioned tables and columns and
turning the tree's foreign-key edges into ``JOIN ... ON`` steps.
"""

from __future__ import annotations

from dataclasses import fields
from functools import lru_cache

from .errors import DisconnectedTerminals, UnknownFusedToken, UnresolvedReference, UnsupportedSelfJoin
from .schema import Node, Schema, SchemaGraph, join_plan_from_tree, steiner_tree
from .sqlast.nodes import (
    Aggregate,
    BinaryOp,
    ColumnRef,
    FromClause,
    OrderItem,
    Predicate,
    Query,
    SsqlQuery,
    Subquery,
    SubquerySource,
    TableSource,
)
from .sqlast.normalize import column_refs
from .sqlast.parser import parse_ssql_text
from .sqlast.printer import print_ssql as _print_ssql


@lru_cache(maxsize=128)
def _graph(schema: Schema) -> SchemaGraph:
    return SchemaGraph(schema)


def _as(cls, q: Query, **changes) -> Query:
    values = {f.name: getattr(q, f.name) for f in fields(q)}
    values.update(changes)
    return cls(**values)


def _block_refs(q: Query, stack: list[set[str]], own: int, out: list[ColumnRef]):
    """Collect column references of block ``own`` (an index into ``stack``).

    ``stack`` holds the FROM table sets of the enclosing blocks; a reference
    binds to the innermost block listing its table, or to the block it
    appears in when no block lists it.
    """

    def visit_expr(e, depth):
        if isinstance(e, ColumnRef):
            target = depth
            for k in range(depth, -1, -1):
                if e.table in stack[k]:
                    target = k
                    break
            if target == own:
                out.append(e)
        elif isinstance(e, Aggregate):
            visit_expr(e.arg, depth)
        elif isinstance(e, BinaryOp):
            visit_expr(e.left, depth)
            visit_expr(e.right, depth)
        elif isinstance(e, Subquery):
            visit_query(e.query, depth + 1)

    def visit_cond(c, depth):
        if c is None:
            return
        if isinstance(c, Predicate):
            for e in (c.left, c.right, c.upper):
                visit_expr(e, depth)
        else:
            for ch in c.children:
                visit_cond(ch, depth)

    def visit_query(block, depth):
        pushed = depth >= len(stack)
        if pushed:
            stack.append(set(block.tables()))
        for e in block.select:
            visit_expr(e, depth)
        for e in block.group_by:
            visit_expr(e, depth)
        for o in block.order_by:
            visit_expr(o.expr, depth)
        visit_cond(block.where, depth)
        visit_cond(block.having, depth)
        if depth > own:
            for j in block.from_.joins:
                visit_cond(j, depth)
        if pushed:
            stack.pop()
        # derived tables and set-op branches are separate blocks that cannot see this one

    visit_query(q, own)


def _map_subqueries(q: Query, fn) -> dict:
    """Apply ``fn`` to every nested query of block ``q`` (not set-op branches)."""

    def expr(e):
        if isinstance(e, Subquery):
            return Subquery(fn(e.query))
        if isinstance(e, Aggregate):
            return Aggregate(e.func, expr(e.arg), e.distinct)
        if isinstance(e, BinaryOp):
            return BinaryOp(e.op, expr(e.left), expr(e.right))
        return e

    def cond(c):
        if c is None:
            return None
        if isinstance(c, Predicate):
            return Predicate(expr(c.left), c.op, expr(c.right), expr(c.upper) if c.upper is not None else None)
        return type(c)(tuple(cond(ch) for ch in c.children))

    return dict(
        select=tuple(expr(e) for e in q.select),
        where=cond(q.where),
        having=cond(q.having),
        order_by=tuple(OrderItem(expr(o.expr), o.direction) for o in q.order_by),
    )


# -- lowering ------------------------------------------------------------


def _lower(q: Query, schema: Schema, outer: list[set[str]]) -> SsqlQuery:
    tables = q.tables()
    dupes = sorted({t for t in tables if tables.count(t) > 1})
    if dupes:
        raise UnsupportedSelfJoin(f"table {dupes[0]!r} is joined with itself")
    stack = outer + [set(tables)]

    mentioned_refs: list[ColumnRef] = []
    _block_refs(q, list(stack), len(outer), mentioned_refs)
    for r in mentioned_refs:
        if r.table not in stack[-1]:
            raise UnresolvedReference(f"{r.table}.{r.column} does not resolve to any FROM table")
    on_tables = {r.table for j in q.from_.joins for r in column_refs(j)}

    mentioned = {r.table for r in mentioned_refs}
    untouched = set(tables) - mentioned - on_tables
    keep = mentioned | untouched
    if tables and not keep:
        # every table only feeds ON conditions ("select count(*) from a join b on ...")
        keep = set(tables)
    rank = schema.table_index
    sources: list = [TableSource(t) for t in sorted(keep, key=rank)]
    sources += [SubquerySource(_lower(s.query, schema, [])) for s in q.from_.sources if isinstance(s, SubquerySource)]

    changes = _map_subqueries(q, lambda sub: _lower(sub, schema, stack))
    changes["from_"] = FromClause(tuple(sources))
    if q.set_query is not None:
        changes["set_query"] = _lower(q.set_query, schema, outer)
    return _as(SsqlQuery, q, **changes)


def lower_to_ssql(sql: Query, schema: Schema) -> SsqlQuery:
    """SQL tree -> SSQL tree: drop joins and aliases, keep mentioned tables only."""
    return _lower(sql, schema, [])


# -- lifting -------------------------------------------------------------


def _lift(q: Query, schema: Schema, outer: list[set[str]]) -> Query:
    graph = _graph(schema)
    tables = q.tables()
    stack = outer + [set(tables)]
    refs: list[ColumnRef] = []
    _block_refs(q, list(stack), len(outer), refs)
    for r in refs:
        if not schema.has_column(r.table, r.column):
            raise UnknownFusedToken(f"{r.table}.{r.column} is not a column of {schema.db_id}")
    for t in tables:
        if not schema.has_table(t):
            raise UnknownFusedToken(f"unknown table {t!r} in {schema.db_id}")

    terminals = [Node(t) for t in tables] + [Node(r.table, r.column) for r in refs]
    derived = [SubquerySource(_lift(s.query, schema, [])) for s in q.from_.sources if isinstance(s, SubquerySource)]
    if terminals and derived:
        raise UnresolvedReference("a derived table cannot be joined to schema tables")
    if terminals:
        tree = steiner_tree(graph, terminals)
        plan = join_plan_from_tree(tree, graph, terminals)
        if len(plan.steps) != len(plan.tables) - 1:
            raise DisconnectedTerminals(f"join plan over {', '.join(plan.tables)} is not connected")
        joins = tuple(
            Predicate(ColumnRef(a.table, a.column), "=", ColumnRef(b.table, b.column)) for a, b in plan.steps
        )
        from_ = FromClause(tuple(TableSource(t) for t in plan.tables), joins)
    else:
        from_ = FromClause(tuple(derived))

    changes = _map_subqueries(q, lambda sub: _lift(sub, schema, stack))
    changes["from_"] = from_
    if q.set_query is not None:
        changes["set_query"] = _lift(q.set_query, schema, outer)
    return _as(Query, q, **changes)


def lift_to_sql(ssql: Query, schema: Schema) -> Query:
    """SSQL tree -> SQL tree, recovering joins through the schema's foreign keys."""
    return _lift(ssql, schema, [])


def parse_ssql(text: str, schema: Schema) -> SsqlQuery:
    return parse_ssql_text(text, schema)


def print_ssql(ssql: Query) -> str:
    return _print_ssql(ssql)

