"""Canonical forms for comparing queries.

``normalize_sql`` sorts the children of AND/OR nodes, flattens same-kind
nesting, and rewrites every JOIN chain into one canonical order: breadth-first
over the ON-condition graph from the alphabetically first table, with each ON
conjunct attached to the join that completes it and equalities oriented
earlier-source first.  ORDER BY, LIMIT and the SELECT list keep their order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace
from itertools import permutations, product
from math import prod

from .nodes import (
    And,
    Aggregate,
    BinaryOp,
    ColumnRef,
    Condition,
    FromClause,
    Or,
    OrderItem,
    Predicate,
    Query,
    Subquery,
    SubquerySource,
    TableSource,
)
from .printer import _Printer


class _KeyPrinter(_Printer):
    def __init__(self):
        super().__init__(ssql=True)

    def column(self, c: ColumnRef) -> str:
        suffix = f"#{c.instance}" if c.instance else ""
        return f"{c.table}{suffix}.{c.column}"

    def from_clause(self, q: Query, aliased: bool) -> str:
        text = super().from_clause(q, aliased)
        if q.from_.joins:
            text += " on " + " ; ".join(self.cond(j) for j in q.from_.joins)
        return text


def sort_key(node) -> str:
    """Printed text of a condition or expression, independent of aliasing."""
    p = _KeyPrinter()
    if isinstance(node, (Predicate, And, Or)):
        return p.cond(node)
    if isinstance(node, Query):
        return p.query(node)
    return p.expr(node)


def _map_expr(e, fn_query, remap):
    if isinstance(e, ColumnRef):
        return remap(e)
    if isinstance(e, Aggregate):
        return Aggregate(e.func, _map_expr(e.arg, fn_query, remap), e.distinct)
    if isinstance(e, BinaryOp):
        return BinaryOp(e.op, _map_expr(e.left, fn_query, remap), _map_expr(e.right, fn_query, remap))
    if isinstance(e, Subquery):
        return Subquery(fn_query(e.query))
    return e


def _map_cond(c, fn_query, remap):
    if c is None:
        return None
    if isinstance(c, Predicate):
        upper = _map_expr(c.upper, fn_query, remap) if c.upper is not None else None
        return Predicate(_map_expr(c.left, fn_query, remap), c.op, _map_expr(c.right, fn_query, remap), upper)
    return type(c)(tuple(_map_cond(ch, fn_query, remap) for ch in c.children))


def _canonical_cond(c: Condition | None) -> Condition | None:
    if c is None or isinstance(c, Predicate):
        return c
    kind = type(c)
    flat: list = []
    for ch in c.children:
        ch = _canonical_cond(ch)
        if type(ch) is kind:
            flat.extend(ch.children)
        else:
            flat.append(ch)
    flat.sort(key=sort_key)
    return kind(tuple(flat))


def _conjuncts(c: Condition) -> list[Condition]:
    if isinstance(c, And):
        out = []
        for ch in c.children:
            out.extend(_conjuncts(ch))
        return out
    return [c]


def column_refs(node, out: list[ColumnRef] | None = None) -> list[ColumnRef]:
    """Column references under ``node``, not descending into subqueries."""
    if out is None:
        out = []
    if isinstance(node, ColumnRef):
        out.append(node)
    elif isinstance(node, Predicate):
        for e in (node.left, node.right, node.upper):
            column_refs(e, out)
    elif isinstance(node, (And, Or)):
        for ch in node.children:
            column_refs(ch, out)
    elif isinstance(node, Aggregate):
        column_refs(node.arg, out)
    elif isinstance(node, BinaryOp):
        column_refs(node.left, out)
        column_refs(node.right, out)
    return out


def _canonical_from(q: Query) -> Query | None:
    """Reorder a JOIN chain canonically; None if the ON graph does not allow it."""
    sources = q.from_.sources
    if len(sources) < 2 or not q.from_.joins:
        return q
    ids: list[tuple] = []
    counts: dict[str, int] = {}
    for k, src in enumerate(sources):
        if isinstance(src, TableSource):
            inst = counts.get(src.table, 0)
            counts[src.table] = inst + 1
            ids.append((src.table, inst))
        else:
            ids.append(("￿", k))  # derived tables sort last
    pos_of = {sid: k for k, sid in enumerate(ids)}

    atoms = [a for j in q.from_.joins for a in _conjuncts(j)]
    atom_sources = []
    adjacency: dict[int, set[int]] = {k: set() for k in range(len(sources))}
    for a in atoms:
        touched = sorted({pos_of[(r.table, r.instance)] for r in column_refs(a, []) if (r.table, r.instance) in pos_of})
        atom_sources.append(touched)
        for x in touched:
            for y in touched:
                if x != y:
                    adjacency[x].add(y)

    by_id = lambda k: ids[k]  # noqa: E731
    start = min(range(len(sources)), key=by_id)
    order = [start]
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in sorted(adjacency[cur] - seen, key=by_id):
            seen.add(nxt)
            order.append(nxt)
            queue.append(nxt)
    if len(order) != len(sources):
        return None
    new_pos = {old: new for new, old in enumerate(order)}

    # renumber self-join instances to follow the new order
    inst_map: dict[tuple[str, int], int] = {}
    counts = {}
    for old in order:
        sid = ids[old]
        if isinstance(sources[old], TableSource):
            inst = counts.get(sid[0], 0)
            counts[sid[0]] = inst + 1
            inst_map[sid] = inst

    def remap(c: ColumnRef) -> ColumnRef:
        new = inst_map.get((c.table, c.instance))
        return c if new is None else ColumnRef(c.table, c.column, new)

    attached: list[list[Condition]] = [[] for _ in order]
    for a, touched in zip(atoms, atom_sources):
        slot = max((new_pos[t] for t in touched), default=1)
        attached[max(slot, 1)].append(_orient(_map_cond(a, lambda x: x, remap), new_pos, pos_of))
    if any(not attached[k] for k in range(1, len(order))):
        return None

    joins = []
    for conds in attached[1:]:
        conds = [_canonical_cond(c) for c in conds]
        conds.sort(key=sort_key)
        joins.append(conds[0] if len(conds) == 1 else And(tuple(conds)))
    from_ = FromClause(tuple(sources[k] for k in order), tuple(joins))

    identity = lambda x: x  # noqa: E731
    return replace(
        q,
        select=tuple(_map_expr(e, identity, remap) for e in q.select),
        from_=from_,
        where=_map_cond(q.where, identity, remap),
        group_by=tuple(_map_expr(e, identity, remap) for e in q.group_by),
        having=_map_cond(q.having, identity, remap),
        order_by=tuple(OrderItem(_map_expr(o.expr, identity, remap), o.direction) for o in q.order_by),
    )


def _orient(c: Condition, new_pos: dict, pos_of: dict) -> Condition:
    if not (isinstance(c, Predicate) and c.op == "=" and isinstance(c.left, ColumnRef) and isinstance(c.right, ColumnRef)):
        return c

    def key(r: ColumnRef):
        return (new_pos.get(pos_of.get((r.table, r.instance)), -1), sort_key(r))

    if key(c.right) < key(c.left):
        return Predicate(c.right, "=", c.left)
    return c


def normalize_sql(q: Query) -> Query:
    """Canonical, idempotent form of ``q`` (also accepts SSQL trees)."""
    q = replace(
        q,
        select=tuple(_map_expr(e, normalize_sql, lambda c: c) for e in q.select),
        from_=FromClause(
            tuple(SubquerySource(normalize_sql(s.query)) if isinstance(s, SubquerySource) else s for s in q.from_.sources),
            q.from_.joins,
        ),
        where=_map_cond(q.where, normalize_sql, lambda c: c),
        having=_map_cond(q.having, normalize_sql, lambda c: c),
        order_by=tuple(OrderItem(_map_expr(o.expr, normalize_sql, lambda c: c), o.direction) for o in q.order_by),
        set_query=normalize_sql(q.set_query) if q.set_query is not None else None,
    )
    best = _finish(_canonical_from(q) or q)
    # equal-role self-join instances tie in the BFS; pick the numbering with the smallest key
    for mapping in _instance_mappings(q):
        cand = _canonical_from(_relabel(q, mapping))
        if cand is not None:
            cand = _finish(cand)
            if sort_key(cand) < sort_key(best):
                best = cand
    return best


def _finish(q: Query) -> Query:
    return replace(q, where=_canonical_cond(q.where), having=_canonical_cond(q.having))


def _instance_mappings(q: Query, limit: int = 720) -> list[dict[tuple[str, int], int]]:
    counts: dict[str, int] = {}
    for t in q.tables():
        counts[t] = counts.get(t, 0) + 1
    repeated = [(t, n) for t, n in sorted(counts.items()) if n > 1]
    if not repeated or not q.from_.joins:
        return []
    per_table = [[{(t, k): p for k, p in enumerate(perm)} for perm in permutations(range(n))] for t, n in repeated]
    if prod(len(options) for options in per_table) > limit:
        return []
    out = []
    for combo in product(*per_table):
        mapping = {k: v for part in combo for k, v in part.items()}
        if any(k[1] != v for k, v in mapping.items()):
            out.append(mapping)
    return out


def _relabel(q: Query, mapping: dict[tuple[str, int], int]) -> Query:
    def remap(c: ColumnRef) -> ColumnRef:
        new = mapping.get((c.table, c.instance))
        return c if new is None else ColumnRef(c.table, c.column, new)

    identity = lambda x: x  # noqa: E731
    return replace(
        q,
        select=tuple(_map_expr(e, identity, remap) for e in q.select),
        from_=FromClause(q.from_.sources, tuple(_map_cond(j, identity, remap) for j in q.from_.joins)),
        where=_map_cond(q.where, identity, remap),
        group_by=tuple(_map_expr(e, identity, remap) for e in q.group_by),
        having=_map_cond(q.having, identity, remap),
        order_by=tuple(OrderItem(_map_expr(o.expr, identity, remap), o.direction) for o in q.order_by),
    )
