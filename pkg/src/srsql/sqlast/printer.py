"""Canonical text for SQL and SSQL trees.

Output is lowercase with single spaces.  Multi-source SQL blocks alias their
sources ``t1..tn`` in FROM order; single-source blocks print bare column names.
SSQL always prints fused ``table.column`` tokens.
"""

from __future__ import annotations

from .nodes import (
    And,
    Aggregate,
    BinaryOp,
    ColumnRef,
    Condition,
    Expr,
    Literal,
    Or,
    Predicate,
    Query,
    Star,
    Subquery,
    TableSource,
)

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


class _Printer:
    def __init__(self, ssql: bool):
        self.ssql = ssql
        # per block: {(table, instance): qualifier or None for bare}
        self.scopes: list[dict[tuple[str, int], str | None]] = []

    def query(self, q: Query) -> str:
        sources = q.from_.sources
        qualifiers: dict[tuple[str, int], str | None] = {}
        seen: dict[str, int] = {}
        aliased = not self.ssql and len(sources) > 1
        for k, src in enumerate(sources, start=1):
            if isinstance(src, TableSource):
                inst = seen.get(src.table, 0)
                seen[src.table] = inst + 1
                qualifiers[(src.table, inst)] = f"t{k}" if aliased else (src.table if self.ssql else None)

        self.scopes.append(qualifiers)
        try:
            parts = ["select"]
            if q.distinct:
                parts.append("distinct")
            parts.append(" , ".join(self.expr(e) for e in q.select))
            parts += ["from", self.from_clause(q, aliased)]
            if q.where is not None:
                parts += ["where", self.cond(q.where)]
            if q.group_by:
                parts += ["group by", " , ".join(self.expr(e) for e in q.group_by)]
            if q.having is not None:
                parts += ["having", self.cond(q.having)]
            if q.order_by:
                items = [self.expr(o.expr) + (" desc" if o.direction == "desc" else "") for o in q.order_by]
                parts += ["order by", " , ".join(items)]
            if q.limit is not None:
                parts += ["limit", str(q.limit)]
        finally:
            self.scopes.pop()
        if q.set_query is not None:
            parts += [q.set_op, self.query(q.set_query)]
        return " ".join(parts)

    def from_clause(self, q: Query, aliased: bool) -> str:
        rendered = []
        for k, src in enumerate(q.from_.sources, start=1):
            text = src.table if isinstance(src, TableSource) else f"( {self.query(src.query)} )"
            if aliased:
                text += f" as t{k}"
            rendered.append(text)
        if self.ssql:
            return " , ".join(rendered)
        out = rendered[0]
        for text, cond in zip(rendered[1:], q.from_.joins):
            out += f" join {text} on {self.cond(cond)}"
        return out

    def column(self, c: ColumnRef) -> str:
        if self.ssql:
            return f"{c.table}.{c.column}"
        for scope in reversed(self.scopes):
            if (c.table, c.instance) in scope:
                q = scope[(c.table, c.instance)]
                if q is None:
                    # bare names are safe only in the block that owns them
                    q = None if scope is self.scopes[-1] else c.table
                return c.column if q is None else f"{q}.{c.column}"
        return f"{c.table}.{c.column}"

    def expr(self, e: Expr) -> str:
        if isinstance(e, Star):
            return "*"
        if isinstance(e, ColumnRef):
            return self.column(e)
        if isinstance(e, Literal):
            if e.kind == "string":
                return "'" + e.text.replace("'", "''") + "'"
            return e.text
        if isinstance(e, Aggregate):
            return f"{e.func}({'distinct ' if e.distinct else ''}{self.expr(e.arg)})"
        if isinstance(e, BinaryOp):
            prec = _PRECEDENCE[e.op]
            left, right = self.expr(e.left), self.expr(e.right)
            if isinstance(e.left, BinaryOp) and _PRECEDENCE[e.left.op] < prec:
                left = f"({left})"
            if isinstance(e.right, BinaryOp) and _PRECEDENCE[e.right.op] <= prec:
                right = f"({right})"
            return f"{left} {e.op} {right}"
        if isinstance(e, Subquery):
            return f"( {self.query(e.query)} )"
        raise TypeError(f"not an expression: {e!r}")

    def cond(self, c: Condition) -> str:
        if isinstance(c, Predicate):
            if c.op == "between":
                return f"{self.expr(c.left)} between {self.expr(c.right)} and {self.expr(c.upper)}"
            return f"{self.expr(c.left)} {c.op} {self.expr(c.right)}"
        word = " and " if isinstance(c, And) else " or "
        parts = []
        for ch in c.children:
            text = self.cond(ch)
            # AND binds tighter than OR, so only same-kind nesting and OR-under-AND need parentheses
            if isinstance(ch, (And, Or)) and (type(ch) is type(c) or isinstance(ch, Or)):
                text = f"( {text} )"
            parts.append(text)
        return word.join(parts)


def print_sql(q: Query) -> str:
    return _Printer(ssql=False).query(q)


def print_ssql(q: Query) -> str:
    return _Printer(ssql=True).query(q)


def print_condition(c: Condition, ssql: bool = True) -> str:
    """Context-free rendering of a condition, used as a sort key."""
    return _Printer(ssql).cond(c)


def print_expr(e: Expr, ssql: bool = True) -> str:
    return _Printer(ssql).expr(e)
