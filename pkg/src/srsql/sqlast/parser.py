"""Recursive-descent parser for Spider SQL and SSQL.

Parsing runs in two passes.  The syntactic pass builds a tree whose column
leaves are unresolved ``_Name`` nodes and whose FROM entries still carry
aliases; the resolver then binds every name against the schema, innermost
query block first.  Keeping the passes apart means a malformed query always
reports a syntax error before any schema error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import (
    AmbiguousColumn,
    SQLSyntaxError,
    UnknownColumn,
    UnknownFusedToken,
    UnknownTable,
)
from ..schema import Schema
from .lexer import Token, tokenize
from .nodes import (
    AGGREGATES,
    And,
    Aggregate,
    BinaryOp,
    ColumnRef,
    Condition,
    Expr,
    FromClause,
    Literal,
    Or,
    OrderItem,
    Predicate,
    Query,
    SET_OPS,
    SsqlQuery,
    Star,
    Subquery,
    SubquerySource,
    TableSource,
)

_COMPARE_OPS = ("=", "!=", "<", ">", "<=", ">=")
_CLAUSE_END = ("where", "group", "having", "order", "limit", *SET_OPS)


@dataclass(frozen=True)
class _Name:
    qualifier: str | None
    name: str
    pos: int
    quoted: bool = False


@dataclass(frozen=True)
class _RawTable:
    name: str
    alias: str | None
    pos: int


@dataclass(frozen=True)
class _RawSubquery:
    query: Query
    alias: str | None
    pos: int


class _Parser:
    def __init__(self, text: str, ssql: bool):
        self.tokens = tokenize(text)
        self.i = 0
        self.ssql = ssql

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "kw" and self.tok.value in words

    def accept(self, kind: str, value: str | None = None) -> Token | None:
        if self.at(kind, value):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, value: str | None = None) -> Token:
        t = self.accept(kind, value)
        if t is None:
            self.fail([value or kind])
        return t

    def fail(self, expected, message: str | None = None):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.value)
        raise SQLSyntaxError(message or f"unexpected {found}", t.pos, expected)

    # -- statements --------------------------------------------------------

    def statement(self) -> Query:
        q = self.query()
        self.accept("op", ";")
        if not self.at("eof"):
            self.fail(["end of input"])
        return q

    def query(self) -> Query:
        q = self.select_core()
        if self.at_kw(*SET_OPS):
            op = self.tok.value
            self.i += 1
            q = replace(q, set_op=op, set_query=self.query())
        return q

    def select_core(self) -> Query:
        self.expect("kw", "select")
        distinct = bool(self.accept("kw", "distinct"))
        if self.at_kw("from"):
            self.fail(["select item"], "empty select list")
        items = [self.expr(star_ok=True)]
        while self.accept("op", ","):
            items.append(self.expr(star_ok=True))
        self.expect("kw", "from")
        from_ = self.from_clause()
        where = having = None
        group_by: list = []
        order_by: list = []
        limit = None
        if self.accept("kw", "where"):
            where = self.condition()
        if self.accept("kw", "group"):
            self.expect("kw", "by")
            group_by.append(self.group_item())
            while self.accept("op", ","):
                group_by.append(self.group_item())
        if self.accept("kw", "having"):
            having = self.condition()
        if self.accept("kw", "order"):
            self.expect("kw", "by")
            order_by.append(self.order_item())
            while self.accept("op", ","):
                order_by.append(self.order_item())
        if self.accept("kw", "limit"):
            t = self.tok
            if t.kind != "number" or not t.value.isdigit():
                self.fail(["integer"])
            self.i += 1
            limit = int(t.value)
        cls = SsqlQuery if self.ssql else Query
        return cls(
            select=tuple(items),
            from_=from_,
            distinct=distinct,
            where=where,
            group_by=tuple(group_by),
            having=having,
            order_by=tuple(order_by),
            limit=limit,
        )

    def group_item(self):
        t = self.tok
        e = self.expr()
        if not isinstance(e, _Name):
            raise SQLSyntaxError("GROUP BY accepts column references only", t.pos, ["column"])
        return e

    def order_item(self) -> OrderItem:
        e = self.expr()
        direction = "asc"
        if self.at_kw("asc", "desc"):
            direction = self.tok.value
            self.i += 1
        return OrderItem(e, direction)

    # -- FROM --------------------------------------------------------------

    def from_clause(self) -> FromClause:
        sources = [self.source()]
        joins = []
        if self.ssql:
            while self.accept("op", ","):
                sources.append(self.source())
            if self.at_kw("join", "on", "as"):
                self.fail(["',' or clause keyword"], f"{self.tok.value.upper()} is not allowed in SSQL")
        else:
            while self.accept("kw", "join"):
                sources.append(self.source())
                if not self.at_kw("on"):
                    self.fail(["on"], "JOIN requires an ON condition")
                self.i += 1
                joins.append(self.condition())
            if self.at("op", ","):
                self.fail(["join"], "comma joins are not part of the dialect; use JOIN ... ON")
        return FromClause(tuple(sources), tuple(joins))

    def source(self):
        pos = self.tok.pos
        if self.accept("op", "("):
            q = self.query()
            self.expect("op", ")")
            return _RawSubquery(q, self.alias(), pos)
        name = self.identifier()
        return _RawTable(name, self.alias(), pos)

    def alias(self) -> str | None:
        if self.ssql:
            if self.at_kw("as") or self.at("ident"):
                self.fail(["',' or clause keyword"], "aliases are not allowed in SSQL")
            return None
        if self.accept("kw", "as"):
            return self.identifier()
        if self.at("ident"):
            return self.identifier()
        return None

    def identifier(self) -> str:
        t = self.tok
        if t.kind == "ident":
            self.i += 1
            return t.value
        if t.kind == "qident":
            self.i += 1
            return t.value.lower()
        self.fail(["identifier"])

    # -- conditions ----------------------------------------------------------

    def condition(self) -> Condition:
        children = [self.conjunction()]
        while self.accept("kw", "or"):
            children.append(self.conjunction())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def conjunction(self) -> Condition:
        children = [self.atom()]
        while self.accept("kw", "and"):
            children.append(self.atom())
        return children[0] if len(children) == 1 else And(tuple(children))

    def atom(self) -> Condition:
        if self.at("op", "(") and not (self.peek().kind == "kw" and self.peek().value == "select"):
            save = self.i
            try:
                self.i += 1
                inner = self.condition()
                self.expect("op", ")")
            except SQLSyntaxError:
                self.i = save
            else:
                t = self.tok
                # "(a + b) > 1" opens with a parenthesised expression, not a condition
                if not (t.kind == "op" and t.value in (*_COMPARE_OPS, "+", "-", "*", "/")) and not (
                    t.kind == "kw" and t.value in ("like", "in", "not", "between")
                ):
                    return inner
                self.i = save
        return self.predicate()

    def predicate(self) -> Predicate:
        left = self.expr()
        t = self.tok
        if t.kind == "op" and t.value in _COMPARE_OPS:
            self.i += 1
            return Predicate(left, t.value, self.expr())
        if self.accept("kw", "between"):
            low = self.expr()
            self.expect("kw", "and")
            return Predicate(left, "between", low, self.expr())
        negate = bool(self.accept("kw", "not"))
        if self.accept("kw", "like"):
            return Predicate(left, "not like" if negate else "like", self.expr())
        if self.accept("kw", "in"):
            return Predicate(left, "not in" if negate else "in", self.expr())
        self.fail(["like", "in"] if negate else [*_COMPARE_OPS, "between", "like", "in", "not"])

    # -- expressions ---------------------------------------------------------

    def expr(self, star_ok: bool = False, in_agg: bool = False) -> Expr:
        left = self.term(star_ok, in_agg)
        while self.at("op", "+") or self.at("op", "-"):
            op = self.tok.value
            self.i += 1
            left = BinaryOp(op, left, self.term(False, in_agg))
        return left

    def term(self, star_ok: bool, in_agg: bool) -> Expr:
        left = self.factor(star_ok, in_agg)
        while self.at("op", "*") or self.at("op", "/"):
            op = self.tok.value
            self.i += 1
            left = BinaryOp(op, left, self.factor(False, in_agg))
        return left

    def factor(self, star_ok: bool, in_agg: bool) -> Expr:
        t = self.tok
        if t.kind == "op" and t.value == "*":
            if not star_ok:
                self.fail(["expression"], "'*' is only allowed as a select item or count argument")
            self.i += 1
            return Star()
        if t.kind == "op" and t.value == "(":
            self.i += 1
            if self.at_kw("select"):
                q = self.query()
                self.expect("op", ")")
                return Subquery(q)
            e = self.expr(in_agg=in_agg)
            self.expect("op", ")")
            return e
        if t.kind == "op" and t.value == "-" and self.peek().kind == "number":
            self.i += 2
            return Literal("-" + self.tokens[self.i - 1].value, "number")
        if t.kind == "number":
            self.i += 1
            return Literal(t.value, "number")
        if t.kind == "string":
            self.i += 1
            return Literal(t.value, "string")
        if t.kind == "ident" and t.value in AGGREGATES and self.peek().kind == "op" and self.peek().value == "(":
            if in_agg:
                raise SQLSyntaxError("aggregate functions cannot be nested", t.pos)
            self.i += 2
            distinct = bool(self.accept("kw", "distinct"))
            arg = self.expr(star_ok=t.value == "count" and not distinct, in_agg=True)
            self.expect("op", ")")
            return Aggregate(t.value, arg, distinct)
        if t.kind in ("ident", "qident"):
            return self.column_name()
        self.fail(["expression"])

    def column_name(self) -> _Name:
        t = self.tok
        self.i += 1
        first = t.value.lower() if t.kind == "ident" else t.value
        if self.at("op", ".") and self.peek().kind in ("ident", "qident"):
            self.i += 1
            col = self.tok.value.lower()
            self.i += 1
            return _Name(first.lower(), col, t.pos)
        if self.ssql and t.kind == "ident":
            raise SQLSyntaxError(f"bare column {t.value!r}; SSQL needs fused table.column tokens", t.pos, ["table.column"])
        return _Name(None, first, t.pos, quoted=t.kind == "qident")


# -- resolution ------------------------------------------------------------


@dataclass
class _Scope:
    # (alias, table or None for a derived table, instance)
    entries: list[tuple[str | None, str | None, int]]


class _Resolver:
    def __init__(self, schema: Schema, ssql: bool):
        self.schema = schema
        self.ssql = ssql

    def query(self, raw: Query, outer: list[_Scope]) -> Query:
        sources, scope = self.sources(raw.from_.sources, outer)
        stack = outer + [scope]
        joins = tuple(self.cond(c, stack) for c in raw.from_.joins)
        resolved = replace(
            raw,
            select=tuple(self.expr(e, stack) for e in raw.select),
            from_=FromClause(sources, joins),
            where=self.cond(raw.where, stack),
            group_by=tuple(self.expr(e, stack) for e in raw.group_by),
            having=self.cond(raw.having, stack),
            order_by=tuple(OrderItem(self.expr(o.expr, stack), o.direction) for o in raw.order_by),
            set_query=self.query(raw.set_query, outer) if raw.set_query is not None else None,
        )
        return resolved

    def sources(self, raw_sources, outer):
        out = []
        entries: list[tuple[str | None, str | None, int]] = []
        counts: dict[str, int] = {}
        aliases: set[str] = set()
        for src in raw_sources:
            if isinstance(src, _RawSubquery):
                out.append(SubquerySource(self.query(src.query, outer)))
                entries.append((src.alias, None, 0))
            else:
                if not self.schema.has_table(src.name):
                    err = UnknownFusedToken if self.ssql else UnknownTable
                    raise err(f"unknown table {src.name!r} in {self.schema.db_id}")
                table = src.name.lower()
                if self.ssql and table in counts:
                    raise SQLSyntaxError(f"table {table!r} listed twice", src.pos)
                inst = counts.get(table, 0)
                counts[table] = inst + 1
                out.append(TableSource(table))
                entries.append((src.alias, table, inst))
            if src.alias is not None:
                if src.alias in aliases:
                    raise SQLSyntaxError(f"duplicate alias {src.alias!r}", src.pos)
                aliases.add(src.alias)
        if self.ssql:
            rank = self.schema.table_index
            tables = sorted((s for s in out if isinstance(s, TableSource)), key=lambda s: rank(s.table))
            out = tables + [s for s in out if isinstance(s, SubquerySource)]
        return tuple(out), _Scope(entries)

    def cond(self, c, stack):
        if c is None:
            return None
        if isinstance(c, Predicate):
            return Predicate(
                self.expr(c.left, stack),
                c.op,
                self.expr(c.right, stack),
                self.expr(c.upper, stack) if c.upper is not None else None,
            )
        return type(c)(tuple(self.cond(ch, stack) for ch in c.children))

    def expr(self, e, stack):
        if isinstance(e, _Name):
            return self.name(e, stack)
        if isinstance(e, Aggregate):
            return Aggregate(e.func, self.expr(e.arg, stack), e.distinct)
        if isinstance(e, BinaryOp):
            return BinaryOp(e.op, self.expr(e.left, stack), self.expr(e.right, stack))
        if isinstance(e, Subquery):
            return Subquery(self.query(e.query, stack))
        return e

    def name(self, n: _Name, stack: list[_Scope]):
        if self.ssql:
            return self.fused(n, stack)
        if n.qualifier is not None:
            return self.qualified(n, stack)
        for scope in reversed(stack):
            owners = [
                (table, inst)
                for _, table, inst in scope.entries
                if table is not None and self.schema.has_column(table, n.name)
            ]
            if len(owners) > 1:
                raise AmbiguousColumn(
                    f"column {n.name!r} matches " + ", ".join(f"{t}#{i}" for t, i in owners)
                )
            if owners:
                table, inst = owners[0]
                return ColumnRef(table, n.name, inst)
        if n.quoted:
            return Literal(n.name, "string")  # SQLite falls back to a string for unknown "..." names
        raise UnknownColumn(f"unknown column {n.name!r} in {self.schema.db_id}")

    def qualified(self, n: _Name, stack: list[_Scope]) -> ColumnRef:
        hit = None
        for scope in reversed(stack):
            for alias, table, inst in scope.entries:
                if alias == n.qualifier:
                    hit = (table, inst)
                    break
            if hit:
                break
        if hit is None:
            for scope in reversed(stack):
                matches = [(t, i) for _, t, i in scope.entries if t == n.qualifier]
                if len(matches) > 1:
                    raise AmbiguousColumn(f"table {n.qualifier!r} appears more than once; use its alias")
                if matches:
                    hit = matches[0]
                    break
        if hit is None:
            raise UnknownTable(f"unknown table or alias {n.qualifier!r}")
        table, inst = hit
        if table is None:
            raise UnknownColumn(f"columns of derived table {n.qualifier!r} cannot be referenced")
        if not self.schema.has_column(table, n.name):
            raise UnknownColumn(f"table {table!r} has no column {n.name!r}")
        return ColumnRef(table, n.name, inst)

    def fused(self, n: _Name, stack: list[_Scope]):
        if n.qualifier is None:
            return Literal(n.name, "string")
        if not self.schema.has_table(n.qualifier) or not self.schema.has_column(n.qualifier, n.name):
            raise UnknownFusedToken(f"{n.qualifier}.{n.name} is not a column of {self.schema.db_id}")
        return ColumnRef(n.qualifier, n.name, 0)


def parse_sql(text: str, schema: Schema) -> Query:
    """Parse Spider-dialect SQL and resolve every reference against ``schema``."""
    if not text or not text.strip():
        raise SQLSyntaxError("empty query", 0, ["select"])
    raw = _Parser(text, ssql=False).statement()
    return _Resolver(schema, ssql=False).query(raw, [])


def parse_ssql_text(text: str, schema: Schema) -> SsqlQuery:
    if not text or not text.strip():
        raise SQLSyntaxError("empty query", 0, ["select"])
    raw = _Parser(text, ssql=True).statement()
    return _Resolver(schema, ssql=True).query(raw, [])
