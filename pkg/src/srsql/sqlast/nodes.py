"""Immutable AST for the Spider SQL dialect and its SSQL variant.

Column references are stored resolved: ``ColumnRef(table, column, instance)``
names the schema table (lowercased) and which occurrence of that table in the
owning FROM clause it points at, so aliases never enter the tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

AGGREGATES = ("count", "sum", "avg", "min", "max")
COMPARISONS = ("=", "!=", "<", ">", "<=", ">=", "between", "like", "not like", "in", "not in")
ARITHMETIC = ("+", "-", "*", "/")
SET_OPS = ("intersect", "union", "except")


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class ColumnRef:
    table: str
    column: str
    instance: int = 0


@dataclass(frozen=True)
class Literal:
    text: str
    kind: str  # "number" | "string"


@dataclass(frozen=True)
class Aggregate:
    func: str
    arg: Expr
    distinct: bool = False


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Subquery:
    query: Query


Expr = Union[Star, ColumnRef, Literal, Aggregate, BinaryOp, Subquery]


@dataclass(frozen=True)
class Predicate:
    left: Expr
    op: str
    right: Expr
    upper: Expr | None = None  # second bound of BETWEEN


@dataclass(frozen=True)
class And:
    children: tuple[Condition, ...]


@dataclass(frozen=True)
class Or:
    children: tuple[Condition, ...]


Condition = Union[Predicate, And, Or]


@dataclass(frozen=True)
class TableSource:
    table: str


@dataclass(frozen=True)
class SubquerySource:
    query: Query


Source = Union[TableSource, SubquerySource]


@dataclass(frozen=True)
class FromClause:
    """``sources[0] JOIN sources[1] ON joins[0] JOIN ...``.

    SSQL blocks carry no join conditions: ``joins`` is empty and the sources
    form a plain list.
    """

    sources: tuple[Source, ...]
    joins: tuple[Condition, ...] = ()


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    direction: str = "asc"


@dataclass(frozen=True)
class Query:
    select: tuple[Expr, ...]
    from_: FromClause
    distinct: bool = False
    where: Condition | None = None
    group_by: tuple[ColumnRef, ...] = ()
    having: Condition | None = None
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None
    set_op: str | None = None
    set_query: Query | None = None

    def tables(self) -> list[str]:
        return [s.table for s in self.from_.sources if isinstance(s, TableSource)]


@dataclass(frozen=True)
class SsqlQuery(Query):
    """A query in the SSQL surface: fused column tokens, no joins, no aliases."""


SqlQuery = Query
