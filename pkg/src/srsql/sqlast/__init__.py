"""Spider-dialect SQL: parsing, canonical printing and normalization."""

from .nodes import (
    AGGREGATES,
    COMPARISONS,
    Aggregate,
    And,
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
    SqlQuery,
    SsqlQuery,
    Star,
    Subquery,
    SubquerySource,
    TableSource,
)
from .normalize import normalize_sql, sort_key
from .parser import parse_sql
from .printer import print_sql

__all__ = [
    "AGGREGATES",
    "COMPARISONS",
    "Aggregate",
    "And",
    "BinaryOp",
    "ColumnRef",
    "Condition",
    "Expr",
    "FromClause",
    "Literal",
    "Or",
    "OrderItem",
    "Predicate",
    "Query",
    "SqlQuery",
    "SsqlQuery",
    "Star",
    "Subquery",
    "SubquerySource",
    "TableSource",
    "normalize_sql",
    "parse_sql",
    "print_sql",
    "sort_key",
]
