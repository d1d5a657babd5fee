from __future__ import annotations

import pytest

from srsql.errors import AmbiguousColumn, SQLSyntaxError, UnknownColumn, UnknownTable
from srsql.sqlast import (
    Aggregate,
    And,
    ColumnRef,
    FromClause,
    Literal,
    Or,
    OrderItem,
    Predicate,
    Query,
    Star,
    Subquery,
    SubquerySource,
    TableSource,
    normalize_sql,
    parse_sql,
    print_sql,
)
from srsql.sqlast.lexer import tokenize

JOIN_SQL = (
    "SELECT T1.name FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.singer_id = T2.singer_id "
    "JOIN concert AS T3 ON T2.concert_id = T3.concert_id WHERE T3.year = 2014"
)


class TestLexer:
    def test_token_kinds(self):
        kinds = [t.kind for t in tokenize("SELECT a, 'x' FROM t WHERE b <> 1.5;")]
        assert kinds[-1] == "eof"
        assert "string" in kinds and "number" in kinds

    def test_not_equal_spelling(self):
        assert [t.value for t in tokenize("a <> b") if t.kind == "op"] == ["!="]

    def test_escaped_quote(self):
        [tok] = [t for t in tokenize("'it''s'") if t.kind == "string"]
        assert tok.value == "it's"

    def test_unterminated_string(self):
        with pytest.raises(SQLSyntaxError):
            tokenize("select 'abc")


class TestParse:
    def test_count_star(self, concert):
        q = parse_sql("SELECT count(*) FROM singer", concert)
        assert q.select == (Aggregate("count", Star()),)
        assert q.from_ == FromClause((TableSource("singer"),))

    def test_aliases_resolve(self, concert):
        q = parse_sql("SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.concert_id", concert)
        assert q.from_.sources == (TableSource("singer"), TableSource("concert"))
        assert q.from_.joins == (Predicate(ColumnRef("singer", "singer_id"), "=", ColumnRef("concert", "concert_id")),)
        assert q.select == (ColumnRef("singer", "name"),)

    def test_empty_select(self, concert):
        with pytest.raises(SQLSyntaxError) as info:
            parse_sql("SELECT FROM x", concert)
        assert info.value.position == 7

    def test_error_lists_expected_tokens(self, concert):
        with pytest.raises(SQLSyntaxError) as info:
            parse_sql("SELECT name singer", concert)
        assert info.value.expected

    def test_unknown_table(self, concert):
        with pytest.raises(UnknownTable):
            parse_sql("SELECT a FROM nosuch", concert)

    def test_unknown_column(self, concert):
        with pytest.raises(UnknownColumn):
            parse_sql("SELECT nosuch FROM singer", concert)

    def test_ambiguous_bare_column(self, concert):
        with pytest.raises(AmbiguousColumn):
            parse_sql(
                "SELECT singer_id FROM singer AS T1 JOIN singer_in_concert AS T2 ON T1.singer_id = T2.singer_id",
                concert,
            )

    def test_case_insensitive(self, concert):
        a = parse_sql("select NAME from SINGER where Age > 3", concert)
        b = parse_sql("SELECT name FROM singer WHERE age > 3", concert)
        assert a == b

    def test_literals_keep_case(self, concert):
        q = parse_sql("SELECT name FROM singer WHERE country = \"France\"", concert)
        assert q.where.right == Literal("France", "string")

    def test_double_quoted_identifier(self, concert):
        q = parse_sql('SELECT "name" FROM singer', concert)
        assert q.select == (ColumnRef("singer", "name"),)

    def test_between_and_precedence(self, concert):
        q = parse_sql("SELECT name FROM singer WHERE age BETWEEN 1 AND 5 OR age > 9 AND country = 'x'", concert)
        assert isinstance(q.where, Or)
        first, second = q.where.children
        assert first.op == "between" and first.upper == Literal("5", "number")
        assert isinstance(second, And)

    def test_parenthesised_condition(self, concert):
        q = parse_sql("SELECT name FROM singer WHERE (age > 1 OR age < 0) AND country = 'x'", concert)
        assert isinstance(q.where, And) and isinstance(q.where.children[0], Or)

    def test_subqueries_everywhere(self, concert):
        q = parse_sql(
            "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert) "
            "EXCEPT SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)",
            concert,
        )
        assert isinstance(q.where.right, Subquery)
        assert q.set_op == "except"
        assert isinstance(q.set_query.where.right, Subquery)

    def test_from_subquery(self, concert):
        q = parse_sql("SELECT count(*) FROM (SELECT name FROM singer)", concert)
        assert isinstance(q.from_.sources[0], SubquerySource)

    def test_group_order_limit(self, concert):
        q = parse_sql(
            "SELECT country , count(*) FROM singer GROUP BY country HAVING count(*) > 1 ORDER BY count(*) DESC LIMIT 3",
            concert,
        )
        assert q.group_by == (ColumnRef("singer", "country"),)
        assert q.order_by == (OrderItem(Aggregate("count", Star()), "desc"),)
        assert q.limit == 3

    def test_count_distinct(self, concert):
        q = parse_sql("SELECT count(DISTINCT country) FROM singer", concert)
        assert q.select == (Aggregate("count", ColumnRef("singer", "country"), True),)

    def test_join_requires_on(self, concert):
        with pytest.raises(SQLSyntaxError):
            parse_sql("SELECT T1.name FROM singer AS T1 JOIN concert AS T2", concert)

    def test_self_join_instances(self, schemas):
        q = parse_sql(
            "SELECT T2.name FROM Friend AS T1 JOIN Highschooler AS T2 ON T1.student_id = T2.id "
            "JOIN Highschooler AS T3 ON T1.friend_id = T3.id WHERE T3.name = 'Kyle'",
            schemas["network_1"],
        )
        assert q.select == (ColumnRef("highschooler", "name", 0),)
        assert q.where.left == ColumnRef("highschooler", "name", 1)

    def test_trailing_semicolon(self, concert):
        assert parse_sql("SELECT name FROM singer;", concert) == parse_sql("SELECT name FROM singer", concert)

    def test_correlated_reference(self, concert):
        q = parse_sql(
            "SELECT T1.name FROM singer AS T1 WHERE T1.age > (SELECT avg(age) FROM singer AS T2 "
            "WHERE T2.country = T1.country)",
            concert,
        )
        inner = q.where.right.query
        assert inner.where.right == ColumnRef("singer", "country")


class TestPrint:
    def test_count_star(self, concert):
        assert print_sql(parse_sql("SELECT count(*) FROM singer", concert)) == "select count(*) from singer"

    def test_join_form(self, concert):
        text = print_sql(parse_sql(JOIN_SQL, concert))
        assert text == (
            "select t1.name from singer as t1 join singer_in_concert as t2 on t1.singer_id = t2.singer_id "
            "join concert as t3 on t2.concert_id = t3.concert_id where t3.year = 2014"
        )

    def test_nested_conditions_get_parentheses(self, concert):
        sql = "SELECT name FROM singer WHERE (age > 1 OR age < 0) AND country = 'x'"
        text = print_sql(parse_sql(sql, concert))
        assert "( age > 1 or age < 0 )" in text

    def test_round_trip_on_corpus(self, corpus, schemas):
        for entry in corpus:
            schema = schemas[entry.db_id]
            first = parse_sql(entry.sql, schema)
            assert parse_sql(print_sql(first), schema) == first, entry.id

    def test_literal_quotes_normalised(self, concert):
        text = print_sql(parse_sql('SELECT name FROM singer WHERE country = "it\'s"', concert))
        assert text.endswith("country = 'it''s'")


class TestNormalize:
    def test_conjunct_order(self, concert):
        a = parse_sql("SELECT name FROM singer WHERE age = 1 AND country = 'x'", concert)
        b = parse_sql("SELECT name FROM singer WHERE country = 'x' AND age = 1", concert)
        assert a != b
        assert normalize_sql(a) == normalize_sql(b)

    def test_idempotent_on_corpus(self, corpus, schemas):
        for entry in corpus:
            n = normalize_sql(parse_sql(entry.sql, schemas[entry.db_id]))
            assert normalize_sql(n) == n, entry.id

    def test_order_by_untouched(self, concert):
        q = parse_sql("SELECT name FROM singer ORDER BY country, age DESC", concert)
        assert normalize_sql(q).order_by == q.order_by

    def test_join_order_canonical(self, concert):
        a = parse_sql(JOIN_SQL, concert)
        b = parse_sql(
            "SELECT T3.name FROM concert AS T1 JOIN singer_in_concert AS T2 ON T2.concert_id = T1.concert_id "
            "JOIN singer AS T3 ON T3.singer_id = T2.singer_id WHERE T1.year = 2014",
            concert,
        )
        assert normalize_sql(a) == normalize_sql(b)

    def test_self_join_instances_renumbered(self, schemas):
        net = schemas["network_1"]
        a = parse_sql(
            "SELECT T2.name FROM Friend AS T1 JOIN Highschooler AS T2 ON T1.student_id = T2.id "
            "JOIN Highschooler AS T3 ON T1.friend_id = T3.id",
            net,
        )
        b = parse_sql(
            "SELECT T3.name FROM Friend AS T1 JOIN Highschooler AS T2 ON T1.friend_id = T2.id "
            "JOIN Highschooler AS T3 ON T1.student_id = T3.id",
            net,
        )
        assert normalize_sql(a) == normalize_sql(b)

    def test_preserves_print_parse_class(self, corpus, schemas):
        for entry in corpus:
            schema = schemas[entry.db_id]
            n = normalize_sql(parse_sql(entry.sql, schema))
            assert normalize_sql(parse_sql(print_sql(n), schema)) == n, entry.id

    def test_nested_and_flattened(self):
        p = [Predicate(ColumnRef("t", c), "=", Literal("1", "number")) for c in "abc"]
        q1 = Query((Star(),), FromClause((TableSource("t"),)), where=And((p[0], And((p[1], p[2])))))
        q2 = Query((Star(),), FromClause((TableSource("t"),)), where=And((p[2], p[1], p[0])))
        assert normalize_sql(q1) == normalize_sql(q2)
