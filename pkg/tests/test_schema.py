from __future__ import annotations

import itertools
import json
import random

import pytest

from srsql import bundled_path
from srsql.errors import DisconnectedTerminals, MalformedSchemaFile, UnknownDbId
from srsql.schema import (
    Column,
    Edge,
    JoinPlan,
    Node,
    Schema,
    Table,
    build_graph,
    join_plan_from_tree,
    load_schema,
    steiner_tree,
)

from ._oracles import min_cover_nodes, plain_graph, random_schema


def make_schema(spec: dict[str, list[str]], fks: list[tuple[str, str]], db_id: str = "test") -> Schema:
    tables = tuple(Table(t, tuple(Column(c, t) for c in cols)) for t, cols in spec.items())

    def col(ref: str) -> Column:
        t, c = ref.split(".")
        return Column(c, t)

    return Schema(db_id, tables, tuple((col(a), col(b)) for a, b in fks))


@pytest.fixture
def chain():
    return make_schema(
        {"a": ["id", "b_id"], "b": ["id", "c_id"], "c": ["id", "name"]},
        [("a.b_id", "b.id"), ("b.c_id", "c.id")],
    )


@pytest.fixture
def star():
    return make_schema(
        {
            "d1": ["id", "name"],
            "d2": ["id", "year"],
            "d3": ["id", "label"],
            "j": ["d1_id", "d2_id", "d3_id"],
        },
        [("j.d1_id", "d1.id"), ("j.d2_id", "d2.id"), ("j.d3_id", "d3.id")],
    )


def write_tables(tmp_path, entries) -> str:
    path = tmp_path / "tables.json"
    path.write_text(json.dumps(entries))
    return str(path)


def spider_entry(**overrides) -> dict:
    entry = {
        "db_id": "tiny",
        "table_names_original": ["A", "B"],
        "column_names_original": [[-1, "*"], [0, "id"], [0, "b_id"], [1, "id"]],
        "column_types": ["text", "number", "number", "number"],
        "foreign_keys": [[2, 3]],
        "primary_keys": [1, 3],
    }
    entry.update(overrides)
    return entry


class TestLoadSchema:
    def test_bundled_concert_singer_matches_raw_entry(self):
        raw = {e["db_id"]: e for e in json.loads(bundled_path("tables.json").read_text())}["concert_singer"]
        schema = load_schema(bundled_path("tables.json"), "concert_singer")
        assert [t.name for t in schema.tables] == raw["table_names_original"]
        assert sum(len(t.columns) for t in schema.tables) == len(raw["column_names_original"]) - 1
        assert len(schema.foreign_keys) == len(raw["foreign_keys"])
        for (a, b), (ia, ib) in zip(schema.foreign_keys, raw["foreign_keys"]):
            ta, na = raw["column_names_original"][ia]
            tb, nb = raw["column_names_original"][ib]
            assert (a.table, a.name) == (raw["table_names_original"][ta], na)
            assert (b.table, b.name) == (raw["table_names_original"][tb], nb)

    def test_unknown_db_id(self):
        with pytest.raises(UnknownDbId):
            load_schema(bundled_path("tables.json"), "nonexistent")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_schema(tmp_path / "nope.json", "x")

    def test_dangling_foreign_key_index(self, tmp_path):
        path = write_tables(tmp_path, [spider_entry(foreign_keys=[[2, 999]])])
        with pytest.raises(MalformedSchemaFile, match="dangling"):
            load_schema(path, "tiny")

    def test_missing_field(self, tmp_path):
        entry = spider_entry()
        del entry["foreign_keys"]
        with pytest.raises(MalformedSchemaFile):
            load_schema(write_tables(tmp_path, [entry]), "tiny")

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(MalformedSchemaFile):
            load_schema(path, "tiny")

    def test_duplicate_table_case_insensitive(self, tmp_path):
        entry = spider_entry(table_names_original=["A", "a"])
        with pytest.raises(MalformedSchemaFile, match="duplicate"):
            load_schema(write_tables(tmp_path, [entry]), "tiny")

    def test_self_linking_foreign_key(self, tmp_path):
        with pytest.raises(MalformedSchemaFile, match="itself"):
            load_schema(write_tables(tmp_path, [spider_entry(foreign_keys=[[2, 2]])]), "tiny")

    def test_lookups_are_case_insensitive(self, tmp_path):
        schema = load_schema(write_tables(tmp_path, [spider_entry()]), "tiny")
        assert schema.has_table("a") and schema.has_column("A", "B_ID")
        assert schema.column("a", "ID").name == "id"
        assert schema.tables_with_column("id") == ["a", "b"]

    def test_composite_primary_keys(self, tmp_path):
        schema = load_schema(write_tables(tmp_path, [spider_entry(primary_keys=[[1, 2], 3])]), "tiny")
        assert [c.name for c in schema.primary_keys] == ["id", "b_id", "id"]

    def test_empty_table_rejected(self):
        with pytest.raises(MalformedSchemaFile):
            Table("t", ())


class TestBuildGraph:
    def test_one_table_three_columns(self):
        g = build_graph(make_schema({"t": ["a", "b", "c"]}, []))
        assert len(g.nodes) == 4
        assert [e.kind for e in g.edges] == ["membership"] * 3

    def test_two_tables_one_fk(self):
        g = build_graph(make_schema({"a": ["x", "p"], "b": ["y", "q"]}, [("a.x", "b.y")]))
        kinds = [e.kind for e in g.edges]
        assert len(g.nodes) == 6
        assert kinds.count("membership") == 4 and kinds.count("foreign_key") == 1

    def test_concert_singer_counts(self, concert):
        g = build_graph(concert)
        n_cols = sum(len(t.columns) for t in concert.tables)
        assert len(g.nodes) == len(concert.tables) + n_cols
        assert sum(e.kind == "membership" for e in g.edges) == n_cols
        assert sum(e.kind == "foreign_key" for e in g.edges) == len(concert.foreign_keys)

    def test_node_order_tables_then_columns(self, chain):
        g = build_graph(chain)
        assert g.nodes[:3] == [Node("a"), Node("b"), Node("c")]
        assert g.nodes[3:5] == [Node("a", "id"), Node("a", "b_id")]

    def test_no_duplicate_edges(self, schemas):
        for schema in schemas.values():
            g = build_graph(schema)
            keys = [frozenset((e.a, e.b)) for e in g.edges]
            assert len(keys) == len(set(keys))


class TestSteinerTree:
    def test_single_terminal(self, chain):
        assert steiner_tree(build_graph(chain), [Node("a")]) == frozenset()

    def test_chain_goes_through_middle(self, chain):
        g = build_graph(chain)
        tree = steiner_tree(g, [Node("a"), Node("c")])
        assert Node("b") in {n for e in tree for n in (e.a, e.b)}
        assert sum(e.kind == "foreign_key" for e in tree) == 2
        assert len(tree) == 6  # a - a.b_id - b.id - b - b.c_id - c.id - c

    def test_star_through_junction(self, star):
        g = build_graph(star)
        tree = steiner_tree(g, [Node("d1", "name"), Node("d2", "year")])
        nodes = {n for e in tree for n in (e.a, e.b)}
        assert {Node("d1"), Node("j"), Node("d2")} <= nodes
        assert Node("d3") not in nodes
        assert Edge(Node("d1"), Node("d1", "name"), "membership") in tree
        assert Edge(Node("d2"), Node("d2", "year"), "membership") in tree
        assert len(tree) == 8

    def test_disconnected(self, schemas):
        g = build_graph(schemas["store_split"])
        with pytest.raises(DisconnectedTerminals):
            steiner_tree(g, [Node("product"), Node("supplier")])

    def test_unknown_terminal(self, chain):
        with pytest.raises(ValueError, match="not a node"):
            steiner_tree(build_graph(chain), [Node("zzz")])

    def test_empty_terminals(self, chain):
        with pytest.raises(ValueError):
            steiner_tree(build_graph(chain), [])

    def test_tie_prefers_earlier_tables(self, schemas):
        # instructor and course connect via teaches or via department at equal cost
        g = build_graph(schemas["college_2"])
        tree = steiner_tree(g, [Node("instructor", "name"), Node("course", "title")])
        tables = {n.table for e in tree for n in (e.a, e.b)}
        assert tables == {"department", "instructor", "course"}

    def test_deterministic(self, schemas):
        g = build_graph(schemas["college_2"])
        terms = [Node("instructor"), Node("course"), Node("teaches", "year")]
        assert len({steiner_tree(g, terms) for _ in range(5)}) == 1

    def test_tree_is_acyclic_and_connected(self, schemas):
        g = build_graph(schemas["concert_singer"])
        tree = steiner_tree(g, [Node("singer", "name"), Node("stadium", "location")])
        nodes = {n for e in tree for n in (e.a, e.b)}
        assert len(tree) == len(nodes) - 1
        adj = {n: set() for n in nodes}
        for e in tree:
            adj[e.a].add(e.b)
            adj[e.b].add(e.a)
        seen, stack = set(), [next(iter(nodes))]
        while stack:
            cur = stack.pop()
            if cur not in seen:
                seen.add(cur)
                stack.extend(adj[cur])
        assert seen == nodes

    def test_heuristic_beyond_exact_envelope(self):
        # 7 terminals forces the path-merge heuristic; result must still span them
        spec = {f"t{k}": ["id", "nxt"] for k in range(9)}
        fks = [(f"t{k}.nxt", f"t{k + 1}.id") for k in range(8)]
        g = build_graph(make_schema(spec, fks))
        terms = [Node(f"t{k}", "id") for k in range(0, 9, 2)] + [Node("t1"), Node("t3")]
        tree = steiner_tree(g, terms)
        nodes = {n for e in tree for n in (e.a, e.b)}
        assert set(terms) <= nodes
        assert len(tree) == len(nodes) - 1


class TestSteinerAgainstBruteForce:
    def test_oracle_matches_naive_subset_search(self):
        # the oracle itself, cross-checked by plain subset enumeration on tiny graphs
        rng = random.Random(3)
        for k in range(30):
            schema = random_schema(rng, f"tiny{k}", max_tables=3)
            adj = plain_graph(schema)
            nodes = sorted(adj, key=str)
            for terms in itertools.combinations(nodes, 2):
                naive = None
                for size in range(2, len(nodes) + 1):
                    for subset in itertools.combinations(nodes, size):
                        s = set(subset)
                        if not set(terms) <= s:
                            continue
                        seen, stack = set(), [terms[0]]
                        while stack:
                            cur = stack.pop()
                            if cur not in seen:
                                seen.add(cur)
                                stack.extend(adj[cur] & s)
                        if seen == s:
                            naive = size
                            break
                    if naive:
                        break
                assert min_cover_nodes(adj, list(terms)) == naive

    @pytest.mark.parametrize("seed", range(10))
    def test_random_schemas(self, seed):
        rng = random.Random(seed)
        schema = random_schema(rng, f"r{seed}")
        adj, g = plain_graph(schema), build_graph(schema)
        universe = [Node(t.name) for t in schema.tables]
        for terms in itertools.chain.from_iterable(itertools.combinations(universe, k) for k in range(1, 5)):
            want = min_cover_nodes(adj, [tuple(n) for n in terms])
            if want is None:
                with pytest.raises(DisconnectedTerminals):
                    steiner_tree(g, list(terms))
            else:
                assert len(steiner_tree(g, list(terms))) == want - 1

    def test_monotone_under_supergraph(self):
        rng = random.Random(11)
        for k in range(20):
            schema = random_schema(rng, f"m{k}", max_tables=5)
            bigger = Schema(
                schema.db_id,
                schema.tables + (Table("hub", (Column("id", "hub"),)),),
                schema.foreign_keys + tuple((Column("id", "hub"), Column(t.columns[0].name, t.name)) for t in schema.tables),
            )
            small_g, big_g = build_graph(schema), build_graph(bigger)
            for terms in itertools.combinations([Node(t.name) for t in schema.tables], 2):
                try:
                    before = len(steiner_tree(small_g, list(terms)))
                except DisconnectedTerminals:
                    continue
                assert len(steiner_tree(big_g, list(terms))) <= before


class TestJoinPlan:
    def test_single_table(self, chain):
        g = build_graph(chain)
        plan = join_plan_from_tree(frozenset(), g, [Node("b")])
        assert plan == JoinPlan(("b",), ())

    def test_chain_plan(self, chain):
        g = build_graph(chain)
        terms = [Node("a"), Node("c")]
        plan = join_plan_from_tree(steiner_tree(g, terms), g, terms)
        assert plan.tables == ("a", "b", "c")
        assert plan.steps == (
            (Node("a", "b_id"), Node("b", "id")),
            (Node("b", "c_id"), Node("c", "id")),
        )

    def test_star_includes_junction(self, star):
        g = build_graph(star)
        terms = [Node("d1", "name"), Node("d2", "year")]
        plan = join_plan_from_tree(steiner_tree(g, terms), g, terms)
        assert plan.tables == ("d1", "j", "d2")
        assert len(plan.steps) == len(plan.tables) - 1

    def test_steps_equal_fk_edges(self, schemas):
        g = build_graph(schemas["concert_singer"])
        terms = [Node("singer", "name"), Node("stadium", "name")]
        tree = steiner_tree(g, terms)
        plan = join_plan_from_tree(tree, g, terms)
        assert len(plan.steps) == sum(e.kind == "foreign_key" for e in tree)
        for a, b in plan.steps:
            assert a.table in plan.tables and b.table in plan.tables

    def test_render(self, chain):
        g = build_graph(chain)
        terms = [Node("a"), Node("b")]
        text = join_plan_from_tree(steiner_tree(g, terms), g, terms).render()
        assert text == "tables: a, b\njoin: a.b_id = b.id"
