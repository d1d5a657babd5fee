"""Spider-format schemas, the table/column graph, and Steiner-tree join recovery.

Graph nodes are tables and columns.  Each column hangs off its table through a
*membership* edge and each foreign-key pair adds a *foreign_key* edge between
the two column nodes, so joining two tables through a key costs three unit
edges (table - column - column - table).
"""

from __future__ import annotations

import heapq
import json
import os
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple

from .errors import DisconnectedTerminals, MalformedSchemaFile, UnknownDbId

TYPE_TAGS = ("text", "number", "time", "boolean", "others")

# exact Dreyfus-Wagner envelope, measured on the reduced graph
EXACT_MAX_TERMINALS = 6
EXACT_MAX_NODES = 40


@dataclass(frozen=True)
class Column:
    name: str
    table: str
    type_tag: str = "text"


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not self.name:
            raise MalformedSchemaFile("table name must be non-empty")
        if not self.columns:
            raise MalformedSchemaFile(f"table {self.name!r} has no columns")


class Node(NamedTuple):
    """A graph node: a table (``column is None``) or one of its columns.

    Names are stored lowercased; the same tuple doubles as a column reference
    in join plans.
    """

    table: str
    column: str | None = None

    @property
    def is_table(self) -> bool:
        return self.column is None

    def __str__(self) -> str:
        return self.table if self.column is None else f"{self.table}.{self.column}"


@dataclass(frozen=True)
class Schema:
    db_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[tuple[Column, Column], ...] = ()
    primary_keys: tuple[Column, ...] = ()
    _tables: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _columns: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for ti, table in enumerate(self.tables):
            key = table.name.lower()
            if key in self._tables:
                raise MalformedSchemaFile(f"{self.db_id}: duplicate table name {table.name!r}")
            self._tables[key] = ti
            cols: dict[str, int] = {}
            for ci, col in enumerate(table.columns):
                if not col.name:
                    raise MalformedSchemaFile(f"{self.db_id}: empty column name in {table.name!r}")
                if col.name.lower() in cols:
                    raise MalformedSchemaFile(
                        f"{self.db_id}: duplicate column {col.name!r} in table {table.name!r}"
                    )
                cols[col.name.lower()] = ci
            self._columns[key] = cols
        for a, b in self.foreign_keys:
            for col in (a, b):
                if not self.has_column(col.table, col.name):
                    raise MalformedSchemaFile(f"{self.db_id}: foreign key endpoint {col.table}.{col.name} unknown")
            if (a.table.lower(), a.name.lower()) == (b.table.lower(), b.name.lower()):
                raise MalformedSchemaFile(f"{self.db_id}: foreign key links {a.table}.{a.name} to itself")

    def has_table(self, name: str) -> bool:
        return name.lower() in self._tables

    def has_column(self, table: str, column: str) -> bool:
        return column.lower() in self._columns.get(table.lower(), {})

    def table(self, name: str) -> Table:
        return self.tables[self._tables[name.lower()]]

    def table_index(self, name: str) -> int:
        return self._tables[name.lower()]

    def column_index(self, table: str, column: str) -> int:
        return self._columns[table.lower()][column.lower()]

    def column(self, table: str, column: str) -> Column:
        return self.table(table).columns[self.column_index(table, column)]

    def tables_with_column(self, column: str) -> list[str]:
        """Lowercased names of every table owning ``column``, in schema order."""
        col = column.lower()
        return [t.name.lower() for t in self.tables if col in self._columns[t.name.lower()]]


def _schema_from_entry(entry: dict) -> Schema:
    try:
        db_id = entry["db_id"]
        table_names = entry["table_names_original"]
        column_names = entry["column_names_original"]
        column_types = entry.get("column_types", ["text"] * len(column_names))
        fk_pairs = entry["foreign_keys"]
        pk_entries = entry.get("primary_keys", [])
    except (KeyError, TypeError) as exc:
        raise MalformedSchemaFile(f"missing field {exc}") from None
    if len(column_types) != len(column_names):
        raise MalformedSchemaFile(f"{db_id}: column_types and column_names_original differ in length")

    per_table: list[list[Column]] = [[] for _ in table_names]
    flat: list[Column | None] = []
    for (ti, name), tag in zip(column_names, column_types):
        if ti == -1:
            flat.append(None)  # the synthetic "*" column
            continue
        if not 0 <= ti < len(table_names):
            raise MalformedSchemaFile(f"{db_id}: column {name!r} points at table index {ti}")
        col = Column(name, table_names[ti], tag if tag in TYPE_TAGS else "others")
        per_table[ti].append(col)
        flat.append(col)

    def resolve(idx) -> Column:
        if not isinstance(idx, int) or not 0 <= idx < len(flat) or flat[idx] is None:
            raise MalformedSchemaFile(f"{db_id}: dangling column index {idx!r}")
        return flat[idx]

    fks = []
    for pair in fk_pairs:
        if len(pair) != 2:
            raise MalformedSchemaFile(f"{db_id}: foreign key entry {pair!r} is not a pair")
        fks.append((resolve(pair[0]), resolve(pair[1])))
    pks = []
    for pk in pk_entries:
        # newer Spider releases encode composite keys as nested lists
        for idx in pk if isinstance(pk, list) else [pk]:
            pks.append(resolve(idx))
    tables = tuple(Table(name, tuple(cols)) for name, cols in zip(table_names, per_table))
    return Schema(db_id, tables, tuple(fks), tuple(pks))


def load_schemas(path: str | os.PathLike) -> dict[str, Schema]:
    """Load every database entry of a Spider ``tables.json`` file, keyed by db_id."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedSchemaFile(f"{path}: {exc}") from None
    if not isinstance(entries, list):
        raise MalformedSchemaFile(f"{path}: expected a JSON array of database entries")
    return {s.db_id: s for s in map(_schema_from_entry, entries)}


def load_schema(path: str | os.PathLike, db_id: str) -> Schema:
    schemas = load_schemas(path)
    if db_id not in schemas:
        raise UnknownDbId(db_id)
    return schemas[db_id]


# -- graph ---------------------------------------------------------------


class Edge(NamedTuple):
    a: Node
    b: Node
    kind: str  # "membership" | "foreign_key"


class SchemaGraph:
    """Undirected table/column graph with deterministic node numbering."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self.nodes: list[Node] = [Node(t.name.lower()) for t in schema.tables]
        for t in schema.tables:
            self.nodes.extend(Node(t.name.lower(), c.name.lower()) for c in t.columns)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.table_rank = {t.name.lower(): i for i, t in enumerate(schema.tables)}

        self.edges: list[Edge] = []
        seen: set[tuple[int, int]] = set()
        for t in schema.tables:
            tnode = Node(t.name.lower())
            for c in t.columns:
                self._add(Edge(tnode, Node(t.name.lower(), c.name.lower()), "membership"), seen)
        for a, b in schema.foreign_keys:
            na = Node(a.table.lower(), a.name.lower())
            nb = Node(b.table.lower(), b.name.lower())
            self._add(Edge(na, nb, "foreign_key"), seen)

        self.adj: list[list[int]] = [[] for _ in self.nodes]
        self.edge_of: dict[tuple[int, int], Edge] = {}
        for e in self.edges:
            i, j = self.index[e.a], self.index[e.b]
            self.adj[i].append(j)
            self.adj[j].append(i)
            self.edge_of[(min(i, j), max(i, j))] = e
        for nbrs in self.adj:
            nbrs.sort()

    def _add(self, edge: Edge, seen: set) -> None:
        i, j = self.index[edge.a], self.index[edge.b]
        if i > j:
            edge = Edge(edge.b, edge.a, edge.kind)
            i, j = j, i
        if (i, j) in seen:
            return
        seen.add((i, j))
        self.edges.append(edge)

    def owner(self, i: int) -> int:
        """Node index of the table owning node ``i``."""
        return self.index[Node(self.nodes[i].table)]

    def edge(self, i: int, j: int) -> Edge:
        return self.edge_of[(min(i, j), max(i, j))]

    def __len__(self) -> int:
        return len(self.nodes)


def build_graph(schema: Schema) -> SchemaGraph:
    return SchemaGraph(schema)


# -- Steiner tree --------------------------------------------------------

_INF = float("inf")


def _dreyfus_wagner(adj: dict[int, list[int]], terminals: list[int]):
    """Exact minimum Steiner tree for unit weights.

    ``adj`` maps node -> sorted neighbours and only contains allowed nodes.
    Returns ``(cost, edges)``; cost is ``inf`` when the terminals are split.
    """
    k = len(terminals)
    if k == 1:
        return 0, set()
    nodes = sorted(adj)
    full = (1 << k) - 1
    dp: list[dict[int, float]] = [dict.fromkeys(nodes, _INF) for _ in range(full + 1)]
    back: list[dict[int, tuple]] = [{} for _ in range(full + 1)]
    for i, t in enumerate(terminals):
        dp[1 << i][t] = 0
    for mask in range(1, full + 1):
        row = dp[mask]
        if mask & (mask - 1):
            low = mask & -mask
            for v in nodes:
                best = row[v]
                sub = (mask - 1) & mask
                while sub:
                    if sub & low:
                        c = dp[sub][v] + dp[mask ^ sub][v]
                        if c < best:
                            best = c
                            back[mask][v] = ("merge", sub)
                    sub = (sub - 1) & mask
                row[v] = best
        heap = [(row[v], v) for v in nodes if row[v] < _INF]
        heapq.heapify(heap)
        while heap:
            d, v = heapq.heappop(heap)
            if d > row[v]:
                continue
            for u in adj[v]:
                if d + 1 < row[u]:
                    row[u] = d + 1
                    back[mask][u] = ("edge", v)
                    heapq.heappush(heap, (d + 1, u))

    root = min(nodes, key=lambda v: (dp[full][v], v))
    cost = dp[full][root]
    if cost == _INF:
        return _INF, set()
    edges: set[tuple[int, int]] = set()
    stack = [(full, root)]
    while stack:
        mask, v = stack.pop()
        step = back[mask].get(v)
        if step is None:
            continue
        if step[0] == "edge":
            u = step[1]
            edges.add((min(u, v), max(u, v)))
            stack.append((mask, u))
        else:
            sub = step[1]
            stack.append((sub, v))
            stack.append((mask ^ sub, v))
    return cost, edges


def _bfs_path(adj: dict[int, list[int]], sources: Iterable[int], targets: set[int]):
    """Shortest path from any source to the nearest target (ties: lowest index)."""
    prev: dict[int, int | None] = {}
    queue = deque()
    for s in sorted(sources):
        prev[s] = None
        queue.append(s)
    frontier_hit = None
    dist = {s: 0 for s in prev}
    while queue:
        v = queue.popleft()
        if v in targets and (frontier_hit is None or (dist[v], v) < (dist[frontier_hit], frontier_hit)):
            frontier_hit = v
        if frontier_hit is not None and dist[v] > dist[frontier_hit]:
            break
        for u in adj[v]:
            if u not in prev:
                prev[u] = v
                dist[u] = dist[v] + 1
                queue.append(u)
    if frontier_hit is None:
        return None
    path = [frontier_hit]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def _shortest_path_merge(adj: dict[int, list[int]], terminals: list[int]):
    """Heuristic: join the closest terminal pair, then repeatedly attach the nearest terminal."""
    best = None
    for a, b in combinations(sorted(terminals), 2):
        path = _bfs_path(adj, [a], {b})
        if path is not None and (best is None or len(path) < len(best)):
            best = path
    tree_nodes = set(best)
    edges = {(min(u, v), max(u, v)) for u, v in zip(best, best[1:])}
    remaining = set(terminals) - tree_nodes
    while remaining:
        path = _bfs_path(adj, tree_nodes, remaining)
        # path runs from tree to the nearest terminal
        for u, v in zip(path, path[1:]):
            edges.add((min(u, v), max(u, v)))
        tree_nodes.update(path)
        remaining -= tree_nodes
    return len(edges), edges


def _reduce(graph: SchemaGraph, terminals: set[int]):
    """Drop non-terminal leaves and fold leaf terminal columns into their tables.

    Both reductions preserve every minimum tree.  Returns the reduced adjacency,
    the new terminal list and the membership edges forced by folded columns.
    """
    alive = set(range(len(graph)))
    degree = {v: len(graph.adj[v]) for v in alive}
    leaves = deque(v for v in alive if degree[v] <= 1 and v not in terminals)
    while leaves:
        v = leaves.popleft()
        if v not in alive:
            continue
        alive.discard(v)
        for u in graph.adj[v]:
            if u in alive:
                degree[u] -= 1
                if degree[u] <= 1 and u not in terminals:
                    leaves.append(u)
    terms = set(terminals)
    forced: set[tuple[int, int]] = set()
    if len(terms) > 1:
        for t in sorted(terminals):
            if graph.nodes[t].is_table:
                continue
            live = [u for u in graph.adj[t] if u in alive]
            if len(live) == 1:
                owner = live[0]
                forced.add((min(t, owner), max(t, owner)))
                terms.discard(t)
                alive.discard(t)
                terms.add(owner)
    adj = {v: [u for u in graph.adj[v] if u in alive] for v in sorted(alive)}
    return adj, sorted(terms), forced


def _without(adj: dict[int, list[int]], banned: set[int]) -> dict[int, list[int]]:
    return {v: [u for u in nbrs if u not in banned] for v, nbrs in adj.items() if v not in banned}


def _lex_smallest_optimal(graph: SchemaGraph, adj, terms: list[int], cost: float):
    """Among minimum trees, pick the one whose sorted table sequence is lexicographically smallest.

    Tables are decided in schema order by forcing them in (as extra terminals)
    or banning them, keeping the optimum cost reachable at every step.
    """
    mandatory = {v for v in terms if graph.nodes[v].is_table}
    candidates = sorted(v for v in adj if graph.nodes[v].is_table and v not in mandatory)
    forced: list[int] = []
    banned: set[int] = set()

    def feasible(extra: list[int], ban: set[int]) -> bool:
        if any(t in ban for t in terms):
            return False
        c, _ = _dreyfus_wagner(_without(adj, ban), sorted(set(terms) | set(extra)))
        return c == cost

    for pos, t in enumerate(candidates):
        rest = set(candidates[pos:])
        if not any(m > t for m in mandatory) and feasible(forced, banned | rest):
            banned |= rest
            break
        if feasible(forced + [t], banned):
            forced.append(t)
        else:
            banned.add(t)
    _, edges = _dreyfus_wagner(_without(adj, banned), sorted(set(terms) | set(forced)))
    return edges


def steiner_tree(graph: SchemaGraph, terminals: Iterable[Node]) -> frozenset[Edge]:
    """Minimum connected edge set spanning ``terminals`` (unit edge weights).

    Exact within the small-instance envelope, shortest-path merging beyond it.
    Ties between minimum trees go to the lexicographically smallest table set.
    """
    idx = set()
    for t in terminals:
        if t not in graph.index:
            raise ValueError(f"terminal {t} is not a node of the graph for {graph.schema.db_id}")
        idx.add(graph.index[t])
    if not idx:
        raise ValueError("steiner_tree needs at least one terminal")
    if len(idx) == 1:
        return frozenset()

    start = min(idx)
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for u in graph.adj[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    missing = idx - seen
    if missing:
        names = ", ".join(str(graph.nodes[i]) for i in sorted(missing))
        raise DisconnectedTerminals(f"no join path reaches {names} from {graph.nodes[start]}")

    adj, terms, forced = _reduce(graph, idx)
    if len(terms) == 1:
        edges: set[tuple[int, int]] = set()
    elif len(terms) <= EXACT_MAX_TERMINALS and len(adj) <= EXACT_MAX_NODES:
        cost, _ = _dreyfus_wagner(adj, terms)
        edges = _lex_smallest_optimal(graph, adj, terms, cost)
    else:
        _, edges = _shortest_path_merge(adj, terms)
    return frozenset(graph.edge(i, j) for i, j in edges | forced)


# -- join plans ----------------------------------------------------------


@dataclass(frozen=True)
class JoinPlan:
    tables: tuple[str, ...]
    steps: tuple[tuple[Node, Node], ...]

    def render(self) -> str:
        lines = ["tables: " + ", ".join(self.tables)]
        lines += [f"join: {a} = {b}" for a, b in self.steps]
        return "\n".join(lines)


def join_plan_from_tree(
    tree: Iterable[Edge], graph: SchemaGraph, terminals: Iterable[Node] = ()
) -> JoinPlan:
    """Materialize a Steiner tree as an ordered join plan.

    Tables are visited breadth-first, neighbours in name order, starting from
    the lexicographically smallest terminal table; each step joins a new table to one already in the plan.  Tables
    whose columns appear in the tree are included even if their table node is
    not, and ``terminals`` supplies the table of a single-node tree.
    """
    tree = list(tree)
    tables = {n.table for e in tree for n in (e.a, e.b)} | {n.table for n in terminals}
    if not tables:
        return JoinPlan((), ())
    links: dict[str, list[tuple[str, Node, Node]]] = {t: [] for t in tables}
    for e in sorted(tree, key=lambda e: (graph.index[e.a], graph.index[e.b])):
        if e.kind != "foreign_key" or e.a.table == e.b.table:
            continue
        links[e.a.table].append((e.b.table, e.a, e.b))
        links[e.b.table].append((e.a.table, e.b, e.a))
    root = min({n.table for n in terminals} or tables)

    order = [root]
    steps: list[tuple[Node, Node]] = []
    visited = {root}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        for other, mine, theirs in sorted(links[cur]):
            if other in visited:
                continue
            visited.add(other)
            order.append(other)
            steps.append((mine, theirs))
            queue.append(other)
    # components only reachable through a shared column with no table node
    order.extend(sorted(tables - visited))
    return JoinPlan(tuple(order), tuple(steps))
