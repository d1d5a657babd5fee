"""Independent reference implementations used to check the library."""

from __future__ import annotations

import math
import random
from collections import deque

from srsql.schema import Column, Schema, Table


def random_schema(rng: random.Random, name: str, max_tables: int = 8) -> Schema:
    """Small random schema; foreign keys often reuse columns, like shared ids."""
    n = rng.randint(1, max_tables)
    tables = []
    for t in range(n):
        width = rng.randint(1, 3)
        tables.append(Table(f"t{t}", tuple(Column(f"c{k}", f"t{t}") for k in range(width))))
    fks = []
    if n > 1:
        for _ in range(rng.randint(0, n + 1)):
            a, b = rng.sample(range(n), 2)
            ca = rng.choice(tables[a].columns)
            cb = rng.choice(tables[b].columns)
            fks.append((ca, cb))
    return Schema(name, tuple(tables), tuple(fks))


def plain_graph(schema: Schema) -> dict[tuple, set[tuple]]:
    """Adjacency over (table, column-or-None) keys, built straight from the schema."""
    adj: dict[tuple, set[tuple]] = {}

    def link(x, y):
        adj.setdefault(x, set()).add(y)
        adj.setdefault(y, set()).add(x)

    for t in schema.tables:
        tk = (t.name.lower(), None)
        adj.setdefault(tk, set())
        for c in t.columns:
            link(tk, (t.name.lower(), c.name.lower()))
    for a, b in schema.foreign_keys:
        link((a.table.lower(), a.name.lower()), (b.table.lower(), b.name.lower()))
    return adj


def _reachable(adj, start) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        for nxt in adj[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def min_cover_nodes(adj: dict, terminals: list) -> int | None:
    """Fewest nodes in a connected node set containing every terminal.

    Exhaustive enumeration of connected sets grown from the first terminal
    (each set visited once by include/exclude branching), with branch and
    bound.  Returns None when the terminals are not mutually reachable.
    """
    terms = set(terminals)
    root = terminals[0]
    if not terms <= _reachable(adj, root):
        return None
    best = len(adj) + 1

    def grow(chosen: set, frontier: list, banned: set):
        nonlocal best
        missing = len(terms - chosen)
        if missing == 0:
            best = min(best, len(chosen))
            return
        if len(chosen) + missing >= best:
            return
        for i, v in enumerate(frontier):
            skipped = set(frontier[:i])
            if skipped & terms:
                return  # a terminal can no longer be added on this branch
            new_banned = banned | skipped
            extra = [u for u in sorted(adj[v]) if u not in chosen and u not in new_banned and u not in frontier]
            rest = [u for u in frontier[i + 1:]]
            grow(chosen | {v}, rest + extra, new_banned)

    grow({root}, sorted(adj[root]), set())
    return best


def eq1(g: float, d: float, alpha: float) -> float:
    """alpha * ln g + (1 - alpha) * ln d, evaluated directly."""
    return alpha * math.log(g) + (1 - alpha) * math.log(d)
