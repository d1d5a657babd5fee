from __future__ import annotations

import re
from typing import NamedTuple

from ..errors import SQLSyntaxError

KEYWORDS = frozenset(
    """select distinct from as join on where group by having order asc desc limit
    intersect union except and or not between like in""".split()
)


class Token(NamedTuple):
    kind: str  # kw | ident | qident | number | string | op | eof
    value: str
    pos: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d*)?|\.\d+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|<>|[=<>(),.*+\-/;])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SQLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "ident":
            low = value.lower()
            tokens.append(Token("kw" if low in KEYWORDS else "ident", low, pos))
        elif kind == "string":
            tokens.append(Token("string", value[1:-1].replace("''", "'"), pos))
        elif kind == "qident":
            tokens.append(Token("qident", value[1:-1].replace('""', '"'), pos))
        elif kind == "op":
            tokens.append(Token("op", "!=" if value == "<>" else value, pos))
        elif kind == "number":
            tokens.append(Token("number", value, pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens
