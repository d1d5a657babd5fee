"""Command-line entry point.

Exit codes: 0 on success (batch runs that record per-entry failures still
succeed), 1 for data or domain errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from typing import Callable, Sequence, TextIO

from . import bundled_path
from .errors import ConfigError, SrsqlError
from .evaluate import read_corpus, rerank_report, roundtrip_report
from .rerank import (
    BaselineScorer,
    BeamSet,
    ExternalScorer,
    LabelConfig,
    RerankConfig,
    assign_soft_logits,
    oracle_scorer,
    read_beam_file,
    rerank_beams,
    write_targets,
)
from .schema import Node, Schema, build_graph, join_plan_from_tree, load_schema, load_schemas, steiner_tree
from .sqlast.parser import parse_sql
from .sqlast.printer import print_sql
from .ssql import lift_to_sql, lower_to_ssql, parse_ssql, print_ssql

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _schemas(args) -> dict[str, Schema]:
    return load_schemas(args.schema)


def _single_text(args, stdin: TextIO) -> str:
    text = args.text if args.text is not None else stdin.read()
    text = text.strip()
    if not text:
        raise UsageError("no query given (pass it inline or on stdin)")
    return text


def _batch(args, out: TextIO, field: str, convert: Callable[[str, Schema], str]) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"corpus {args.corpus} is empty")
    schemas = _schemas(args)
    for entry in corpus:
        text = entry.sql if field == "sql" else entry.ssql
        try:
            if not text:
                raise SrsqlError(f"entry has no {field} field")
            schema = schemas.get(entry.db_id)
            if schema is None:
                raise SrsqlError(f"unknown db_id {entry.db_id!r}")
            result = convert(text, schema)
        except SrsqlError as exc:
            result = f"ERROR {type(exc).__name__}: {exc}"
        out.write(f"{entry.id}\t{result}\n")
    return EXIT_OK


def _translate(args, out: TextIO, stdin: TextIO, field: str, convert) -> int:
    if args.corpus:
        return _batch(args, out, field, convert)
    if not args.db_id:
        raise UsageError("--db-id is required for a single query")
    text = _single_text(args, stdin)
    schema = load_schema(args.schema, args.db_id)
    out.write(convert(text, schema) + "\n")
    return EXIT_OK


def _lower_text(text: str, schema: Schema) -> str:
    return print_ssql(lower_to_ssql(parse_sql(text, schema), schema))


def _lift_text(text: str, schema: Schema) -> str:
    return print_sql(lift_to_sql(parse_ssql(text, schema), schema))


def cmd_lower(args, out: TextIO, stdin: TextIO) -> int:
    return _translate(args, out, stdin, "sql", _lower_text)


def cmd_lift(args, out: TextIO, stdin: TextIO) -> int:
    return _translate(args, out, stdin, "ssql", _lift_text)


def cmd_roundtrip(args, out: TextIO, stdin: TextIO) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"corpus {args.corpus} is empty")
    report = roundtrip_report(corpus, _schemas(args))
    if args.json:
        json.dump(report.to_dict(), out, indent=2)
        out.write("\n")
    else:
        out.write(report.render() + "\n")
    return EXIT_OK


def _rerank_config(args) -> RerankConfig:
    return RerankConfig(alpha=args.alpha, d_floor=args.d_floor, workers=args.workers)


def _scorer_factory(args, schemas: dict[str, Schema]) -> tuple[Callable[[BeamSet], Callable], list]:
    """Build a per-beam-set scorer factory plus resources that need closing."""
    choice = args.scorer
    if choice == "baseline":
        return (lambda beams: BaselineScorer(schemas.get(beams.db_id), args.d_floor)), []
    if choice == "oracle":
        return oracle_scorer, []
    if choice.startswith("cmd:") and choice[4:].strip():
        ext = ExternalScorer(choice[4:])
        return (lambda beams: ext), [ext]
    raise UsageError(f"unknown scorer {choice!r} (use baseline, oracle or cmd:<command>)")


def cmd_rerank(args, out: TextIO, stdin: TextIO) -> int:
    config = _rerank_config(args)
    schemas = _schemas(args)
    beam_sets = read_beam_file(args.beams)
    if not beam_sets:
        raise UsageError(f"beam file {args.beams} is empty")
    factory, closers = _scorer_factory(args, schemas)
    try:
        labelled = all(c.correct is not None for b in beam_sets for c in b.candidates)
        if labelled:
            report = rerank_report(beam_sets, schemas, config=config, scorer_factory=factory)
            selections = [s["by_combined"] for s in report.selections]
        else:
            report = None
            selections = [
                rerank_beams(b, factory(b), config, schemas.get(b.db_id)).candidates[0].sql_text for b in beam_sets
            ]
    finally:
        for c in closers:
            c.close()
    if args.json:
        doc = {"config": asdict(config), "selections": selections}
        if report is not None:
            doc["report"] = report.to_dict()
        json.dump(doc, out, indent=2)
        out.write("\n")
        return EXIT_OK
    for k, sql in enumerate(selections, start=1):
        out.write(f"{k}\t{sql}\n")
    if report is not None:
        out.write(report.render() + "\n")
    return EXIT_OK


def cmd_label(args, out: TextIO, stdin: TextIO) -> int:
    config = LabelConfig(delta=args.delta)
    schemas = _schemas(args)
    beam_sets = read_beam_file(args.beams)
    if not beam_sets:
        raise UsageError(f"beam file {args.beams} is empty")
    targets = [t for b in beam_sets for t in assign_soft_logits(b, config, schemas.get(b.db_id))]
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_targets(targets, fh)
    else:
        write_targets(targets, out)
    return EXIT_OK


def _terminal(token: str) -> Node:
    table, _, column = token.strip().partition(".")
    if not table:
        raise UsageError(f"bad terminal {token!r}")
    return Node(table, column or None)


def cmd_steiner(args, out: TextIO, stdin: TextIO) -> int:
    if not args.db_id:
        raise UsageError("--db-id is required")
    tokens = [t for t in (args.terminals or "").split(",") if t.strip()]
    if not tokens:
        raise UsageError("--terminals needs at least one table or table.column")
    schema = load_schema(args.schema, args.db_id)
    graph = build_graph(schema)
    terminals = []
    for tok in tokens:
        node = _terminal(tok)
        if not schema.has_table(node.table) or (node.column and not schema.has_column(node.table, node.column)):
            raise SrsqlError(f"{tok.strip()!r} is not a node of {schema.db_id}")
        table = schema.table(node.table).name.lower()
        terminals.append(Node(table, node.column.lower() if node.column else None))
    tree = steiner_tree(graph, terminals)
    plan = join_plan_from_tree(tree, graph, terminals)
    out.write(plan.render() + "\n")
    return EXIT_OK


def cmd_config(args, out: TextIO, stdin: TextIO) -> int:
    rerank = _rerank_config(args)
    label = LabelConfig(delta=args.delta)
    doc = {
        "schema": str(args.schema),
        "db_id": args.db_id,
        "alpha": rerank.alpha,
        "delta": label.delta,
        "d_floor": rerank.d_floor,
        "workers": rerank.workers,
        "ignore_values": args.ignore_values,
        "scorer": args.scorer,
    }
    json.dump(doc, out, indent=2)
    out.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", default=str(bundled_path("tables.json")), help="Spider-format tables file")
    common.add_argument("--db-id", help="database id within the tables file")

    rerank_opts = argparse.ArgumentParser(add_help=False)
    rerank_opts.add_argument("--alpha", type=float, default=RerankConfig.alpha, help="weight of ln g")
    rerank_opts.add_argument("--d-floor", type=float, default=RerankConfig.d_floor, help="lower clamp for d")
    rerank_opts.add_argument("--workers", type=int, default=1, help="concurrent scorer calls per beam set")
    rerank_opts.add_argument("--scorer", default="baseline", help="baseline | oracle | cmd:<command>")

    parser = argparse.ArgumentParser(prog="srsql", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, help_ in (
        ("lower", cmd_lower, "translate SQL to SSQL"),
        ("lift", cmd_lift, "translate SSQL to SQL"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("text", nargs="?", help="query text (read from stdin when omitted)")
        p.add_argument("--corpus", help="JSONL corpus to translate in batch")
        p.set_defaults(func=func)

    p = sub.add_parser("roundtrip", parents=[common], help="lower then lift a corpus and report recovery")
    p.add_argument("--corpus", default=str(bundled_path("corpus.jsonl")))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("rerank", parents=[common, rerank_opts], help="rerank a beam dump")
    p.add_argument("--beams", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("label", parents=[common], help="write soft-logit training targets")
    p.add_argument("--beams", required=True)
    p.add_argument("--delta", type=float, default=LabelConfig.delta)
    p.add_argument("--output", help="target file (stdout when omitted)")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("steiner", parents=[common], help="print the join plan covering some terminals")
    p.add_argument("--terminals", help="comma-separated table or table.column names")
    p.set_defaults(func=cmd_steiner)

    p = sub.add_parser("config", parents=[common, rerank_opts], help="print the effective configuration")
    p.add_argument("--delta", type=float, default=LabelConfig.delta)
    p.add_argument("--ignore-values", action="store_true", help="compare queries without literal values")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None,
         stdin: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    stdin = stdin or sys.stdin
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out, stdin)
    except (UsageError, ConfigError) as exc:
        err.write(f"srsql {args.command}: {exc}\n")
        return EXIT_USAGE
    except (SrsqlError, OSError, ValueError) as exc:
        err.write(f"srsql {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
