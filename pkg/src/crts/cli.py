"""``crts`` command line: validate, convert, match, query, dnf.

Exit codes: 0 success, 1 invalid document or no applicable recommendation,
2 usage error (including query syntax), 3 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from crts import errors as E
from crts.errors import CrtsError
from crts.graph import build_expr_graph, dnf_terms
from crts.index import build_index, dump_index, load_index, parse_query, query
from crts.logic import TruthValue
from crts.matching import MatchConfig, match_recommendation
from crts.model import Issue, Recommendation, validate
from crts.serial import parse_document, parse_patient_json, write_json, write_xml

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_IO = 3

_COLORS = {"green": "32", "red": "31", "yellow": "33"}


class _Out:
    def __init__(self, stream: Any = None) -> None:
        self.stream = stream or sys.stdout
        isatty = getattr(self.stream, "isatty", lambda: False)()
        self.color = isatty and os.environ.get("CRTS_COLOR", "1") != "0"

    def paint(self, text: str, color: str) -> str:
        if not self.color:
            return text
        return f"\x1b[{_COLORS[color]}m{text}\x1b[0m"

    def line(self, text: str = "") -> None:
        self.stream.write(text + "\n")

    def json(self, obj: Any) -> None:
        self.stream.write(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _err(message: str) -> None:
    sys.stderr.write(f"crts: {message}\n")


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CrtsError(E.IO_ERROR, exc.strerror or str(exc), str(path)) from None


def _load(path: Path, strict: bool, warnings: list[Issue] | None = None) -> Recommendation:
    return parse_document(_read(path), strict=strict, warnings=warnings, default_doc_id=path.stem)


def _issue_json(issue: Issue) -> dict[str, str]:
    return {"code": issue.code, "path": issue.path, "message": issue.message}


def cmd_validate(args: argparse.Namespace, out: _Out) -> int:
    status = EXIT_OK
    reports = []
    for path in sorted(args.paths):
        warnings: list[Issue] = []
        try:
            rec = _load(path, args.strict, warnings)
        except CrtsError as exc:
            status = EXIT_IO
            reports.append({"path": str(path), "valid": False, "failure": {"code": exc.code, "message": str(exc)}})
            continue
        report = validate(rec)
        if not report.ok and status == EXIT_OK:
            status = EXIT_NEGATIVE
        reports.append(
            {
                "path": str(path),
                "doc_id": rec.doc_id,
                "valid": report.ok,
                "errors": [_issue_json(i) for i in report.errors],
                "warnings": [_issue_json(i) for i in (*warnings, *report.warnings)],
            }
        )
    if args.format == "json":
        out.json(reports)
        return status
    for r in reports:
        if "failure" in r:
            out.line(f"{r['path']}: {out.paint('FAILED', 'red')} {r['failure']['message']}")
            continue
        verdict = out.paint("OK", "green") if r["valid"] else out.paint("INVALID", "red")
        out.line(f"{r['path']}: {verdict}")
        for issue in r["errors"]:
            out.line(f"  error {issue['code']} {issue['path']}: {issue['message']}")
        for issue in r["warnings"]:
            out.line(f"  warning {issue['code']} {issue['path']}: {issue['message']}")
    return status


def cmd_convert(args: argparse.Namespace, out: _Out) -> int:
    rec = _load(args.input, args.strict)
    data = write_json(rec) if args.to == "json" else write_xml(rec)
    out.stream.flush()
    buffer = getattr(out.stream, "buffer", None)
    if buffer is not None:
        buffer.write(data)
        buffer.flush()
    else:
        out.stream.write(data.decode("utf-8"))
    return EXIT_OK


def cmd_match(args: argparse.Namespace, out: _Out) -> int:
    patient = parse_patient_json(_read(args.patient))
    cfg = MatchConfig(closed_world_override=True if args.closed_world else None)
    docs = [_load(p, args.strict) for p in sorted(args.recs)]
    results = []
    status = EXIT_NEGATIVE
    for rec in docs:
        try:
            result = match_recommendation(rec, patient, cfg)
        except CrtsError as exc:
            _err(str(exc))
            continue
        if result.verdict is TruthValue.TRUE:
            status = EXIT_OK
        results.append(result)

    if args.format == "json":
        out.json(
            [
                {
                    "doc_id": r.doc_id,
                    "verdict": r.verdict.name,
                    "label": r.label,
                    "trace": [{"id": t.block_id, "value": t.value.name, "reason": t.reason} for t in r.trace],
                    "suggestion": [
                        {
                            "id": s.intervention.id,
                            "name": s.intervention.name,
                            "modifier": s.intervention.modifier_text,
                            "grade": s.intervention.grade,
                            "compared_to": list(s.compared_to),
                        }
                        for s in r.suggestion_summary
                    ],
                    "suggestion_text": r.suggestion_text,
                }
                for r in results
            ]
        )
        return status

    colors = {TruthValue.TRUE: "green", TruthValue.FALSE: "red", TruthValue.UNKNOWN: "yellow"}
    width = max((len(r.doc_id) for r in results), default=0)
    for r in results:
        line = f"{r.doc_id.ljust(width)}  {out.paint(r.label, colors[r.verdict])}"
        if r.suggestion_text:
            line += f"  -> {r.suggestion_text}"
        out.line(line)
        if args.trace:
            for t in r.trace:
                out.line(f"    [{t.block_id}] {t.value.name:<7} {t.reason}")
    return status


def _corpus(directory: Path, strict: bool) -> list[Recommendation]:
    if not directory.is_dir():
        raise CrtsError(E.IO_ERROR, "not a directory", str(directory))
    files = sorted(p for p in directory.iterdir() if p.suffix in (".xml", ".json") and p.is_file())
    return [_load(p, strict) for p in files]


def cmd_query(args: argparse.Namespace, out: _Out) -> int:
    q = parse_query(args.query)
    if args.index is not None and args.index.exists():
        index = load_index(_read(args.index))
    else:
        index = build_index(_corpus(args.corpus_dir, args.strict))
        if args.index is not None:
            try:
                args.index.write_bytes(dump_index(index))
            except OSError as exc:
                raise CrtsError(E.IO_ERROR, exc.strerror or str(exc), str(args.index)) from None
    hits = query(index, q)
    if args.format == "json":
        out.json(hits)
    else:
        for doc_id in hits:
            out.line(doc_id)
    return EXIT_OK


def cmd_dnf(args: argparse.Namespace, out: _Out) -> int:
    rec = _load(args.path, args.strict)
    report = validate(rec)
    if not report.ok:
        raise CrtsError(E.INVALID_DOCUMENT, str(report.errors[0]))
    terms = dnf_terms(build_expr_graph(rec.population))
    if args.format == "json":
        out.json({"doc_id": rec.doc_id, "terms": [list(t) for t in terms]})
        return EXIT_OK
    if terms == [()]:
        out.line("TRUE")
    elif len(terms) == 1:
        out.line(" AND ".join(terms[0]))
    else:
        out.line(" OR ".join(f"({' AND '.join(t)})" if len(t) > 1 else t[0] for t in terms))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crts", description="Clinical recommendation documents: validate, convert, match, query.")
    common = argparse.ArgumentParser(add_help=False)
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True, help="reject unknown elements (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false", help="skip unknown elements with a warning")
    common.add_argument("--format", choices=("text", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check documents against the schema")
    p.add_argument("paths", nargs="+", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", parents=[common], help="convert between XML and JSON")
    p.add_argument("input", type=Path)
    p.add_argument("--to", choices=("xml", "json"), default="xml")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("match", parents=[common], help="match a patient against recommendations")
    p.add_argument("recs", nargs="+", type=Path)
    p.add_argument("--patient", type=Path, required=True)
    p.add_argument("--closed-world", action="store_true", help="treat unrecorded conditions and interventions as absent")
    p.add_argument("--trace", action="store_true", help="show per-criterion values")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("query", parents=[common], help="retrieve documents from a corpus directory")
    p.add_argument("corpus_dir", type=Path)
    p.add_argument("query")
    p.add_argument("--index", type=Path, help="index file to load, or to write when missing")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("dnf", parents=[common], help="print the DNF of a document's population logic")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_dnf)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = _Out()
    try:
        return args.func(args, out)
    except CrtsError as exc:
        _err(str(exc))
        if exc.code == E.QUERY_SYNTAX:
            return EXIT_USAGE
        if exc.code in (E.INVALID_DOCUMENT, E.DNF_BLOWUP, E.DUPLICATE_DOC_ID):
            return EXIT_NEGATIVE
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
