"""Command-line interface. Each subcommand maps onto one pipeline or store operation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import CliConfig, load_config
from .edgar_client import EdgarClient
from .errors import ConfigError, EdgarCorpusError
from .filing_parser import parse_filing
from .index_parser import parse_index
from .metadata_store import MetadataStore
from .object_store import FilesystemBackend, ObjectStore, S3Backend, StoreBusy
from .pipeline import Pipeline, RunReport

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2
EXIT_CONFIG = 78

logger = logging.getLogger("edgarcorpus")

# commands that never touch the network and so do not need a user agent
_OFFLINE = {("store", "sweep"), ("db", "stats"), ("audit", "index"), ("audit", "filing"),
            ("mock-server", None)}


def build_store(config: CliConfig) -> ObjectStore:
    if config.get("store.backend") == "s3":
        backend = S3Backend(
            bucket=config.get("store.bucket"), endpoint_url=config.get("store.endpoint_url"),
            region=config.get("store.region"), access_key=config.get("store.access_key"),
            secret_key=config.get("store.secret_key"), prefix=config.get("store.prefix"))
    else:
        backend = FilesystemBackend(config.get("store.root"))
    return ObjectStore(backend)


def build_pipeline(config: CliConfig) -> Pipeline:
    return Pipeline(
        EdgarClient(config.client_config()), build_store(config), MetadataStore(config.get("db.url")),
        worker_count=config.get("pipeline.worker_count"), retry_limit=config.get("pipeline.retry_limit"),
        extractor_url=config.get("extractor.url"),
        filing_index_type=config.get("pipeline.filing_index_type"))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgarcorpus", description="Build and maintain an EDGAR research corpus.")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--user-agent", help="contact string sent with every request")
    parser.add_argument("--base-url", help="archive base URL")
    parser.add_argument("--db", help="database URL or SQLite path")
    parser.add_argument("--store-root", help="filesystem object store root")
    parser.add_argument("--workers", type=int, help="worker count")
    parser.add_argument("--log-level", help="logging level (default INFO)")
    parser.add_argument("--report", help="write the machine-readable report to this file")
    parser.add_argument("--json", action="store_true", help="print the machine-readable report to stdout")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    index = groups.add_parser("index", help="index files").add_subparsers(dest="action", required=True)
    download = index.add_parser("download", help="download and parse full-index files")
    download.add_argument("--year", type=int)

    filings = groups.add_parser("filings", help="filings").add_subparsers(dest="action", required=True)
    process = filings.add_parser("process", help="download, parse and record filings listed in indexes")
    process.add_argument("--year", type=int)
    process.add_argument("--form-type", action="append", dest="form_types")

    companies = groups.add_parser("companies", help="company metadata").add_subparsers(dest="action", required=True)
    companies.add_parser("update", help="refresh company metadata history")

    text = groups.add_parser("text", help="text extraction").add_subparsers(dest="action", required=True)
    text.add_parser("extract", help="extract text from every pending document")

    search = groups.add_parser("search", help="term search").add_subparsers(dest="action", required=True)
    run = search.add_parser("run", help="count term occurrences in extracted documents")
    run.add_argument("--term", action="append", required=True, dest="terms")
    run.add_argument("--case-sensitive", action="store_true")
    run.add_argument("--description-like")
    run.add_argument("--form-type")
    run.add_argument("--label")

    store = groups.add_parser("store", help="object store maintenance").add_subparsers(dest="action", required=True)
    sweep = store.add_parser("sweep", help="find (and with --delete, remove) bad objects")
    sweep.add_argument("--predicate", required=True, choices=["rate-limited", "empty", "access-denied"])
    sweep.add_argument("--prefix", default="")
    sweep.add_argument("--delete", action="store_true", help="delete matches (default is a dry run)")

    db = groups.add_parser("db", help="database").add_subparsers(dest="action", required=True)
    db.add_parser("stats", help="row counts and store totals")

    audit = groups.add_parser("audit", help="parse local files for inspection").add_subparsers(
        dest="action", required=True)
    audit.add_parser("index", help="dump an index file as a delimited table").add_argument("path")
    audit.add_parser("filing", help="dump a parsed filing as JSON").add_argument("path")

    mock = groups.add_parser("mock-server", help="serve a fixture tree as a mock archive")
    mock.add_argument("--root", required=True)
    mock.add_argument("--port", type=int, default=8080)
    mock.set_defaults(action=None)
    return parser


def _emit(args, payload: dict, text: str) -> None:
    print(text, file=sys.stderr)
    rendered = json.dumps(payload, indent=2, sort_keys=True, default=str)
    if args.json:
        print(rendered)
    if args.report:
        Path(args.report).write_text(rendered + "\n")


def _report_exit(args, report: RunReport) -> int:
    _emit(args, report.to_dict(), report.to_text())
    return EXIT_OK if report.jobs_failed == 0 else EXIT_FAILURES


def _filing_dump(parsed) -> dict:
    header = None
    if parsed.header is not None:
        header = {k: v for k, v in vars(parsed.header).items() if k != "extra"}
        header["extra"] = [list(pair) for pair in parsed.header.extra]
    return {
        "header": header,
        "documents": [{"sequence": d.sequence, "doc_type": d.doc_type, "filename": d.filename,
                       "description": d.description, "content_type": d.content_type, "sha1": d.sha1,
                       "was_uuencoded": d.was_uuencoded, "size": len(d.body)} for d in parsed.documents],
        "warnings": [list(w) for w in parsed.warnings],
    }


def run_command(args, config: CliConfig) -> int:
    key = (args.group, args.action)
    if key == ("audit", "index"):
        report = parse_index(Path(args.path).read_bytes())
        sys.stdout.write(report.to_delimited())
        for number, line, reason in report.malformed_lines:
            print(f"malformed line {number}: {reason}: {line!r}", file=sys.stderr)
        return EXIT_OK
    if key == ("audit", "filing"):
        print(json.dumps(_filing_dump(parse_filing(Path(args.path).read_bytes())), indent=2, default=str))
        return EXIT_OK
    if key == ("mock-server", None):
        from .testing import MockEdgarServer

        server = MockEdgarServer(args.root, port=args.port)
        print(f"serving {server.root} at {server.url}", file=sys.stderr)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        return EXIT_OK
    if key == ("store", "sweep"):
        store = build_store(config)
        predicate = args.predicate.replace("-", "_")
        found = store.sweep(args.prefix, predicate, dry_run=not args.delete)
        verb = "deleted" if args.delete else "would delete"
        text = "\n".join(f"{verb} {k} ({reason})" for k, reason in found) or "no matching objects"
        _emit(args, {"predicate": predicate, "prefix": args.prefix, "deleted": bool(args.delete),
                     "matches": [k for k, _ in found]}, text)
        return EXIT_OK
    if key == ("db", "stats"):
        counts = MetadataStore(config.get("db.url")).counts()
        stats = build_store(config).stats()
        payload = {"tables": counts, "store": vars(stats)}
        text = "\n".join([f"{t}: {n}" for t, n in counts.items()] +
                         [f"objects: {stats.object_count} ({stats.total_stored_bytes} stored bytes, "
                          f"{stats.total_logical_bytes} logical bytes)"])
        _emit(args, payload, text)
        return EXIT_OK

    pipeline = build_pipeline(config)
    if key == ("index", "download"):
        return _report_exit(args, pipeline.download_filing_index_data(args.year))
    if key == ("filings", "process"):
        return _report_exit(args, pipeline.process_all_filing_index(args.year, args.form_types))
    if key == ("companies", "update"):
        return _report_exit(args, pipeline.update_company_metadata())
    if key == ("text", "extract"):
        return _report_exit(args, pipeline.extract_all_text())
    if key == ("search", "run"):
        outcome = pipeline.run_search([(t, args.case_sensitive) for t in args.terms],
                                      description_like=args.description_like,
                                      form_type=args.form_type, label=args.label)
        payload = outcome.report.to_dict()
        payload["query_id"] = outcome.query_id
        payload["results"] = [{"accession_number": a, "sequence": s, "term": t, "count": c}
                              for a, s, t, c in outcome.rows]
        text = "\n".join([outcome.report.to_text()] +
                         [f"{a} #{s} {t!r}: {c}" for a, s, t, c in outcome.rows])
        _emit(args, payload, text)
        return EXIT_OK if outcome.report.jobs_failed == 0 else EXIT_FAILURES
    raise AssertionError(f"unhandled command {key}")


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    overrides = {
        "client.user_agent": args.user_agent, "client.base_url": args.base_url, "db.url": args.db,
        "store.root": args.store_root, "pipeline.worker_count": args.workers, "log_level": args.log_level,
    }
    try:
        config = load_config(args.config, overrides=overrides,
                             require_client=(args.group, args.action) not in _OFFLINE)
    except ConfigError as exc:
        print(f"edgarcorpus: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=config.get("log_level"), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return run_command(args, config)
    except ConfigError as exc:
        print(f"edgarcorpus: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StoreBusy as exc:
        print(f"edgarcorpus: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except (EdgarCorpusError, OSError) as exc:
        print(f"edgarcorpus: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
