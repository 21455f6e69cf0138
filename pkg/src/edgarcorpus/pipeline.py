"""Idempotent ingestion operations executed as parallel work items.

Every operation is safe to rerun: state lives in the metadata store's
``is_processed`` / ``is_extracted`` flags and in content-addressed objects,
so an initial run is just an incremental run from empty state.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timezone
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .edgar_client import EdgarClient, EdgarError, parse_company_metadata
from .errors import EdgarCorpusError, InvalidArgument, NotFound
from .filing_parser import ACCESSION_RE, FilingParseError, parse_filing
from .index_parser import IndexParseError, IndexRow, parse_index
from .metadata_store import MetadataStore
from .object_store import ObjectStore, key_for_document, key_for_raw_filing, key_for_text
from .text_extract import EXTRACTED, FAILED, UNEXTRACTED, extract_sha1

logger = logging.getLogger(__name__)

DOWNLOAD_INDEX = "download_index"
PROCESS_FILING = "process_filing"
EXTRACT_TEXT = "extract_text"
UPDATE_COMPANIES = "update_companies"
SEARCH = "search"
JOB_KINDS = (DOWNLOAD_INDEX, PROCESS_FILING, EXTRACT_TEXT, UPDATE_COMPANIES, SEARCH)

SUCCEEDED = "succeeded"
SKIPPED = "skipped"


class JobFailed(EdgarCorpusError):
    """A job failed in a way retrying cannot fix; its failure is already recorded."""


@dataclass(frozen=True)
class JobSpec:
    kind: str
    subject: str
    attempt: int = 0


@dataclass
class RunReport:
    operation: str = ""
    jobs_total: int = 0
    jobs_succeeded: int = 0
    jobs_failed: int = 0
    jobs_skipped: int = 0
    wall_time: float = 0.0
    failures: List[Tuple[str, str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["failures"] = [{"kind": k, "subject": s, "detail": d} for k, s, d in self.failures]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{self.operation or 'run'}: {self.jobs_total} jobs, {self.jobs_succeeded} succeeded, "
                 f"{self.jobs_skipped} skipped, {self.jobs_failed} failed in {self.wall_time:.2f}s"]
        lines.extend(f"  FAILED {kind} {subject}: {detail}" for kind, subject, detail in self.failures)
        return "\n".join(lines)


def execute(jobs: Iterable[JobSpec], handler: Callable[[JobSpec], str], worker_count: int = 1,
            retry_limit: int = 2, operation: str = "") -> RunReport:
    """Run ``handler`` over ``jobs`` on ``worker_count`` threads.

    A handler returns SUCCEEDED or SKIPPED. Ordinary exceptions are retried up
    to ``retry_limit`` times; JobFailed is final immediately. BaseExceptions
    that are not Exceptions (interrupts, simulated crashes) abort the run.
    """
    if worker_count < 1:
        raise InvalidArgument("worker_count must be >= 1")
    started = time.monotonic()
    report = RunReport(operation=operation)

    def run_one(job: JobSpec):
        detail = ""
        for attempt in range(retry_limit + 1):
            current = JobSpec(job.kind, job.subject, attempt)
            try:
                return handler(current), None
            except JobFailed as exc:
                return None, str(exc)
            except Exception as exc:
                detail = f"{type(exc).__name__}: {exc}"
                logger.warning("%s %s attempt %d failed: %s", job.kind, job.subject, attempt + 1, detail)
        return None, detail

    job_list = list(jobs)
    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        futures = {pool.submit(run_one, job): job for job in job_list}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        if pending:
            for fut in pending:
                fut.cancel()
        for fut in done:
            if fut.exception() is not None:
                raise fut.exception()
        for fut, job in futures.items():
            outcome, detail = fut.result()
            report.jobs_total += 1
            if outcome == SUCCEEDED:
                report.jobs_succeeded += 1
            elif outcome == SKIPPED:
                report.jobs_skipped += 1
            else:
                report.jobs_failed += 1
                report.failures.append((job.kind, job.subject, detail))
    report.failures.sort()
    report.wall_time = time.monotonic() - started
    return report


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def accession_from_path(file_name: str) -> Optional[str]:
    stem = file_name.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return stem if ACCESSION_RE.match(stem) else None


def count_occurrences(text: str, term: str, case_sensitive: bool) -> int:
    """Non-overlapping substring occurrences of ``term``."""
    if case_sensitive:
        return text.count(term)
    return text.casefold().count(term.casefold())


@dataclass
class SearchOutcome:
    query_id: int
    label: str
    rows: List[Tuple[str, int, str, int]]  # (accession, sequence, term, count) with count > 0
    report: RunReport


class Pipeline:
    def __init__(self, client: EdgarClient, objects: ObjectStore, metadata: MetadataStore,
                 worker_count: int = 1, retry_limit: int = 2,
                 clock: Callable[[], datetime] = _utcnow,
                 extractor_url: Optional[str] = None, filing_index_type: str = "master",
                 lock_timeout: float = 0):
        if worker_count < 1:
            raise InvalidArgument("worker_count must be >= 1")
        self.client = client
        self.objects = objects
        self.metadata = metadata
        self.worker_count = worker_count
        self.retry_limit = retry_limit
        self.clock = clock
        self.extractor_url = extractor_url
        self.filing_index_type = filing_index_type
        self.lock_timeout = lock_timeout
        self._handlers = {
            DOWNLOAD_INDEX: self._download_index,
            PROCESS_FILING: self._process_filing,
            EXTRACT_TEXT: self._extract_text,
            UPDATE_COMPANIES: self._update_company,
        }
        self._filing_rows: Dict[str, IndexRow] = {}
        self._sha1_types: Dict[str, str] = {}
        self._state_lock = threading.Lock()

    def execute(self, jobs: Iterable[JobSpec], worker_count: Optional[int] = None,
                operation: str = "") -> RunReport:
        def dispatch(job: JobSpec) -> str:
            return self._handlers[job.kind](job.subject)

        return execute(jobs, dispatch, worker_count or self.worker_count, self.retry_limit, operation)

    # indexes

    def _current_quarter(self) -> Tuple[int, int]:
        today = self.clock().date()
        return today.year, (today.month - 1) // 3 + 1

    def download_filing_index_data(self, year: Optional[int] = None) -> RunReport:
        now_year, now_quarter = self._current_quarter()
        descriptors = [d for d in self.client.list_index_files(year)
                       if (d.year, d.quarter) <= (now_year, now_quarter)]
        for descriptor in descriptors:
            self.metadata.record_filing_index(descriptor)
        jobs = [JobSpec(DOWNLOAD_INDEX, d.path) for d in descriptors]
        with self.objects.prefix_lock("filings/", self.lock_timeout):
            return self.execute(jobs, operation="download_filing_index_data")

    def _download_index(self, path: str) -> str:
        row = self.metadata.get_filing_index(path)
        if row is not None and row.is_processed:
            return SKIPPED
        try:
            raw = self.client.fetch(path)
        except (EdgarError, NotFound) as exc:
            self.metadata.mark_index_error(path, f"{type(exc).__name__}: {exc}")
            raise JobFailed(f"{type(exc).__name__}: {exc}") from exc
        self.objects.put(key_for_raw_filing(path), raw, compress=True)
        try:
            report = parse_index(raw)
        except IndexParseError as exc:
            self.metadata.mark_index_error(path, f"{type(exc).__name__}: {exc}", self.clock())
            raise JobFailed(f"{type(exc).__name__}: {exc}") from exc
        if report.malformed_lines:
            logger.warning("%s: %d malformed line(s) quarantined", path, len(report.malformed_lines))
        self.metadata.mark_index_processed(path, len(report.rows), self.clock())
        return SUCCEEDED

    # filings

    def index_rows(self, year: Optional[int] = None,
                   form_type_list: Optional[Iterable[str]] = None) -> List[IndexRow]:
        """Rows of processed indexes of the configured type, filtered by form type."""
        wanted = {f.strip().upper() for f in form_type_list} if form_type_list else None
        rows = []
        for index in self.metadata.list_filing_indexes(year, self.filing_index_type, processed=True):
            report = parse_index(self.objects.get(key_for_raw_filing(index.edgar_path)))
            rows.extend(r for r in report.rows if wanted is None or r.form_type in wanted)
        return rows

    def process_all_filing_index(self, year: Optional[int] = None,
                                 form_type_list: Optional[Iterable[str]] = None) -> RunReport:
        rows = self.index_rows(year, form_type_list)
        chosen: Dict[str, IndexRow] = {}
        for row in sorted(rows, key=lambda r: (r.cik, r.file_name)):
            self.metadata.upsert_company(row.cik, row.date_filed)
            accession = accession_from_path(row.file_name)
            if accession is None:
                logger.warning("cannot derive an accession number from %s; row skipped", row.file_name)
                continue
            # a multi-filer filing is listed once per filer; key it under the lowest CIK
            chosen.setdefault(accession, row)
        with self._state_lock:
            self._filing_rows.update(chosen)
        jobs = [JobSpec(PROCESS_FILING, acc) for acc in sorted(chosen)]
        with self.objects.prefix_lock("filings/", self.lock_timeout), \
                self.objects.prefix_lock("documents/", self.lock_timeout):
            return self.execute(jobs, operation="process_all_filing_index")

    def _filing_failed(self, accession: str, row: IndexRow, detail: str):
        self.metadata.mark_filing_error(accession, row.cik, row.file_name, detail,
                                        row.form_type, row.date_filed)
        raise JobFailed(detail)

    def _process_filing(self, accession: str) -> str:
        row = self._filing_rows[accession]
        existing = self.metadata.get_filing(accession)
        if existing is not None and existing.is_processed:
            return SKIPPED
        try:
            raw = self.client.fetch(row.file_name)
        except (EdgarError, NotFound) as exc:
            self._filing_failed(accession, row, f"{type(exc).__name__}: {exc}")
        raw_key = key_for_raw_filing(row.file_name)
        self.objects.put(raw_key, raw, compress=True)
        try:
            parsed = parse_filing(raw)
        except FilingParseError as exc:
            self._filing_failed(accession, row, f"{type(exc).__name__}: {exc}")
        if parsed.header is None:
            reasons = "; ".join(msg for where, msg in parsed.warnings if where == "header")
            self._filing_failed(accession, row, reasons or "HeaderMissing")
        if parsed.header.accession_number != accession:
            self._filing_failed(accession, row, f"header accession {parsed.header.accession_number} "
                                                f"does not match index entry {accession}")
        for doc in parsed.documents:
            self.objects.put(key_for_document(doc.sha1), doc.body, compress=True)
        for where, message in parsed.warnings:
            logger.info("%s %s: %s", accession, where, message)
        self.metadata.record_filing(parsed, raw_key, row.file_name, row.cik, row.form_type, row.date_filed)
        return SUCCEEDED

    # companies

    def update_company_metadata(self) -> RunReport:
        jobs = [JobSpec(UPDATE_COMPANIES, str(c.cik)) for c in self.metadata.list_companies()]
        return self.execute(jobs, operation="update_company_metadata")

    def _update_company(self, subject: str) -> str:
        cik = int(subject)
        try:
            info = parse_company_metadata(self.client.fetch_company_metadata(cik))
        except (EdgarError, NotFound) as exc:
            raise JobFailed(f"{type(exc).__name__}: {exc}") from exc
        _, appended = self.metadata.append_company_info(
            cik, info["name"], info["state_of_incorporation"], info["sic"], self.clock().date())
        return SUCCEEDED if appended else SKIPPED

    # text

    def extract_all_text(self) -> RunReport:
        types: Dict[str, str] = {}
        # without a service, bodies with a recorded reason would only fail the same way again
        for doc in self.metadata.pending_extraction(include_attempted=bool(self.extractor_url)):
            types.setdefault(doc.sha1, doc.content_type)
        with self._state_lock:
            self._sha1_types.update(types)
        jobs = [JobSpec(EXTRACT_TEXT, sha1) for sha1 in sorted(types)]
        with self.objects.prefix_lock("documents/", self.lock_timeout):
            return self.execute(jobs, operation="extract_all_text")

    def _extract_text(self, sha1: str) -> str:
        result = extract_sha1(sha1, self._sha1_types[sha1], self.metadata, self.objects,
                              self.extractor_url)
        if result is None or result.status == EXTRACTED:
            return SUCCEEDED
        if result.status == UNEXTRACTED:
            return SKIPPED
        raise JobFailed(result.detail or "extraction failed")

    # search

    def run_search(self, terms: Sequence[Tuple[str, bool]], description_like: Optional[str] = None,
                   form_type: Optional[str] = None, label: Optional[str] = None) -> SearchOutcome:
        terms = [(str(t), bool(cs)) for t, cs in terms]
        if not terms or any(not t for t, _ in terms):
            raise InvalidArgument("search needs at least one non-empty term")
        if len({t for t, _ in terms}) != len(terms):
            raise InvalidArgument("search terms must be distinct")
        if description_like is not None:
            docs = self.metadata.find_documents_by_description(description_like, extracted_only=True)
        else:
            docs = self.metadata.extracted_documents()
        if form_type is not None:
            forms = {f.accession_number for f in self.metadata.find_filings(form_type=form_type)}
            docs = [d for d in docs if d.accession_number in forms]
        if label is None:
            label = json.dumps({"terms": terms, "description_like": description_like,
                                "form_type": form_type}, sort_keys=True)
        query, term_rows = self.metadata.ensure_search_query(label, terms, self.clock())
        term_ids = {t.term: t.id for t in term_rows}

        counts: Dict[str, Dict[str, int]] = {}
        counts_lock = threading.Lock()

        def scan(job: JobSpec) -> str:
            text = self.objects.get(key_for_text(job.subject)).decode("utf-8")
            found = {term: count_occurrences(text, term, cs) for term, cs in terms}
            with counts_lock:
                counts[job.subject] = found
            return SUCCEEDED

        sha1s = sorted({d.sha1 for d in docs})
        report = execute([JobSpec(SEARCH, s) for s in sha1s], scan, self.worker_count,
                         self.retry_limit, operation="run_search")
        rows = []
        for doc in docs:
            for term, _cs in terms:
                count = counts.get(doc.sha1, {}).get(term, 0)
                if count > 0:
                    rows.append((doc.accession_number, doc.sequence, term, count))
        rows.sort()
        self.metadata.save_search_results(
            query.id, [(term_ids[term], acc, seq, count) for acc, seq, term, count in rows])
        return SearchOutcome(query.id, label, rows, report)

    def ingest(self, year: Optional[int] = None,
               form_type_list: Optional[Iterable[str]] = None) -> List[RunReport]:
        """Index download, filing processing and text extraction in sequence."""
        return [
            self.download_filing_index_data(year),
            self.process_all_filing_index(year, form_type_list),
            self.extract_all_text(),
        ]
