"""Relational persistence for companies, indexes, filings, documents and searches.

SQLite is the embedded profile. All writes are natural-key upserts, so
replaying an operation, or running it from several workers at once, leaves
the same rows behind.
"""

from __future__ import annotations

import contextlib
import sqlite3
import threading
from dataclasses import dataclass, fields
from datetime import date, datetime
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigError, EdgarCorpusError, InvalidArgument

ACCESSION_PATTERN = r"^\d{10}-\d{2}-\d{6}$"

TABLES = {
    # table -> ordering used for deterministic dumps
    "company": "cik",
    "company_info": "cik, as_of",
    "filing_index": "edgar_path",
    "filing": "accession_number",
    "filing_document": "accession_number, sequence",
    "search_query": "id",
    "search_query_term": "id",
    "search_query_result": "query_id, term_id, accession_number, sequence",
}


class StorageFailure(EdgarCorpusError):
    pass


class IllegalTransition(EdgarCorpusError):
    pass


class ConstraintViolation(EdgarCorpusError):
    pass


@dataclass(frozen=True)
class Company:
    cik: int
    date_first_seen: str


@dataclass(frozen=True)
class CompanyInfo:
    cik: int
    as_of: str
    name: str
    state_of_incorporation: Optional[str]
    sic: Optional[str]


@dataclass(frozen=True)
class FilingIndex:
    edgar_path: str
    year: int
    quarter: int
    index_type: str
    date_downloaded: Optional[str]
    is_processed: bool
    is_error: bool
    row_count: Optional[int]
    error_detail: Optional[str]


@dataclass(frozen=True)
class Filing:
    accession_number: str
    cik: int
    form_type: Optional[str]
    date_filed: Optional[str]
    edgar_path: str
    raw_object_key: Optional[str]
    is_processed: bool
    is_error: bool
    error_detail: Optional[str]
    document_count: Optional[int]


@dataclass(frozen=True)
class FilingDocument:
    accession_number: str
    sequence: int
    doc_type: Optional[str]
    description: Optional[str]
    filename: Optional[str]
    sha1: str
    content_type: str
    is_extracted: bool
    extraction_detail: Optional[str]


@dataclass(frozen=True)
class SearchQuery:
    id: int
    label: str
    created: str


@dataclass(frozen=True)
class SearchQueryTerm:
    id: int
    query_id: int
    term: str
    case_sensitive: bool


@dataclass(frozen=True)
class SearchQueryResult:
    query_id: int
    term_id: int
    accession_number: str
    sequence: int
    count: int


def _iso(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, (date, datetime)):
        return value.isoformat()
    return str(value)


def _casefold_contains(haystack, needle) -> int:
    if haystack is None or needle is None:
        return 0
    return int(needle.casefold() in haystack.casefold())


def _make(cls, row):
    if row is None:
        return None
    values = dict(row)
    for f in fields(cls):
        if f.name.startswith("is_") or f.name == "case_sensitive":
            values[f.name] = bool(values[f.name])
    return cls(**{f.name: values[f.name] for f in fields(cls)})


def schema_sql() -> str:
    return resources.files("edgarcorpus").joinpath("schema.sql").read_text()


def _sqlite_path(url: str) -> str:
    if url in (":memory:", "sqlite://", "sqlite:///:memory:"):
        return ":memory:"
    if url.startswith("sqlite:///"):
        return url[len("sqlite:///"):]
    if "://" in url:
        raise ConfigError("db.url", f"unsupported database profile {url.split('://')[0]!r}; "
                                    "only sqlite is built in")
    return url


class MetadataStore:
    def __init__(self, url: str = ":memory:"):
        path = _sqlite_path(str(url))
        if path != ":memory:":
            Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False, timeout=30,
                                     isolation_level=None)
        self._conn.row_factory = sqlite3.Row
        self._conn.create_function("casefold_contains", 2, _casefold_contains, deterministic=True)
        self._conn.execute("PRAGMA foreign_keys = ON")
        if path != ":memory:":
            self._conn.execute("PRAGMA journal_mode = WAL")
        self._conn.executescript(schema_sql())

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextlib.contextmanager
    def transaction(self):
        with self._lock:
            try:
                self._conn.execute("BEGIN IMMEDIATE")
            except sqlite3.Error as exc:
                raise StorageFailure(str(exc)) from exc
            try:
                yield self._conn
            except sqlite3.IntegrityError as exc:
                self._conn.execute("ROLLBACK")
                raise ConstraintViolation(str(exc)) from exc
            except sqlite3.Error as exc:
                self._conn.execute("ROLLBACK")
                raise StorageFailure(str(exc)) from exc
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            else:
                self._conn.execute("COMMIT")

    def _query(self, sql: str, params: Sequence = ()) -> List[sqlite3.Row]:
        with self._lock:
            try:
                return self._conn.execute(sql, params).fetchall()
            except sqlite3.Error as exc:
                raise StorageFailure(str(exc)) from exc

    # companies

    def upsert_company(self, cik: int, first_seen) -> Company:
        """Ensure the company row exists; ``date_first_seen`` keeps the earliest date offered."""
        if not isinstance(cik, int) or cik <= 0:
            raise InvalidArgument(f"cik must be a positive integer, got {cik!r}")
        seen = _iso(first_seen)
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO company (cik, date_first_seen) VALUES (?, ?) "
                "ON CONFLICT (cik) DO UPDATE SET date_first_seen = "
                "min(company.date_first_seen, excluded.date_first_seen)",
                (cik, seen))
        return self.get_company(cik)

    def get_company(self, cik: int) -> Optional[Company]:
        rows = self._query("SELECT * FROM company WHERE cik = ?", (cik,))
        return _make(Company, rows[0]) if rows else None

    def list_companies(self) -> List[Company]:
        return [_make(Company, r) for r in self._query("SELECT * FROM company ORDER BY cik")]

    def latest_company_info(self, cik: int) -> Optional[CompanyInfo]:
        rows = self._query("SELECT * FROM company_info WHERE cik = ? ORDER BY as_of DESC LIMIT 1", (cik,))
        return _make(CompanyInfo, rows[0]) if rows else None

    def company_info_history(self, cik: int) -> List[CompanyInfo]:
        rows = self._query("SELECT * FROM company_info WHERE cik = ? ORDER BY as_of", (cik,))
        return [_make(CompanyInfo, r) for r in rows]

    def append_company_info(self, cik: int, name: str, state: Optional[str], sic: Optional[str],
                            as_of) -> Tuple[CompanyInfo, bool]:
        """Append a history row unless it matches the latest one. Returns (row, appended)."""
        as_of = _iso(as_of)
        with self.transaction() as conn:
            latest = conn.execute(
                "SELECT * FROM company_info WHERE cik = ? ORDER BY as_of DESC LIMIT 1", (cik,)).fetchone()
            if latest is not None and (latest["name"], latest["state_of_incorporation"],
                                       latest["sic"]) == (name, state, sic):
                return _make(CompanyInfo, latest), False
            conn.execute(
                "INSERT INTO company_info (cik, as_of, name, state_of_incorporation, sic) "
                "VALUES (?, ?, ?, ?, ?) ON CONFLICT (cik, as_of) DO UPDATE SET "
                "name = excluded.name, state_of_incorporation = excluded.state_of_incorporation, "
                "sic = excluded.sic",
                (cik, as_of, name, state, sic))
        return CompanyInfo(cik, as_of, name, state, sic), True

    # filing indexes

    def record_filing_index(self, descriptor) -> FilingIndex:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO filing_index (edgar_path, year, quarter, index_type) VALUES (?, ?, ?, ?) "
                "ON CONFLICT (edgar_path) DO NOTHING",
                (descriptor.path, descriptor.year, descriptor.quarter, descriptor.index_type))
        return self.get_filing_index(descriptor.path)

    def get_filing_index(self, edgar_path: str) -> Optional[FilingIndex]:
        rows = self._query("SELECT * FROM filing_index WHERE edgar_path = ?", (edgar_path,))
        return _make(FilingIndex, rows[0]) if rows else None

    def list_filing_indexes(self, year: Optional[int] = None, index_type: Optional[str] = None,
                            processed: Optional[bool] = None) -> List[FilingIndex]:
        sql, params = "SELECT * FROM filing_index WHERE 1=1", []
        if year is not None:
            sql += " AND year = ?"
            params.append(year)
        if index_type is not None:
            sql += " AND index_type = ?"
            params.append(index_type)
        if processed is not None:
            sql += " AND is_processed = ?"
            params.append(int(processed))
        rows = self._query(sql + " ORDER BY year, quarter, index_type, edgar_path", params)
        return [_make(FilingIndex, r) for r in rows]

    def _transition(self, table: str, key_col: str, key: str, sql: str, params: Sequence):
        with self.transaction() as conn:
            cur = conn.execute(sql, params)
            if cur.rowcount == 0:
                raise IllegalTransition(f"no {table} row for {key!r}")

    def mark_index_processed(self, edgar_path: str, row_count: int, when) -> FilingIndex:
        self._transition(
            "filing_index", "edgar_path", edgar_path,
            "UPDATE filing_index SET is_processed = 1, is_error = 0, error_detail = NULL, "
            "row_count = ?, date_downloaded = ? WHERE edgar_path = ?",
            (row_count, _iso(when), edgar_path))
        return self.get_filing_index(edgar_path)

    def mark_index_error(self, edgar_path: str, detail: str, when=None) -> FilingIndex:
        self._transition(
            "filing_index", "edgar_path", edgar_path,
            "UPDATE filing_index SET is_error = 1, is_processed = 0, error_detail = ?, "
            "date_downloaded = coalesce(?, date_downloaded) WHERE edgar_path = ?",
            (detail, _iso(when), edgar_path))
        return self.get_filing_index(edgar_path)

    # filings

    def get_filing(self, accession_number: str) -> Optional[Filing]:
        rows = self._query("SELECT * FROM filing WHERE accession_number = ?", (accession_number,))
        return _make(Filing, rows[0]) if rows else None

    def _upsert_filing(self, conn, accession_number, cik, form_type, date_filed, edgar_path,
                       raw_key, processed, error, document_count):
        conn.execute(
            "INSERT INTO filing (accession_number, cik, form_type, date_filed, edgar_path, "
            "raw_object_key, is_processed, is_error, error_detail, document_count) "
            "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?) ON CONFLICT (accession_number) DO UPDATE SET "
            "cik = excluded.cik, form_type = excluded.form_type, date_filed = excluded.date_filed, "
            "edgar_path = excluded.edgar_path, raw_object_key = excluded.raw_object_key, "
            "is_processed = excluded.is_processed, is_error = excluded.is_error, "
            "error_detail = excluded.error_detail, document_count = excluded.document_count",
            (accession_number, cik, form_type, _iso(date_filed), edgar_path, raw_key,
             int(processed), int(error is not None), error, document_count))

    def record_filing(self, parsed, raw_key: str, edgar_path: str, cik: int,
                      form_type: Optional[str] = None, date_filed=None) -> Filing:
        """Upsert a parsed filing and its documents in one transaction.

        ``cik``, ``form_type`` and ``date_filed`` come from the index row; header
        values are used only where the caller passes None.
        """
        header = parsed.header
        if header is None:
            raise ConstraintViolation("parsed filing has no header; cannot key it")
        accession = header.accession_number
        form_type = form_type or header.form_type
        date_filed = date_filed or header.date_filed
        docs = _unique_sequences(parsed.documents)
        with self.transaction() as conn:
            self._upsert_filing(conn, accession, cik, form_type, date_filed, edgar_path, raw_key,
                                True, None, len(docs))
            self._record_documents(conn, accession, docs)
        return self.get_filing(accession)

    def record_documents(self, accession_number: str, docs: Sequence) -> List[FilingDocument]:
        docs = _unique_sequences(docs)
        with self.transaction() as conn:
            if conn.execute("SELECT 1 FROM filing WHERE accession_number = ?",
                            (accession_number,)).fetchone() is None:
                raise ConstraintViolation(f"no filing {accession_number}")
            self._record_documents(conn, accession_number, docs)
            conn.execute("UPDATE filing SET document_count = ? WHERE accession_number = ?",
                         (len(docs), accession_number))
        return self.list_documents(accession_number)

    def _record_documents(self, conn, accession, docs):
        sequences = [d.sequence for d in docs]
        placeholders = ",".join("?" * len(sequences)) or "NULL"
        conn.execute(
            f"DELETE FROM search_query_result WHERE accession_number = ? AND sequence NOT IN ({placeholders})",
            [accession, *sequences])
        conn.execute(
            f"DELETE FROM filing_document WHERE accession_number = ? AND sequence NOT IN ({placeholders})",
            [accession, *sequences])
        for d in docs:
            conn.execute(
                "INSERT INTO filing_document (accession_number, sequence, doc_type, description, "
                "filename, sha1, content_type) VALUES (?, ?, ?, ?, ?, ?, ?) "
                "ON CONFLICT (accession_number, sequence) DO UPDATE SET doc_type = excluded.doc_type, "
                "description = excluded.description, filename = excluded.filename, "
                "content_type = excluded.content_type, sha1 = excluded.sha1, "
                "is_extracted = CASE WHEN filing_document.sha1 = excluded.sha1 "
                "THEN filing_document.is_extracted ELSE 0 END, "
                "extraction_detail = CASE WHEN filing_document.sha1 = excluded.sha1 "
                "THEN filing_document.extraction_detail ELSE NULL END",
                (accession, d.sequence, d.doc_type, d.description, d.filename, d.sha1, d.content_type))

    def mark_filing_error(self, accession_number: str, cik: int, edgar_path: str, detail: str,
                          form_type: Optional[str] = None, date_filed=None) -> Filing:
        with self.transaction() as conn:
            self._upsert_filing(conn, accession_number, cik, form_type, date_filed, edgar_path,
                                None, False, detail, None)
        return self.get_filing(accession_number)

    def list_filings(self) -> List[Filing]:
        return [_make(Filing, r) for r in self._query("SELECT * FROM filing ORDER BY accession_number")]

    def find_filings(self, form_type: Optional[str] = None, date_from=None, date_to=None,
                     cik: Optional[int] = None) -> List[Filing]:
        sql, params = "SELECT * FROM filing WHERE 1=1", []
        if form_type is not None:
            sql += " AND upper(form_type) = upper(?)"
            params.append(form_type)
        if date_from is not None:
            sql += " AND date_filed >= ?"
            params.append(_iso(date_from))
        if date_to is not None:
            sql += " AND date_filed <= ?"
            params.append(_iso(date_to))
        if cik is not None:
            sql += " AND cik = ?"
            params.append(cik)
        rows = self._query(sql + " ORDER BY date_filed, accession_number", params)
        return [_make(Filing, r) for r in rows]

    # documents

    def list_documents(self, accession_number: Optional[str] = None) -> List[FilingDocument]:
        if accession_number is None:
            rows = self._query("SELECT * FROM filing_document ORDER BY accession_number, sequence")
        else:
            rows = self._query("SELECT * FROM filing_document WHERE accession_number = ? "
                               "ORDER BY sequence", (accession_number,))
        return [_make(FilingDocument, r) for r in rows]

    def find_documents_by_description(self, substring: str, limit: Optional[int] = None,
                                      extracted_only: bool = False) -> List[FilingDocument]:
        if limit is not None and limit <= 0:
            raise InvalidArgument("limit must be positive")
        sql = ("SELECT d.* FROM filing_document d JOIN filing f USING (accession_number) "
               "WHERE casefold_contains(d.description, ?)")
        if extracted_only:
            sql += " AND d.is_extracted = 1"
        sql += " ORDER BY f.date_filed, d.accession_number, d.sequence"
        params: list = [substring]
        if limit is not None:
            sql += " LIMIT ?"
            params.append(limit)
        return [_make(FilingDocument, r) for r in self._query(sql, params)]

    def extracted_documents(self) -> List[FilingDocument]:
        rows = self._query(
            "SELECT d.* FROM filing_document d JOIN filing f USING (accession_number) "
            "WHERE d.is_extracted = 1 ORDER BY f.date_filed, d.accession_number, d.sequence")
        return [_make(FilingDocument, r) for r in rows]

    def pending_extraction(self, include_attempted: bool = True) -> List[FilingDocument]:
        """Rows not yet extracted; ``include_attempted=False`` drops rows with a recorded reason."""
        where = "is_extracted = 0" + ("" if include_attempted else " AND extraction_detail IS NULL")
        rows = self._query(f"SELECT * FROM filing_document WHERE {where} "
                           "ORDER BY sha1, accession_number, sequence")
        return [_make(FilingDocument, r) for r in rows]

    def mark_extracted(self, sha1: str, extracted: bool, detail: Optional[str] = None) -> int:
        """Set extraction state on every not-yet-extracted row holding ``sha1``."""
        with self.transaction() as conn:
            cur = conn.execute(
                "UPDATE filing_document SET is_extracted = ?, extraction_detail = ? "
                "WHERE sha1 = ? AND is_extracted = 0",
                (int(extracted), detail, sha1))
            return cur.rowcount

    # search

    def ensure_search_query(self, label: str, terms: Iterable[Tuple[str, bool]], created) -> Tuple[
            SearchQuery, List[SearchQueryTerm]]:
        with self.transaction() as conn:
            conn.execute("INSERT INTO search_query (label, created) VALUES (?, ?) "
                         "ON CONFLICT (label) DO NOTHING", (label, _iso(created)))
            qid = conn.execute("SELECT id FROM search_query WHERE label = ?", (label,)).fetchone()[0]
            for term, case_sensitive in terms:
                conn.execute("INSERT INTO search_query_term (query_id, term, case_sensitive) "
                             "VALUES (?, ?, ?) ON CONFLICT (query_id, term) DO NOTHING",
                             (qid, term, int(case_sensitive)))
        query = _make(SearchQuery, self._query("SELECT * FROM search_query WHERE id = ?", (qid,))[0])
        term_rows = self._query("SELECT * FROM search_query_term WHERE query_id = ? ORDER BY id", (qid,))
        return query, [_make(SearchQueryTerm, r) for r in term_rows]

    def save_search_results(self, query_id: int, results: Iterable[Tuple[int, str, int, int]]) -> int:
        """Persist (term_id, accession, sequence, count) rows; zero counts are skipped."""
        saved = 0
        with self.transaction() as conn:
            if conn.execute("SELECT 1 FROM search_query WHERE id = ?", (query_id,)).fetchone() is None:
                raise ConstraintViolation(f"no search query {query_id}")
            for term_id, accession, sequence, count in results:
                if count < 0:
                    raise ConstraintViolation("search counts must be non-negative")
                if count == 0:
                    continue
                conn.execute(
                    "INSERT INTO search_query_result (query_id, term_id, accession_number, sequence, count) "
                    "VALUES (?, ?, ?, ?, ?) ON CONFLICT (query_id, term_id, accession_number, sequence) "
                    "DO UPDATE SET count = excluded.count",
                    (query_id, term_id, accession, sequence, count))
                saved += 1
        return saved

    def search_results(self, query_id: int) -> List[SearchQueryResult]:
        rows = self._query("SELECT * FROM search_query_result WHERE query_id = ? "
                           "ORDER BY term_id, accession_number, sequence", (query_id,))
        return [_make(SearchQueryResult, r) for r in rows]

    # audit

    def counts(self) -> dict:
        return {table: self._query(f"SELECT count(*) FROM {table}")[0][0] for table in TABLES}

    def dump(self) -> str:
        """Deterministic text rendering of every table, for state comparisons."""
        out = []
        for table, order in TABLES.items():
            rows = self._query(f"SELECT * FROM {table} ORDER BY {order}")
            out.append(f"-- {table} ({len(rows)})")
            out.extend(repr(tuple(row)) for row in rows)
        return "\n".join(out) + "\n"


def _unique_sequences(docs: Sequence) -> list:
    seen, unique = set(), []
    for d in docs:
        if d.sequence not in seen:
            seen.add(d.sequence)
            unique.append(d)
    return unique
