"""Parse EDGAR SGML filing containers into header metadata and decoded documents."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import List, Optional, Tuple

from .errors import EdgarCorpusError
from .index_parser import decode_text
from .uucode import MalformedUuencode, find_uuencoded, uudecode

SEC_HEADER = "sec_header"
IMS_HEADER = "ims_header"

ACCESSION_RE = re.compile(r"^\d{10}-\d{2}-\d{6}$")
UNPARSEABLE = "unparseable document"

_HEADER_OPEN_RE = re.compile(rb"<(SEC|IMS)-HEADER>", re.IGNORECASE)
_DOC_OPEN = b"<DOCUMENT>"
_DOC_CLOSE = b"</DOCUMENT>"
_TEXT_OPEN_RE = re.compile(rb"<TEXT>", re.IGNORECASE)
_TEXT_CLOSE_RE = re.compile(rb"</TEXT>", re.IGNORECASE)
_COLON_TAG_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9 _\-/&.]*?)\s*:\s*(.*?)\s*$")
_SGML_TAG_RE = re.compile(r"^\s*<([A-Za-z][A-Za-z0-9\-_.]*)>\s*(.*?)\s*$")
_DOC_TAG_RE = re.compile(rb"^\s*<([A-Za-z][A-Za-z0-9\-_.]*)>[ \t]*([^\r\n]*?)[ \t]*\r?$")

# normalized header tag name -> typed field
_HEADER_FIELDS = {
    "ACCESSION NUMBER": "accession_number",
    "CONFORMED SUBMISSION TYPE": "form_type",
    "FORM TYPE": "form_type",
    "TYPE": "form_type",
    "CENTRAL INDEX KEY": "cik",
    "CIK": "cik",
    "COMPANY CONFORMED NAME": "company_name",
    "CONFORMED NAME": "company_name",
    "STANDARD INDUSTRIAL CLASSIFICATION": "sic",
    "ASSIGNED SIC": "sic",
    "FILED AS OF DATE": "date_filed",
    "FILING DATE": "date_filed",
    "CONFORMED PERIOD OF REPORT": "period",
    "PERIOD": "period",
}

# header tags that mark withdrawn or deleted filings; kept in extra and surfaced as warnings
_REMOVAL_TAGS = {"DELETION", "DELETED", "WITHDRAWN", "PAPER"}

_MAGIC = (
    (b"%PDF", "application/pdf"),
    (b"PK\x03\x04", "application/zip"),
    (b"GIF8", "image/gif"),
    (b"\x89PNG", "image/png"),
    (b"\xff\xd8", "image/jpeg"),
)

_EXTENSIONS = {
    "htm": "text/html",
    "html": "text/html",
    "xml": "text/xml",
    "xsd": "text/xml",
    "txt": "text/plain",
    "pdf": "application/pdf",
    "zip": "application/zip",
    "gif": "image/gif",
    "png": "image/png",
    "jpg": "image/jpeg",
    "jpeg": "image/jpeg",
    "json": "application/json",
    "js": "application/javascript",
    "css": "text/css",
    "xls": "application/vnd.ms-excel",
    "xlsx": "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
}


class FilingParseError(EdgarCorpusError):
    pass


class NotAFiling(FilingParseError):
    pass


class MissingAccession(FilingParseError):
    pass


class MissingSequence(FilingParseError):
    pass


@dataclass
class FilingHeader:
    accession_number: str
    header_kind: str
    cik: Optional[int] = None
    company_name: Optional[str] = None
    form_type: Optional[str] = None
    sic: Optional[str] = None
    date_filed: Optional[date] = None
    period: Optional[date] = None
    extra: List[Tuple[str, str]] = field(default_factory=list)


@dataclass
class ParsedDocument:
    sequence: int
    body: bytes
    content_type: str
    sha1: str
    was_uuencoded: bool = False
    doc_type: Optional[str] = None
    filename: Optional[str] = None
    description: Optional[str] = None


@dataclass
class ParsedFiling:
    header: Optional[FilingHeader]
    documents: List[ParsedDocument] = field(default_factory=list)
    warnings: List[Tuple[str, str]] = field(default_factory=list)


def sha1_hex(data: bytes) -> str:
    return hashlib.sha1(data).hexdigest()


def detect_content_type(body: bytes, filename: Optional[str] = None) -> str:
    for magic, mime in _MAGIC:
        if body.startswith(magic):
            return mime
    head = body[:512].lstrip().lower()
    if head.startswith(b"<?xml"):
        return "text/xml"
    if head.startswith(b"<html") or head.startswith(b"<!doctype html"):
        return "text/html"
    if filename and "." in filename:
        ext = filename.rsplit(".", 1)[1].strip().lower()
        if ext in _EXTENSIONS:
            return _EXTENSIONS[ext]
    return "text/plain"


def _parse_yyyymmdd(value: str) -> Optional[date]:
    value = value.strip()
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return datetime.strptime(value, fmt).date()
        except ValueError:
            continue
    return None


def _normalize_tag(name: str) -> str:
    return re.sub(r"[\s\-_]+", " ", name.strip()).upper()


def _sic_code(value: str) -> Optional[str]:
    match = re.search(r"\[(\d{1,4})\]", value) or re.fullmatch(r"\s*(\d{1,4})\s*", value)
    return match.group(1).zfill(4) if match else None


def parse_header(text: str) -> FilingHeader:
    """Parse a header block; both ``NAME: value`` and ``<NAME>value`` lines are accepted.

    The first occurrence of a known tag wins (multi-filer headers repeat
    company data); every other tag is kept in ``extra`` in file order.
    """
    lines = text.splitlines()
    kind = SEC_HEADER
    opening = re.match(r"\s*<(SEC|IMS)-HEADER>", text, re.IGNORECASE)
    if opening and opening.group(1).upper() == "IMS":
        kind = IMS_HEADER
    typed: dict = {}
    extra: List[Tuple[str, str]] = []
    for line in lines:
        if not line.strip() or re.match(r"\s*</?(SEC|IMS)-HEADER>", line, re.IGNORECASE):
            continue
        match = _SGML_TAG_RE.match(line)
        if match and not line.strip().startswith("</"):
            name, value = match.group(1), match.group(2)
        else:
            match = _COLON_TAG_RE.match(line)
            if not match:
                continue
            name, value = match.group(1), match.group(2)
        norm = _normalize_tag(name)
        target = _HEADER_FIELDS.get(norm)
        if target and target not in typed and value:
            typed[target] = value
        else:
            extra.append((norm, value))

    accession = typed.get("accession_number", "").strip()
    if not ACCESSION_RE.match(accession):
        raise MissingAccession(f"no valid accession number in header (found {accession!r})")
    header = FilingHeader(accession_number=accession, header_kind=kind, extra=extra)
    cik = typed.get("cik", "").strip()
    if cik.isascii() and cik.isdigit() and int(cik) > 0:
        header.cik = int(cik)
    if typed.get("company_name"):
        header.company_name = typed["company_name"]
    if typed.get("form_type"):
        header.form_type = typed["form_type"].upper()
    if typed.get("sic"):
        header.sic = _sic_code(typed["sic"])
    if typed.get("date_filed"):
        header.date_filed = _parse_yyyymmdd(typed["date_filed"])
    if typed.get("period"):
        header.period = _parse_yyyymmdd(typed["period"])
    return header


def _strip_one_newline(body: bytes, leading: bool) -> bytes:
    if leading:
        if body.startswith(b"\r\n"):
            return body[2:]
        return body[1:] if body.startswith(b"\n") else body
    if body.endswith(b"\r\n"):
        return body[:-2]
    return body[:-1] if body.endswith(b"\n") else body


def parse_document(segment: bytes, position: Optional[int] = None,
                   warnings: Optional[List[Tuple[str, str]]] = None) -> ParsedDocument:
    """Parse one DOCUMENT segment.

    ``position`` is the 1-based index of the segment within its filing and is
    used as the sequence number when the SEQUENCE tag is absent or unusable.
    """
    if warnings is None:
        warnings = []
    where = f"document {position}" if position is not None else "document"
    start = segment.find(_DOC_OPEN)
    if start >= 0:
        segment = segment[start + len(_DOC_OPEN):]
    close = segment.rfind(_DOC_CLOSE)
    if close >= 0:
        segment = segment[:close]

    text_open = _TEXT_OPEN_RE.search(segment)
    if text_open:
        meta_part = segment[:text_open.start()]
        rest = segment[text_open.end():]
        text_close = _TEXT_CLOSE_RE.search(rest)
        if text_close:
            body = rest[:text_close.start()]
        else:
            body = rest
            warnings.append((where, "TEXT region is not closed"))
        body = _strip_one_newline(_strip_one_newline(body, True), False)
    else:
        meta_part, body = segment, b""
        warnings.append((where, "no TEXT region"))

    meta = {}
    for raw_line in meta_part.splitlines():
        match = _DOC_TAG_RE.match(raw_line)
        if match:
            name = match.group(1).decode("ascii", "replace").upper()
            meta.setdefault(name, decode_text(match.group(2)).strip())

    sequence = None
    seq_text = meta.get("SEQUENCE", "")
    if seq_text.isascii() and seq_text.isdigit() and int(seq_text) >= 1:
        sequence = int(seq_text)
    if sequence is None:
        if position is None:
            raise MissingSequence(f"{where}: no usable SEQUENCE tag and no position to fall back on")
        sequence = position
        warnings.append((where, f"missing or invalid SEQUENCE; assigned {position} by position"))

    was_uuencoded = False
    head_text = decode_text(body[:4096])
    if find_uuencoded(head_text):
        notes: List[str] = []
        body = uudecode(decode_text(body), notes)
        was_uuencoded = True
        warnings.extend((where, note) for note in notes)

    filename = meta.get("FILENAME") or None
    return ParsedDocument(
        sequence=sequence,
        body=body,
        content_type=detect_content_type(body, filename),
        sha1=sha1_hex(body),
        was_uuencoded=was_uuencoded,
        doc_type=meta.get("TYPE") or None,
        filename=filename,
        description=meta.get("DESCRIPTION") or None,
    )


def _document_segments(raw: bytes, warnings: List[Tuple[str, str]]) -> List[bytes]:
    opens = [m.start() for m in re.finditer(re.escape(_DOC_OPEN), raw)]
    segments = []
    for i, start in enumerate(opens):
        limit = opens[i + 1] if i + 1 < len(opens) else len(raw)
        close = raw.find(_DOC_CLOSE, start, limit)
        if close < 0:
            warnings.append((f"document {i + 1}", "DOCUMENT tag is not closed"))
            segments.append(raw[start:limit])
        else:
            segments.append(raw[start:close + len(_DOC_CLOSE)])
    return segments


def parse_filing(raw: bytes) -> ParsedFiling:
    warnings: List[Tuple[str, str]] = []
    header_match = _HEADER_OPEN_RE.search(raw)
    segments = _document_segments(raw, warnings)
    if header_match is None and not segments:
        raise NotAFiling("no SEC-HEADER/IMS-HEADER tag and no DOCUMENT tag")

    header = None
    if header_match is None:
        warnings.append(("header", "HeaderMissing: no SEC-HEADER or IMS-HEADER block"))
    else:
        tag = header_match.group(1)
        close_re = re.compile(rb"</" + tag + rb"-HEADER>", re.IGNORECASE)
        close = close_re.search(raw, header_match.end())
        end = close.start() if close else (raw.find(_DOC_OPEN, header_match.end()))
        if end < 0:
            end = len(raw)
        if close is None:
            warnings.append(("header", "header block is not closed"))
        try:
            header = parse_header(decode_text(raw[header_match.start():end]))
        except MissingAccession as exc:
            warnings.append(("header", f"HeaderMissing: {exc}"))
        else:
            for name, value in header.extra:
                if name in _REMOVAL_TAGS:
                    warnings.append(("header", f"removal marker {name}: {value}"))

    documents: List[ParsedDocument] = []
    seen = set()
    for position, segment in enumerate(segments, start=1):
        try:
            doc = parse_document(segment, position, warnings)
        except (MalformedUuencode, MissingSequence) as exc:
            warnings.append((f"document {position}", f"{UNPARSEABLE}: {exc}"))
            continue
        if doc.sequence in seen:
            warnings.append((f"document {position}", f"duplicate sequence {doc.sequence}"))
        seen.add(doc.sequence)
        documents.append(doc)
    return ParsedFiling(header=header, documents=documents, warnings=warnings)
