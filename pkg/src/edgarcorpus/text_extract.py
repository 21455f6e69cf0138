"""Plain-text extraction for filing document bodies."""

from __future__ import annotations

import html
import html.entities
import logging
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Optional

import requests

from .errors import EdgarCorpusError
from .object_store import key_for_document, key_for_text

logger = logging.getLogger(__name__)

EXTRACTED = "extracted"
UNEXTRACTED = "unextracted"
FAILED = "failed"

NATIVE_TEXT = "native_text"
NATIVE_HTML = "native_html"
EXTERNAL_SERVICE = "external_service"

_HTML_TYPES = {"text/html", "application/xhtml+xml"}
_TEXT_TYPES = {"text/plain", "text/xml", "application/xml", "text/csv", "application/json"}

_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "br", "caption", "dd", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section", "table", "tbody",
    "td", "tfoot", "th", "thead", "title", "tr", "ul", "page",
}
_SKIP_TAGS = {"script", "style", "head"}
_TAG_FRAGMENT_RE = re.compile(r"<[/!?A-Za-z][^<>]*>?")
_META_CHARSET_RE = re.compile(rb"<meta[^>]+charset\s*=\s*[\"']?([A-Za-z0-9_\-:.]+)", re.IGNORECASE)


class ServiceUnavailable(EdgarCorpusError):
    pass


@dataclass(frozen=True)
class ExtractionResult:
    sha1: Optional[str]
    status: str
    text: Optional[str] = None
    extractor: Optional[str] = None
    detail: Optional[str] = None

    def __post_init__(self):
        if (self.status == EXTRACTED) != (self.text is not None):
            raise ValueError("text must be present exactly when status is 'extracted'")
        if (self.status == EXTRACTED) != (self.extractor is not None):
            raise ValueError("extractor must be present exactly when status is 'extracted'")


def decode_body(body: bytes, declared: Optional[str] = None) -> str:
    """Declared charset, then UTF-8, then Latin-1 (which cannot fail)."""
    if declared:
        try:
            return body.decode(declared)
        except (LookupError, UnicodeDecodeError):
            pass
    try:
        return body.decode("utf-8")
    except UnicodeDecodeError:
        return body.decode("latin-1")


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


class _TextCollector(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=False)
        self.parts = []
        self.skip_depth = 0
        self.unknown_entities = set()

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self.skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self.skip_depth = max(0, self.skip_depth - 1)
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self.skip_depth:
            # unterminated tags and stray '<' come back as data; literal '<' must be written &lt;
            self.parts.append(_TAG_FRAGMENT_RE.sub(" ", data).replace("<", " "))

    def handle_entityref(self, name):
        if self.skip_depth:
            return
        if name in html.entities.name2codepoint:
            self.parts.append(chr(html.entities.name2codepoint[name]))
        else:
            self.unknown_entities.add(name)
            self.parts.append(f"&{name};")

    def handle_charref(self, name):
        if self.skip_depth:
            return
        try:
            code = int(name[1:], 16) if name[:1] in ("x", "X") else int(name)
            self.parts.append(chr(code) if 0 < code < 0x110000 and not 0xD800 <= code <= 0xDFFF else "�")
        except ValueError:
            self.parts.append(f"&#{name};")


def _collapse(text: str) -> str:
    # runs of spaces/tabs (including nbsp) -> one space; blank-line runs -> one blank line
    lines = [re.sub(r"[ \t\f\v\u00a0]+", " ", line).strip() for line in text.split("\n")]
    out = "\n".join(lines)
    out = re.sub(r"\n{3,}", "\n\n", out)
    return out.strip()


def html_to_text(markup: str) -> str:
    parser = _TextCollector()
    parser.feed(_normalize_newlines(markup))
    parser.close()
    if parser.unknown_entities:
        logger.warning("unknown HTML entities passed through: %s", ", ".join(sorted(parser.unknown_entities)))
    return _collapse("".join(parser.parts))


def extract_text(body: bytes, content_type: str, sha1: Optional[str] = None,
                 service_url: Optional[str] = None, session=None, timeout: float = 60.0) -> ExtractionResult:
    ctype = (content_type or "").split(";")[0].strip().lower()
    if ctype in _HTML_TYPES:
        match = _META_CHARSET_RE.search(body[:4096])
        declared = match.group(1).decode("ascii", "replace") if match else None
        return ExtractionResult(sha1, EXTRACTED, html_to_text(decode_body(body, declared)), NATIVE_HTML)
    if ctype.startswith("text/") or ctype in _TEXT_TYPES:
        return ExtractionResult(sha1, EXTRACTED, _normalize_newlines(decode_body(body)), NATIVE_TEXT)
    if not service_url:
        return ExtractionResult(sha1, UNEXTRACTED, detail=f"no extractor for {ctype or 'unknown type'}")
    try:
        response = (session or requests).put(
            service_url, data=body, timeout=timeout,
            headers={"Content-Type": ctype or "application/octet-stream", "Accept": "text/plain"})
    except requests.RequestException as exc:
        return ExtractionResult(sha1, FAILED, detail=f"ServiceUnavailable: {exc}")
    if response.status_code != 200:
        return ExtractionResult(sha1, FAILED, detail=f"extraction service returned HTTP {response.status_code}")
    text = _normalize_newlines(decode_body(response.content, response.encoding))
    return ExtractionResult(sha1, EXTRACTED, text, EXTERNAL_SERVICE)


@dataclass
class ExtractionSummary:
    computed: int = 0
    reused: int = 0
    rows_marked: int = 0
    unextracted: int = 0
    failed: int = 0


def extract_sha1(sha1: str, content_type: str, metadata, objects, service_url=None,
                 session=None) -> Optional[ExtractionResult]:
    """Extract one body and persist the outcome; the unit of work for one worker.

    Returns None when the text object already exists and was only re-linked.
    """
    text_key = key_for_text(sha1)
    if objects.exists(text_key):
        metadata.mark_extracted(sha1, True)
        return None
    body = objects.get(key_for_document(sha1))
    result = extract_text(body, content_type, sha1, service_url, session)
    if result.status == EXTRACTED:
        objects.put(text_key, result.text.encode("utf-8"), compress=True)
        metadata.mark_extracted(sha1, True)
    else:
        metadata.mark_extracted(sha1, False, result.detail)
    return result


def extract_pending(metadata, objects, service_url: Optional[str] = None, batch: Optional[int] = None,
                    session=None) -> ExtractionSummary:
    """Extract every document not yet marked extracted, one computation per distinct body.

    Bodies that already have a recorded reason for not being extracted are
    retried only when an external service is configured; without one the
    outcome could not change.
    """
    summary = ExtractionSummary()
    groups = {}
    for doc in metadata.pending_extraction(include_attempted=bool(service_url)):
        groups.setdefault(doc.sha1, []).append(doc)
    for sha1 in sorted(groups)[:batch]:
        rows = groups[sha1]
        try:
            result = extract_sha1(sha1, rows[0].content_type, metadata, objects, service_url, session)
        except EdgarCorpusError as exc:
            logger.error("extraction of %s failed: %s", sha1, exc)
            metadata.mark_extracted(sha1, False, f"{type(exc).__name__}: {exc}")
            summary.failed += 1
            continue
        if result is None:
            summary.reused += 1
            summary.rows_marked += len(rows)
            continue
        summary.computed += 1
        if result.status == EXTRACTED:
            summary.rows_marked += len(rows)
        elif result.status == UNEXTRACTED:
            summary.unextracted += 1
        else:
            summary.failed += 1
    return summary
