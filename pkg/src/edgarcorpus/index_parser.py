"""Parse EDGAR full-index files (fixed-width or pipe-delimited, optionally gzipped)."""

from __future__ import annotations

import gzip
import re
import zlib
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import List, Optional, Sequence, Tuple

from .errors import EdgarCorpusError

FIXED_WIDTH = "fixed_width"
PIPE_DELIMITED = "pipe_delimited"

FIELDS = ("cik", "company_name", "form_type", "date_filed", "file_name")

# header labels as they appear across index vintages, matched case-insensitively
_LABELS = {
    "cik": ("cik",),
    "company_name": ("company name",),
    "form_type": ("form type",),
    "date_filed": ("date filed",),
    "file_name": ("file name", "filename"),
}

DEFAULT_SUFFIXES = (".txt", ".nc")

_DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y", "%m/%d/%y")
_RULE_RE = re.compile(r"^\s*-{3,}\s*$")


class IndexParseError(EdgarCorpusError):
    pass


class CorruptCompression(IndexParseError):
    pass


class EmptyInput(IndexParseError):
    pass


class MissingColumn(IndexParseError):
    pass


@dataclass(frozen=True)
class IndexRow:
    cik: int
    company_name: str
    form_type: str
    date_filed: date
    file_name: str

    def to_delimited(self) -> str:
        return "|".join([str(self.cik), self.company_name, self.form_type,
                         self.date_filed.isoformat(), self.file_name])


@dataclass
class IndexParseReport:
    rows: List[IndexRow] = field(default_factory=list)
    malformed_lines: List[Tuple[int, str, str]] = field(default_factory=list)
    detected_format: str = FIXED_WIDTH
    was_compressed: bool = False

    def to_delimited(self) -> str:
        """Render rows as a pipe-delimited table with a header line."""
        lines = ["CIK|Company Name|Form Type|Date Filed|Filename"]
        lines.extend(row.to_delimited() for row in self.rows)
        return "\n".join(lines) + "\n"


def decompress_if_needed(raw: bytes) -> Tuple[bytes, bool]:
    if raw[:2] != b"\x1f\x8b":
        return raw, False
    try:
        return gzip.decompress(raw), True
    except (OSError, EOFError, zlib.error) as exc:
        raise CorruptCompression(f"gzip stream is invalid: {exc}") from exc


def decode_text(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def _label_positions(line: str) -> dict:
    lowered = line.lower()
    found = {}
    for name, labels in _LABELS.items():
        for label in labels:
            match = re.search(r"(?<![a-z])" + re.escape(label) + r"(?![a-z])", lowered)
            if match:
                found[name] = match.start()
                break
    return found


def _is_header(line: str) -> bool:
    return len(_label_positions(line)) == len(FIELDS)


def _split_sections(lines: Sequence[str]) -> Tuple[Optional[str], int]:
    """Return (header line or None, index of first data line)."""
    for i, line in enumerate(lines):
        if _is_header(line):
            start = i + 1
            while start < len(lines) and not lines[start].strip():
                start += 1
            if start < len(lines) and _RULE_RE.match(lines[start]):
                start += 1
            return line, start
    return None, 0


def sniff_format(text: str) -> str:
    if not text or not text.strip():
        raise EmptyInput("index text is empty")
    lines = text.splitlines()
    header, start = _split_sections(lines)
    if header is not None:
        # the header is the most reliable witness; a short first row must not flip the format
        return PIPE_DELIMITED if header.count("|") >= 4 else FIXED_WIDTH
    for line in lines[start:]:
        if line.strip():
            return PIPE_DELIMITED if line.count("|") >= 4 else FIXED_WIDTH
    return FIXED_WIDTH


def infer_columns(header_line: str, data_lines: Sequence[str] = ()) -> List[Tuple[str, int, Optional[int]]]:
    """Column spans from header label positions, each widened to the next label.

    The last span is open-ended (``end`` is None) so long file names are kept
    whole. ``data_lines`` is accepted for callers that want to validate spans
    against content; label positions alone determine the result.
    """
    positions = _label_positions(header_line)
    missing = [name for name in FIELDS if name not in positions]
    if missing:
        raise MissingColumn(f"header lacks column(s): {', '.join(missing)}")
    ordered = sorted(positions.items(), key=lambda item: item[1])
    spans = []
    for i, (name, start) in enumerate(ordered):
        end = ordered[i + 1][1] if i + 1 < len(ordered) else None
        spans.append((name, start, end))
    return spans


def parse_date(value: str) -> date:
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(value, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognized date {value!r}")


def _validate(values: dict, suffixes: Sequence[str]) -> IndexRow:
    for name in FIELDS:
        if not values.get(name):
            raise ValueError(f"missing {name}")
    cik_text = values["cik"]
    if not (cik_text.isascii() and cik_text.isdigit()) or int(cik_text) <= 0:
        raise ValueError(f"cik is not a positive integer: {cik_text!r}")
    try:
        filed = parse_date(values["date_filed"])
    except ValueError as exc:
        raise ValueError(f"bad date_filed: {exc}") from None
    file_name = values["file_name"]
    if not file_name.lower().endswith(tuple(suffixes)):
        raise ValueError(f"file_name has unexpected suffix: {file_name!r}")
    return IndexRow(int(cik_text), values["company_name"], values["form_type"].upper(),
                    filed, file_name)


def parse_index(raw: bytes, suffixes: Sequence[str] = DEFAULT_SUFFIXES) -> IndexParseReport:
    data, was_compressed = decompress_if_needed(raw)
    text = decode_text(data)
    fmt = sniff_format(text)
    lines = text.splitlines()
    header, start = _split_sections(lines)
    if header is None:
        raise MissingColumn("no header line naming the index columns")
    report = IndexParseReport(detected_format=fmt, was_compressed=was_compressed)

    if fmt == PIPE_DELIMITED:
        # header order is authoritative; cells split on '|'
        order = [name for name, _ in sorted(_label_positions(header).items(), key=lambda kv: kv[1])]
    else:
        spans = infer_columns(header, lines[start:])

    for number, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        if fmt == PIPE_DELIMITED:
            cells = line.split("|")
            if len(cells) != len(order):
                report.malformed_lines.append(
                    (number, line, f"expected {len(order)} fields, found {len(cells)}"))
                continue
            values = {name: cell.strip() for name, cell in zip(order, cells)}
        else:
            values = {name: line[s:e].strip() for name, s, e in spans}
        try:
            report.rows.append(_validate(values, suffixes))
        except ValueError as exc:
            report.malformed_lines.append((number, line, str(exc)))
    return report


def data_line_count(raw: bytes) -> int:
    """Number of non-blank lines after the header block (for accounting checks)."""
    data, _ = decompress_if_needed(raw)
    lines = decode_text(data).splitlines()
    _, start = _split_sections(lines)
    return sum(1 for line in lines[start:] if line.strip())
