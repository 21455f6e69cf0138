"""Classic uuencoding framing (begin/end blocks) over the standard library line codec.

Line-level checks run before decoding so malformed EDGAR payloads get
typed errors instead of silently zero-padded bytes.
"""

from __future__ import annotations

import binascii
import re
from typing import List, Optional

from .errors import EdgarCorpusError

BEGIN_RE = re.compile(r"^begin [0-7]{3,4} \S")
_LINE_BYTES = 45


class MalformedUuencode(EdgarCorpusError):
    pass


def uuencode(data: bytes, name: str = "data", mode: str = "644") -> str:
    # backtick for zero, so trailing-space stripping by mail or editors is harmless
    lines = [f"begin {mode} {name}"]
    for offset in range(0, len(data), _LINE_BYTES):
        lines.append(binascii.b2a_uu(data[offset:offset + _LINE_BYTES], backtick=True)
                     .decode("ascii").rstrip("\n"))
    lines.append("`")
    lines.append("end")
    return "\n".join(lines) + "\n"


def _val(ch: str, line_no: int) -> int:
    code = ord(ch)
    if not 0x20 <= code <= 0x60:
        raise MalformedUuencode(f"line {line_no}: character {ch!r} outside the uuencode alphabet")
    return (code - 0x20) & 0x3F


def uudecode(text: str, warnings: Optional[List[str]] = None) -> bytes:
    """Decode the first ``begin`` block in ``text``.

    A line may omit the padding characters of its final group; any shortfall
    into characters that carry data bits raises MalformedUuencode. Extra
    characters past the declared length (some encoders append a checksum) are
    ignored. A missing ``end`` or content after it is tolerated and noted in
    ``warnings`` when a list is supplied.
    """
    if warnings is None:
        warnings = []
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if BEGIN_RE.match(line):
            start = i + 1
            break
    if start is None:
        raise MalformedUuencode("no 'begin <mode> <name>' line")

    out = bytearray()
    ended = False
    i = start
    while i < len(lines):
        line = lines[i].rstrip("\r\n")
        i += 1
        if line.strip() == "end":
            ended = True
            break
        if not line:
            continue
        count = _val(line[0], i)
        if count == 0:
            continue
        needed = -(-count * 4 // 3)
        chars = line[1:]
        if len(chars) < needed:
            raise MalformedUuencode(
                f"line {i}: declares {count} bytes but carries only {len(chars)} characters")
        # padding past the data-carrying characters is ignored, not checked
        chars = chars[:needed]
        for ch in chars:
            _val(ch, i)
        try:
            out += binascii.a2b_uu(line[0] + chars)[:count]
        except binascii.Error as exc:
            raise MalformedUuencode(f"line {i}: {exc}") from None

    if not ended:
        warnings.append("uuencoded block has no 'end' line")
    else:
        trailing = [ln for ln in lines[i:] if ln.strip() and not re.fullmatch(r"\s*</?[A-Za-z]+>\s*", ln)]
        if trailing:
            warnings.append(f"{len(trailing)} line(s) of trailing content after 'end'")
    return bytes(out)


def find_uuencoded(text: str) -> bool:
    """True iff the first non-blank line (past one optional wrapper tag such as <PDF>) opens a uuencoded block."""
    seen_wrapper = False
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if not seen_wrapper and re.fullmatch(r"<[A-Za-z]+>", stripped):
            seen_wrapper = True
            continue
        return bool(BEGIN_RE.match(line))
    return False
