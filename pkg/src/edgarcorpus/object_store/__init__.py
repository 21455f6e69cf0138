"""Content-addressable blob store with transparent gzip and byte-range reads."""

from __future__ import annotations

import contextlib
import gzip
import hashlib
import logging
import re
import zlib
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Tuple

from filelock import FileLock, Timeout

from ..edgar_client import DEFAULT_RATE_LIMIT_SIGNATURES, is_rate_limited_payload
from ..errors import EdgarCorpusError, InvalidPath, NotFound
from .backends import BackendUnavailable, FilesystemBackend, QuotaExceeded, S3Backend

__all__ = [
    "ObjectStore", "ObjectRef", "StoreStats", "FilesystemBackend", "S3Backend",
    "BackendUnavailable", "QuotaExceeded", "CorruptObject", "InvalidDigest", "StoreBusy",
    "key_for_raw_filing", "key_for_document", "key_for_text", "validate_key",
    "SWEEP_PREDICATES",
]

logger = logging.getLogger(__name__)

RAW_FILING_PREFIX = "filings/raw/"
DOCUMENT_PREFIX = "documents/raw/"
TEXT_PREFIX = "documents/text/"

SWEEP_PREDICATES = ("rate_limited", "empty", "access_denied")

DEFAULT_ACCESS_DENIED_SIGNATURES = (
    "<Code>AccessDenied</Code>",
    "Access Denied",
    "You don't have permission to access",
)

_SHA1_RE = re.compile(r"^[0-9a-f]{40}$")


class CorruptObject(EdgarCorpusError):
    pass


class InvalidDigest(EdgarCorpusError, ValueError):
    pass


class StoreBusy(EdgarCorpusError):
    """A conflicting sweep or ingestion already holds the prefix lock."""


def validate_key(key: str) -> str:
    if not isinstance(key, str) or not key:
        raise InvalidPath("object key must be a non-empty string")
    if key.startswith("/") or key.endswith("/"):
        raise InvalidPath(f"object key may not start or end with '/': {key!r}")
    for part in key.split("/"):
        if part in ("", ".", ".."):
            raise InvalidPath(f"object key has an empty, '.' or '..' segment: {key!r}")
    if any(ord(ch) < 0x20 for ch in key):
        raise InvalidPath(f"object key contains control characters: {key!r}")
    return key


def _check_digest(sha1: str) -> str:
    if not isinstance(sha1, str) or not _SHA1_RE.match(sha1):
        raise InvalidDigest(f"not a lowercase 40-hex SHA-1 digest: {sha1!r}")
    return sha1


def key_for_raw_filing(edgar_path: str) -> str:
    from ..edgar_client import validate_path

    return validate_key(RAW_FILING_PREFIX + validate_path(edgar_path))


def key_for_document(sha1: str) -> str:
    return DOCUMENT_PREFIX + _check_digest(sha1)


def key_for_text(sha1: str) -> str:
    return TEXT_PREFIX + _check_digest(sha1)


@dataclass(frozen=True)
class ObjectRef:
    key: str
    compressed: bool
    stored_length: int
    logical_length: int

    def __post_init__(self):
        validate_key(self.key)
        if not self.compressed and self.stored_length != self.logical_length:
            raise ValueError("uncompressed object must have stored_length == logical_length")


@dataclass(frozen=True)
class StoreStats:
    object_count: int = 0
    total_stored_bytes: int = 0
    total_logical_bytes: int = 0


def _top_segments(prefix: str) -> List[str]:
    head = prefix.split("/", 1)[0]
    if "/" in prefix or head in ("filings", "documents"):
        return [head]
    # a bare or partial first segment may match any top-level namespace
    return sorted(seg for seg in ("documents", "filings") if seg.startswith(head)) or [head]


class ObjectStore:
    def __init__(self, backend, rate_limit_signatures=DEFAULT_RATE_LIMIT_SIGNATURES,
                 access_denied_signatures=DEFAULT_ACCESS_DENIED_SIGNATURES):
        self.backend = backend
        self.rate_limit_signatures = tuple(rate_limit_signatures)
        self.access_denied_signatures = tuple(access_denied_signatures)

    @classmethod
    def filesystem(cls, root, **kwargs) -> "ObjectStore":
        return cls(FilesystemBackend(root), **kwargs)

    def _ref(self, key: str, meta: dict) -> ObjectRef:
        return ObjectRef(key, bool(meta["compressed"]), int(meta["stored_length"]),
                         int(meta["logical_length"]))

    def head(self, key: str) -> Optional[ObjectRef]:
        meta = self.backend.head(validate_key(key))
        return self._ref(key, meta) if meta else None

    def put(self, key: str, data: bytes, compress: bool = True) -> ObjectRef:
        validate_key(key)
        data = bytes(data)
        digest = hashlib.sha1(data).hexdigest()
        existing = self.backend.head(key)
        if existing is not None:
            if existing.get("sha1") == digest and int(existing["logical_length"]) == len(data):
                return self._ref(key, existing)
            logger.warning("overwriting %s with different content", key)
        # mtime=0 keeps compressed bytes identical across runs
        stored = gzip.compress(data, mtime=0) if compress else data
        meta = {"compressed": compress, "stored_length": len(stored),
                "logical_length": len(data), "sha1": digest}
        self.backend.write(key, stored, meta)
        return self._ref(key, meta)

    def get(self, key: str, byte_range: Optional[Tuple[int, int]] = None) -> bytes:
        validate_key(key)
        if byte_range is not None:
            start, end = byte_range
            if start < 0 or end < start:
                raise ValueError(f"invalid byte range {byte_range!r}")
        meta = self.backend.head(key)
        if meta is None:
            raise NotFound(key)
        if not meta["compressed"]:
            return self.backend.read(key, byte_range)
        stored = self.backend.read(key)
        try:
            data = gzip.decompress(stored)
        except (OSError, EOFError, zlib.error) as exc:
            raise CorruptObject(f"{key} is flagged compressed but does not inflate: {exc}") from exc
        if byte_range is not None:
            return data[byte_range[0]:byte_range[1]]
        return data

    def exists(self, key: str) -> bool:
        return self.backend.head(validate_key(key)) is not None

    def delete(self, key: str) -> bool:
        return self.backend.delete(validate_key(key))

    def list_keys(self, prefix: str = "") -> Iterator[str]:
        return self.backend.list_keys(prefix)

    def stats(self, prefix: str = "") -> StoreStats:
        count = stored = logical = 0
        for key in self.list_keys(prefix):
            meta = self.backend.head(key)
            if meta is None:
                continue
            count += 1
            stored += int(meta["stored_length"])
            logical += int(meta["logical_length"])
        return StoreStats(count, stored, logical)

    @contextlib.contextmanager
    def prefix_lock(self, prefix: str, timeout: float = 0):
        """Hold the lock file(s) covering ``prefix``; raises StoreBusy if taken."""
        lock_dir = self.backend.lock_dir
        lock_dir.mkdir(parents=True, exist_ok=True)
        locks = [FileLock(str(lock_dir / f"{seg or 'root'}.lock")) for seg in _top_segments(prefix)]
        acquired = []
        try:
            for lock in locks:
                try:
                    lock.acquire(timeout=timeout)
                except Timeout:
                    raise StoreBusy(f"prefix {prefix!r} is locked by another sweep or ingestion") from None
                acquired.append(lock)
            yield
        finally:
            for lock in reversed(acquired):
                lock.release()

    def _matches(self, predicate: str, key: str) -> bool:
        meta = self.backend.head(key)
        if meta is None:
            return False
        if predicate == "empty":
            return int(meta["logical_length"]) == 0
        data = self.get(key)
        if predicate == "rate_limited":
            return is_rate_limited_payload(data, self.rate_limit_signatures)
        return is_rate_limited_payload(data, self.access_denied_signatures)

    def sweep(self, prefix: str, predicate: str, dry_run: bool = True) -> List[Tuple[str, str]]:
        """List (and unless ``dry_run``, delete) objects under ``prefix`` matching ``predicate``."""
        if predicate not in SWEEP_PREDICATES:
            raise ValueError(f"unknown sweep predicate {predicate!r}; expected one of {SWEEP_PREDICATES}")
        with self.prefix_lock(prefix):
            found = [(key, predicate) for key in self.list_keys(prefix) if self._matches(predicate, key)]
            if not dry_run:
                for key, _ in found:
                    self.delete(key)
        return found
