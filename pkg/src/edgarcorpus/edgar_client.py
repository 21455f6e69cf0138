"""Polite, rate-limited HTTP client for the EDGAR archive."""

from __future__ import annotations

import json
import logging
import math
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterable, Optional
from urllib.parse import urljoin

import requests

from .errors import EdgarCorpusError, InvalidArgument, InvalidPath, NotFound

logger = logging.getLogger(__name__)

INDEX_TYPES = ("company", "form", "master", "xbrl")

DEFAULT_INDEX_PATH_TEMPLATE = "edgar/full-index/{year}/QTR{quarter}/{index_type}.idx"
DEFAULT_COMPANY_METADATA_URL = "https://data.sec.gov/submissions/CIK{cik:010d}.json"

# Marker phrases from the archive's throttle page. Matched case-insensitively.
DEFAULT_RATE_LIMIT_SIGNATURES = (
    "Request Rate Threshold Exceeded",
    "Undeclared Automated Tool",
    "exceeded the SEC's maximum allowed request rate",
)


class EdgarError(EdgarCorpusError):
    pass


class RateLimited(EdgarError):
    pass


class Transport(EdgarError):
    pass


class AccessDenied(EdgarError):
    pass


def validate_path(path: str) -> str:
    """Return ``path`` if it is a safe archive-relative path, else raise InvalidPath."""
    if not isinstance(path, str) or not path:
        raise InvalidPath("path must be a non-empty string")
    if path.startswith("/"):
        raise InvalidPath(f"path must be archive-relative: {path!r}")
    if ":" in path.split("/", 1)[0]:
        raise InvalidPath(f"path must not carry a scheme or host: {path!r}")
    parts = path.replace("\\", "/").split("/")
    if any(part == ".." for part in parts):
        raise InvalidPath(f"path may not contain '..' segments: {path!r}")
    if any(part == "" for part in parts[:-1]):
        raise InvalidPath(f"path may not contain empty segments: {path!r}")
    return path


@dataclass(frozen=True)
class EdgarResource:
    path: str
    last_modified: Optional[datetime] = None
    size: Optional[int] = None
    etag: Optional[str] = None

    def __post_init__(self):
        validate_path(self.path)
        if self.size is not None and self.size < 0:
            raise InvalidArgument("size must be >= 0")


@dataclass(frozen=True, order=True)
class IndexDescriptor:
    year: int
    quarter: int
    index_type: str
    path: str

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise InvalidArgument(f"quarter must be 1-4, got {self.quarter!r}")
        if self.index_type not in INDEX_TYPES:
            raise InvalidArgument(f"unknown index type {self.index_type!r}")


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = "https://www.sec.gov/Archives/"
    user_agent: str = ""
    max_requests_per_second: float = 8.0
    max_retries: int = 4
    backoff_base: float = 0.5
    timeout: float = 30.0
    index_path_template: str = DEFAULT_INDEX_PATH_TEMPLATE
    company_metadata_url: str = DEFAULT_COMPANY_METADATA_URL
    rate_limit_signatures: tuple = DEFAULT_RATE_LIMIT_SIGNATURES
    first_index_year: int = 1993
    last_index_year: Optional[int] = None

    def __post_init__(self):
        if not self.user_agent or not self.user_agent.strip():
            raise InvalidArgument("user_agent must be a non-empty contact string")
        if not self.max_requests_per_second > 0:
            raise InvalidArgument("max_requests_per_second must be positive")
        if self.max_retries < 0:
            raise InvalidArgument("max_retries must be >= 0")
        if self.backoff_base < 0:
            raise InvalidArgument("backoff_base must be >= 0")
        if not self.base_url.endswith("/"):
            object.__setattr__(self, "base_url", self.base_url + "/")
        object.__setattr__(self, "rate_limit_signatures", tuple(self.rate_limit_signatures))


class RateLimiter:
    """Process-wide request limiter.

    Grants are spaced at least ``1/rate`` seconds apart and no more than
    ``ceil(rate)`` grants fall in any half-open one-second window. ``clock``
    and ``sleep`` are injectable so tests can drive a simulated clock.
    """

    window = 1.0

    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise InvalidArgument("rate must be positive")
        self.rate = rate
        self.burst = math.ceil(rate)
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._grants: deque = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a request may be issued; returns the grant time."""
        with self._lock:
            while True:
                now = self._clock()
                # compare differences, not shifted times, so rounding cannot admit an extra grant
                while self._grants and now - self._grants[0] >= self.window:
                    self._grants.popleft()
                wait = 0.0
                if len(self._grants) >= self.burst:
                    wait = max(self._grants[0] + self.window - now, 1e-6)
                if self._grants:
                    wait = max(wait, self._grants[-1] + self.interval - now)
                if wait <= 0:
                    self._grants.append(now)
                    return now
                # floor keeps a simulated clock moving past rounding residue
                self._sleep(max(wait, 1e-6))


def is_rate_limited_payload(body: bytes, signatures: Iterable[str] = DEFAULT_RATE_LIMIT_SIGNATURES) -> bool:
    """True iff ``body`` contains any of the throttle-page marker phrases."""
    if not body:
        return False
    haystack = bytes(body).lower()
    return any(sig.encode("utf-8").lower() in haystack for sig in signatures if sig)


def parse_company_metadata(raw: bytes) -> dict:
    """Extract name, state of incorporation and SIC from a submissions JSON document."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise EdgarError(f"company metadata is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not doc.get("name"):
        raise EdgarError("company metadata lacks a name")
    sic = str(doc.get("sic") or "").strip() or None
    if sic is not None and not (sic.isdigit() and len(sic) <= 4):
        sic = None
    return {
        "name": str(doc["name"]).strip(),
        "state_of_incorporation": (str(doc.get("stateOfIncorporation") or "").strip() or None),
        "sic": sic.zfill(4) if sic else None,
    }


_TRANSIENT_EXCEPTIONS = (
    requests.ConnectionError,
    requests.Timeout,
    requests.exceptions.ChunkedEncodingError,
    requests.exceptions.ContentDecodingError,
)


class EdgarClient:
    """Shareable across threads; every request passes through one RateLimiter."""

    def __init__(self, config: ClientConfig, session: Optional[requests.Session] = None,
                 limiter: Optional[RateLimiter] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None):
        self.config = config
        self.limiter = limiter or RateLimiter(config.max_requests_per_second, sleep=sleep)
        self._session = session
        self._local = threading.local()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()
        self._attempts_lock = threading.Lock()
        self.attempts = 0

    @property
    def session(self):
        if self._session is not None:
            return self._session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def url_for(self, path: str) -> str:
        return urljoin(self.config.base_url, validate_path(path))

    def fetch(self, resource_path: str, byte_range: Optional[tuple] = None) -> bytes:
        """Fetch an archive file, optionally only the half-open ``byte_range``."""
        url = self.url_for(resource_path)
        if byte_range is not None:
            start, end = byte_range
            if start < 0 or start >= end:
                raise InvalidArgument(f"empty or negative byte range {byte_range!r}")
        return self._get(url, byte_range)

    def list_index_files(self, year: Optional[int] = None, quarter: Optional[int] = None) -> list:
        if quarter is not None and year is None:
            raise InvalidArgument("quarter given without year")
        if quarter is not None and quarter not in (1, 2, 3, 4):
            raise InvalidArgument(f"quarter must be 1-4, got {quarter!r}")
        if year is not None:
            years = [year]
        else:
            last = self.config.last_index_year or datetime.now().year
            years = range(self.config.first_index_year, last + 1)
        quarters = [quarter] if quarter is not None else [1, 2, 3, 4]
        return [self.index_descriptor(y, q, t) for y in years for q in quarters for t in INDEX_TYPES]

    def index_descriptor(self, year: int, quarter: int, index_type: str) -> IndexDescriptor:
        path = self.config.index_path_template.format(year=year, quarter=quarter, index_type=index_type)
        return IndexDescriptor(year, quarter, index_type, validate_path(path))

    def fetch_index(self, descriptor: IndexDescriptor) -> bytes:
        return self.fetch(descriptor.path)

    def fetch_company_metadata(self, cik: int) -> bytes:
        if not isinstance(cik, int) or cik <= 0:
            raise InvalidArgument(f"cik must be a positive integer, got {cik!r}")
        url = urljoin(self.config.base_url, self.config.company_metadata_url.format(cik=cik))
        return self._get(url, None)

    def is_rate_limited_payload(self, body: bytes) -> bool:
        return is_rate_limited_payload(body, self.config.rate_limit_signatures)

    def _backoff(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = self._rng.uniform(0, self.config.backoff_base)
        return self.config.backoff_base * (2 ** attempt) + jitter

    def _get(self, url: str, byte_range: Optional[tuple]) -> bytes:
        headers = {"User-Agent": self.config.user_agent}
        if byte_range is not None:
            headers["Range"] = f"bytes={byte_range[0]}-{byte_range[1] - 1}"
        last_error: Optional[EdgarError] = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self._backoff(attempt - 1))
            self.limiter.acquire()
            with self._attempts_lock:
                self.attempts += 1
            try:
                response = self.session.get(url, headers=headers, timeout=self.config.timeout)
                body = response.content
            except _TRANSIENT_EXCEPTIONS as exc:
                last_error = Transport(f"GET {url}: {exc}")
                logger.debug("transient failure on attempt %d: %s", attempt + 1, exc)
                continue
            except requests.RequestException as exc:
                raise Transport(f"GET {url}: {exc}") from exc

            status = response.status_code
            if status == 404:
                raise NotFound(url)
            if status == 429 or self.is_rate_limited_payload(body):
                last_error = RateLimited(f"GET {url}: throttled (HTTP {status})")
                logger.warning("rate limited on %s (attempt %d)", url, attempt + 1)
                continue
            if status >= 500:
                last_error = Transport(f"GET {url}: HTTP {status}")
                continue
            if status == 403:
                raise AccessDenied(url)
            if status == 416:
                return b""
            if status >= 400:
                raise Transport(f"GET {url}: HTTP {status}")
            if byte_range is not None and status != 206:
                return body[byte_range[0]:byte_range[1]]
            return body
        assert last_error is not None
        raise last_error
