"""Storage backends: raw bytes plus a small metadata dict per key.

Backends know nothing about compression; ``ObjectStore`` layers that on top.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from pathlib import Path
from typing import Iterator, Optional, Tuple

from ..errors import EdgarCorpusError, NotFound


class BackendUnavailable(EdgarCorpusError):
    pass


class QuotaExceeded(EdgarCorpusError):
    pass


_DIGEST_RE = re.compile(r"^[0-9a-f]{40}$")
_SHARD_RE = re.compile(r"^[0-9a-f]{2}$")


class FilesystemBackend:
    """Objects live under ``root/objects``; metadata in a parallel ``root/meta`` tree.

    Keys whose last segment is a 40-hex digest are sharded by the first two
    digest characters (``documents/raw/ab/abcd...``).
    """

    def __init__(self, root, quota_bytes: Optional[int] = None):
        self.root = Path(root)
        self.quota_bytes = quota_bytes
        self._objects = self.root / "objects"
        self._meta = self.root / "meta"
        self._objects.mkdir(parents=True, exist_ok=True)
        self._meta.mkdir(parents=True, exist_ok=True)
        self._quota_lock = threading.Lock()

    @property
    def lock_dir(self) -> Path:
        return self.root / "locks"

    def describe(self) -> str:
        return f"file://{self.root}"

    @staticmethod
    def _relpath(key: str) -> Path:
        parts = key.split("/")
        if _DIGEST_RE.match(parts[-1]):
            parts.insert(len(parts) - 1, parts[-1][:2])
        return Path(*parts)

    @staticmethod
    def _key_from_rel(rel: Path) -> str:
        parts = list(rel.parts)
        if (len(parts) >= 2 and _DIGEST_RE.match(parts[-1]) and _SHARD_RE.match(parts[-2])
                and parts[-1].startswith(parts[-2])):
            del parts[-2]
        return "/".join(parts)

    def _paths(self, key: str) -> Tuple[Path, Path]:
        rel = self._relpath(key)
        return self._objects / rel, self._meta / rel.with_name(rel.name + ".json")

    def head(self, key: str) -> Optional[dict]:
        _, meta_path = self._paths(key)
        try:
            return json.loads(meta_path.read_text())
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            raise BackendUnavailable(f"cannot read metadata for {key}: {exc}") from exc

    def read(self, key: str, byte_range: Optional[Tuple[int, int]] = None) -> bytes:
        data_path, _ = self._paths(key)
        try:
            with open(data_path, "rb") as fh:
                if byte_range is None:
                    return fh.read()
                fh.seek(byte_range[0])
                return fh.read(max(0, byte_range[1] - byte_range[0]))
        except FileNotFoundError:
            raise NotFound(key) from None
        except OSError as exc:
            raise BackendUnavailable(f"cannot read {key}: {exc}") from exc

    def _atomic_write(self, path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise

    def write(self, key: str, data: bytes, meta: dict) -> None:
        data_path, meta_path = self._paths(key)
        try:
            if self.quota_bytes is not None:
                with self._quota_lock:
                    if self.total_bytes() + len(data) > self.quota_bytes:
                        raise QuotaExceeded(f"writing {key} would exceed {self.quota_bytes} bytes")
            # data first: a crash in between leaves an object without metadata, which head() treats as absent
            self._atomic_write(data_path, data)
            self._atomic_write(meta_path, json.dumps(meta, sort_keys=True).encode())
        except OSError as exc:
            raise BackendUnavailable(f"cannot write {key}: {exc}") from exc

    def delete(self, key: str) -> bool:
        data_path, meta_path = self._paths(key)
        existed = meta_path.exists()
        for path in (meta_path, data_path):
            try:
                path.unlink()
            except FileNotFoundError:
                pass
            except OSError as exc:
                raise BackendUnavailable(f"cannot delete {key}: {exc}") from exc
        return existed

    def list_keys(self, prefix: str = "") -> Iterator[str]:
        keys = []
        for dirpath, _dirnames, filenames in os.walk(self._meta):
            for name in filenames:
                if not name.endswith(".json") or name.startswith(".tmp-"):
                    continue
                rel = (Path(dirpath) / name[:-len(".json")]).relative_to(self._meta)
                key = self._key_from_rel(rel)
                if key.startswith(prefix):
                    keys.append(key)
        yield from sorted(keys)

    def total_bytes(self) -> int:
        total = 0
        for dirpath, _dirnames, filenames in os.walk(self._objects):
            for name in filenames:
                if not name.startswith(".tmp-"):
                    total += (Path(dirpath) / name).stat().st_size
        return total


class S3Backend:
    """S3-compatible backend; metadata travels as ``x-amz-meta-*`` headers."""

    def __init__(self, bucket: str, endpoint_url: Optional[str] = None,
                 region: str = "us-east-1", access_key: Optional[str] = None,
                 secret_key: Optional[str] = None, prefix: str = "",
                 lock_dir: Optional[str] = None, create_bucket: bool = False):
        import boto3
        from botocore.config import Config

        self.bucket = bucket
        self.prefix = prefix.strip("/") + "/" if prefix.strip("/") else ""
        self.endpoint_url = endpoint_url
        self._client = boto3.client(
            "s3", endpoint_url=endpoint_url, region_name=region,
            aws_access_key_id=access_key, aws_secret_access_key=secret_key,
            config=Config(retries={"max_attempts": 3, "mode": "standard"},
                          max_pool_connections=32),
        )
        self._lock_dir = Path(lock_dir) if lock_dir else Path(tempfile.gettempdir()) / f"edgarcorpus-locks-{bucket}"
        if create_bucket:
            try:
                self._client.create_bucket(Bucket=bucket)
            except self._client.exceptions.BucketAlreadyOwnedByYou:
                pass

    @property
    def lock_dir(self) -> Path:
        return self._lock_dir

    def describe(self) -> str:
        return f"s3://{self.bucket}/{self.prefix}"

    def _error(self, exc, key):
        from botocore.exceptions import ClientError

        if isinstance(exc, ClientError):
            code = str(exc.response.get("Error", {}).get("Code", ""))
            if code in ("404", "NoSuchKey", "NotFound"):
                return NotFound(key)
            if code == "QuotaExceeded":
                return QuotaExceeded(str(exc))
        return BackendUnavailable(f"{key}: {exc}")

    def head(self, key: str) -> Optional[dict]:
        try:
            response = self._client.head_object(Bucket=self.bucket, Key=self.prefix + key)
        except Exception as exc:
            err = self._error(exc, key)
            if isinstance(err, NotFound):
                return None
            raise err from exc
        return _meta_from_headers(response.get("Metadata", {}))

    def read(self, key: str, byte_range: Optional[Tuple[int, int]] = None) -> bytes:
        kwargs = {"Bucket": self.bucket, "Key": self.prefix + key}
        if byte_range is not None:
            if byte_range[1] <= byte_range[0]:
                return b""
            kwargs["Range"] = f"bytes={byte_range[0]}-{byte_range[1] - 1}"
        try:
            return self._client.get_object(**kwargs)["Body"].read()
        except Exception as exc:
            from botocore.exceptions import ClientError

            if (isinstance(exc, ClientError) and byte_range is not None
                    and exc.response.get("Error", {}).get("Code") == "InvalidRange"):
                return b""
            raise self._error(exc, key) from exc

    def write(self, key: str, data: bytes, meta: dict) -> None:
        try:
            self._client.put_object(Bucket=self.bucket, Key=self.prefix + key, Body=data,
                                    Metadata=_meta_to_headers(meta))
        except Exception as exc:
            raise self._error(exc, key) from exc

    def delete(self, key: str) -> bool:
        existed = self.head(key) is not None
        try:
            self._client.delete_object(Bucket=self.bucket, Key=self.prefix + key)
        except Exception as exc:
            raise self._error(exc, key) from exc
        return existed

    def list_keys(self, prefix: str = "") -> Iterator[str]:
        paginator = self._client.get_paginator("list_objects_v2")
        try:
            # S3 lists in UTF-8 binary order, which is the lexicographic order callers expect
            for page in paginator.paginate(Bucket=self.bucket, Prefix=self.prefix + prefix):
                for item in page.get("Contents", []):
                    yield item["Key"][len(self.prefix):]
        except Exception as exc:
            raise self._error(exc, prefix) from exc


def _meta_to_headers(meta: dict) -> dict:
    return {k.replace("_", "-"): str(v) for k, v in meta.items()}


def _meta_from_headers(headers: dict) -> dict:
    meta = {k.replace("-", "_"): v for k, v in headers.items()}
    out = {}
    for k, v in meta.items():
        if k in ("stored_length", "logical_length"):
            out[k] = int(v)
        elif k == "compressed":
            out[k] = v in ("True", "true", "1")
        else:
            out[k] = v
    return out
