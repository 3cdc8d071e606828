"""Content-addressed file cache for expensive intermediate results.

Layout is ``<cache_root>/<kind>/<hexkey>``. Writes go to a temp file in the
same directory and are renamed into place, so concurrent writers never leave
a torn entry; the last writer wins per key. Each entry is prefixed with a
sha256 of its payload so corruption downgrades to a cache miss.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

CACHE_KINDS = ("scu", "embedding", "generation")
_HEADER_LEN = 65  # 64 hex chars + newline


def payload_hash(prompt_version: str, text: str) -> str:
    """256-bit content hash of (prompt version, input text); stable across runs."""
    digest = hashlib.sha256()
    digest.update(prompt_version.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(text.encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class CacheKey:
    kind: str
    model_id: str
    payload_hash: str

    def __post_init__(self):
        if self.kind not in CACHE_KINDS:
            raise ValueError(f"unknown cache kind {self.kind!r}")

    @classmethod
    def for_text(cls, kind: str, model_id: str, prompt_version: str, text: str) -> CacheKey:
        return cls(kind=kind, model_id=model_id, payload_hash=payload_hash(prompt_version, text))

    @property
    def hexkey(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.model_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(self.payload_hash.encode("ascii"))
        return digest.hexdigest()


class FileCache:
    """Directory-backed byte store addressed by :class:`CacheKey`."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: CacheKey) -> Path:
        return self.root / key.kind / key.hexkey

    def get(self, key: CacheKey) -> bytes | None:
        path = self._path(key)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        if len(raw) < _HEADER_LEN or raw[64:65] != b"\n":
            logger.warning("corrupt cache entry %s (bad header), treating as miss", path)
            return None
        header, payload = raw[:64], raw[_HEADER_LEN:]
        if hashlib.sha256(payload).hexdigest().encode("ascii") != header:
            logger.warning("corrupt cache entry %s (checksum mismatch), treating as miss", path)
            return None
        return payload

    def put(self, key: CacheKey, value: bytes) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = hashlib.sha256(value).hexdigest().encode("ascii") + b"\n" + value
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(blob)
            os.replace(tmp_name, path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise
