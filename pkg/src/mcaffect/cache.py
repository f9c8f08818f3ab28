"""On-disk cache of raw scoring responses, one file per trial key."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

log = logging.getLogger(__name__)


class CacheKey(NamedTuple):
    content_hash: str
    model_name: str
    temperature: float
    trial_id: int

    def fields(self) -> dict:
        return {
            "content_hash": self.content_hash,
            "model_name": self.model_name,
            "temperature": float(self.temperature),
            "trial_id": int(self.trial_id),
        }

    def filename(self) -> str:
        blob = json.dumps(
            [self.content_hash, self.model_name, repr(float(self.temperature)), int(self.trial_id)]
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest() + ".resp"


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    writes: int = 0
    corrupt: int = 0

    def to_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "writes": self.writes, "corrupt": self.corrupt}


class ResponseCache:
    """Stores raw responses byte-for-byte behind a one-line JSON header.

    The header repeats the key fields and a SHA-256 of the body so that a
    truncated or foreign file is detected and treated as a miss.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.stats = CacheStats()
        self._lock = threading.Lock()

    def path_for(self, key: CacheKey) -> Path:
        return self.directory / key.filename()

    def lookup(self, key: CacheKey) -> str | None:
        path = self.path_for(key)
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            with self._lock:
                self.stats.misses += 1
            return None
        header, sep, body = blob.partition(b"\n")
        try:
            meta = json.loads(header)
            ok = (
                bool(sep)
                and {k: meta.get(k) for k in key.fields()} == key.fields()
                and meta.get("sha256") == hashlib.sha256(body).hexdigest()
            )
            text = body.decode("utf-8") if ok else None
        except (ValueError, UnicodeDecodeError, AttributeError):
            text = None
        with self._lock:
            if text is None:
                self.stats.corrupt += 1
                self.stats.misses += 1
            else:
                self.stats.hits += 1
        if text is None:
            log.warning("corrupt cache entry %s treated as a miss", path.name)
        return text

    def store(self, key: CacheKey, raw: str) -> Path:
        body = raw.encode("utf-8")
        header = dict(key.fields(), sha256=hashlib.sha256(body).hexdigest())
        blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + body
        path = self.path_for(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        with self._lock:
            self.stats.writes += 1
        return path


def cache_lookup(cache: ResponseCache, key: CacheKey) -> str | None:
    return cache.lookup(key)
