"""Durable append-only response cache keyed by prompt digest.

One JSON object per line; unreadable lines are skipped on open so a
truncated tail (crash mid-write) never blocks a resume.
"""

from __future__ import annotations

import errno
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

CACHE_FILENAME = "responses.jsonl"


class StoreUnavailable(Exception):
    pass


class DiskFull(StoreUnavailable):
    pass


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class CacheEntry:
    key: str
    response_text: str
    finish_reason: str
    prompt_tokens: int
    completion_tokens: int
    backend_id: str
    created_at: str


def _entry_from_json(line: str) -> CacheEntry:
    data = json.loads(line)
    return CacheEntry(
        key=str(data["key"]),
        response_text=str(data["response_text"]),
        finish_reason=str(data["finish_reason"]),
        prompt_tokens=int(data["prompt_tokens"]),
        completion_tokens=int(data["completion_tokens"]),
        backend_id=str(data["backend_id"]),
        created_at=str(data["created_at"]),
    )


class ResponseCache:
    """Append-only store; last write wins on duplicate keys.

    Reads are lock-free; writes serialize through one lock so concurrent
    puts never interleave bytes. The handle is shareable across threads.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            self._load()
        self._fh = self.path.open("a", encoding="utf-8")

    @classmethod
    def open(cls, path: str | Path) -> "ResponseCache":
        return cls(path)

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = _entry_from_json(line)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    logger.warning("skipping unreadable cache line %d in %s", lineno, self.path)
                    continue
                if not entry.key:
                    logger.warning("skipping cache line %d with empty key in %s", lineno, self.path)
                    continue
                self._entries[entry.key] = entry

    def get(self, key: str) -> CacheEntry | None:
        if self._fh is None:
            raise StoreUnavailable("cache is closed")
        return self._entries.get(key)

    def put(self, entry: CacheEntry) -> None:
        if not entry.key:
            raise ValueError("cache entry key must be nonempty")
        line = json.dumps(asdict(entry), sort_keys=True, ensure_ascii=False)
        with self._lock:
            if self._fh is None:
                raise StoreUnavailable("cache is closed")
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                if exc.errno == errno.ENOSPC:
                    raise DiskFull(f"cannot append to {self.path}") from exc
                raise StoreUnavailable(f"cannot append to {self.path}: {exc}") from exc
            self._entries[entry.key] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "ResponseCache":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
