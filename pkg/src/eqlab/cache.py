"""On-disk cache of orthonormalization matrices keyed by content hash."""
from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheCorrupt, IoFailure

MAGIC = 0x4C41424252474D4E  # "LABBRGMN"
VERSION = 1
HEADER = struct.Struct("<QQQ")
MANIFEST = "manifest.json"


def default_cache_dir() -> Path:
    env = os.environ.get("LAB_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "eqlab"


def encode(C: np.ndarray) -> bytes:
    C = np.ascontiguousarray(C, dtype="<c16")
    d = C.shape[0]
    if C.shape != (d, d):
        raise ValueError("cache records hold square matrices")
    return HEADER.pack(MAGIC, VERSION, d) + C.tobytes()


def decode(data: bytes, d_p: int | None = None) -> np.ndarray:
    if len(data) < HEADER.size:
        raise CacheCorrupt("truncated header")
    magic, version, d = HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CacheCorrupt("bad magic or version")
    if d_p is not None and d != d_p:
        raise CacheCorrupt(f"record has d_p = {d}, expected {d_p}")
    body = data[HEADER.size:]
    if len(body) != 16 * d * d:
        raise CacheCorrupt("payload size mismatch")
    return np.frombuffer(body, dtype="<c16").reshape(d, d).astype(complex)


@dataclass
class GcReport:
    evicted: list = field(default_factory=list)
    freed: int = 0
    remaining: int = 0


class BasisCache:
    """Directory of ``<key>.bin`` records plus a JSON manifest holding the
    sha256 of each file and its last access time (for LRU eviction)."""

    def __init__(self, directory: str | os.PathLike | None = None):
        self.dir = Path(directory) if directory is not None else default_cache_dir()
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"cannot create cache directory {self.dir}: {e}") from e
        self.hits = 0
        self.misses = 0
        self.corrupt = 0

    # manifest -----------------------------------------------------------
    def _manifest(self) -> dict:
        path = self.dir / MANIFEST
        if not path.exists():
            return {}
        try:
            return json.loads(path.read_text())
        except (OSError, ValueError):
            return {}

    def _save(self, man: dict) -> None:
        tmp = self.dir / (MANIFEST + ".tmp")
        try:
            tmp.write_text(json.dumps(man, sort_keys=True, indent=1))
            os.replace(tmp, self.dir / MANIFEST)
        except OSError as e:
            raise IoFailure(f"cannot write cache manifest: {e}") from e

    def path(self, key: str) -> Path:
        return self.dir / f"{key}.bin"

    # records ------------------------------------------------------------
    def load(self, key: str, d_p: int | None = None):
        """Cached matrix or None; corrupt records are dropped (recompute)."""
        path = self.path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            data = path.read_bytes()
            man = self._manifest()
            entry = man.get(key)
            if entry is None or entry.get("sha256") != hashlib.sha256(data).hexdigest():
                raise CacheCorrupt(f"hash mismatch for {key}")
            C = decode(data, d_p)
        except CacheCorrupt:
            self.corrupt += 1
            self.misses += 1
            path.unlink(missing_ok=True)
            return None
        entry["atime"] = time.time()
        man[key] = entry
        self._save(man)
        self.hits += 1
        return C

    def store(self, key: str, C: np.ndarray) -> None:
        data = encode(C)
        try:
            self.path(key).write_bytes(data)
        except OSError as e:
            raise IoFailure(f"cannot write cache record: {e}") from e
        man = self._manifest()
        man[key] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data),
                    "atime": time.time()}
        self._save(man)

    def total_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.dir.glob("*.bin"))

    def gc(self, max_bytes: int) -> GcReport:
        return cache_gc(self.dir, max_bytes)


def cache_gc(directory, max_bytes: int) -> GcReport:
    """Evict least-recently-used records until the directory fits in ``max_bytes``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise IoFailure(f"cache directory {directory} does not exist")
    cache = BasisCache(directory)
    man = cache._manifest()
    files = []
    for p in directory.glob("*.bin"):
        key = p.stem
        atime = man.get(key, {}).get("atime", 0.0)
        files.append((atime, key, p.stat().st_size))
    files.sort()
    total = sum(f[2] for f in files)
    rep = GcReport()
    for atime, key, size in files:
        if total <= max_bytes:
            break
        try:
            cache.path(key).unlink()
        except OSError as e:
            raise IoFailure(f"cannot evict {key}: {e}") from e
        man.pop(key, None)
        total -= size
        rep.evicted.append(key)
        rep.freed += size
    rep.remaining = total
    if rep.evicted:
        cache._save(man)
    return rep
