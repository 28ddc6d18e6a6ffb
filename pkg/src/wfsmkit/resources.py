"""Locating shipped data files and hashing run inputs."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .exceptions import ConfigError

DATA_DIR = Path(__file__).parent / "data"
_SUBDIRS = {"machine": "machines", "material": "materials", "params": "params", "cycle": "cycles"}


def resolve(ref, kind, base_dir=None):
    """Path for ``ref``: an existing file (relative to ``base_dir`` first) or a shipped name."""
    if ref is None:
        raise ConfigError(f"missing {kind} reference")
    p = Path(ref)
    candidates = []
    if base_dir is not None and not p.is_absolute():
        candidates.append(Path(base_dir) / p)
    candidates.append(p)
    sub = DATA_DIR / _SUBDIRS[kind]
    candidates += [sub / p.name, sub / f"{p.name}.yaml", sub / f"{p.name}.csv"]
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"{kind} file {ref!r} not found")


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(data):
    """Stable hash of a JSON-serialisable configuration."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
