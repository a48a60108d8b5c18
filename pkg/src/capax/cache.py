"""Content-addressed JSON cache for expensive oracle results."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def cache_dir() -> Path | None:
    """Directory from ``CAPAX_CACHE_DIR``; ``~/.cache/capax`` by default.

    Setting the variable to an empty string disables the disk cache.
    """
    value = os.environ.get("CAPAX_CACHE_DIR")
    if value == "":
        return None
    if value is None:
        return Path.home() / ".cache" / "capax"
    return Path(value)


def content_key(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load(kind: str, payload):
    root = cache_dir()
    if root is None:
        return None
    path = root / kind / f"{content_key(payload)}.json"
    try:
        with open(path) as fh:
            return json.load(fh)["value"]
    except (OSError, ValueError, KeyError, TypeError):
        return None


def store(kind: str, payload, value) -> None:
    root = cache_dir()
    if root is None:
        return
    target = root / kind
    try:
        target.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump({"key": payload, "value": value}, fh)
        os.replace(tmp, target / f"{content_key(payload)}.json")
    except OSError:
        pass
