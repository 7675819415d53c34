"""Canonical JSON artifact I/O and content fingerprints.

Artifacts are written with sorted keys and a trailing newline so that
identical data always produces identical bytes (golden-file testing and
resumability both rely on this).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def dump_json(obj: Any, path: str | Path) -> str:
    """Write `obj` as canonical JSON; returns the content fingerprint."""
    text = canonical_json(obj)
    Path(path).write_text(text, encoding="utf-8")
    return sha256_text(text)


def load_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
