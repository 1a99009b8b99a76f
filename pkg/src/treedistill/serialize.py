"""Versioned, byte-deterministic containers for models and datasets.

Every artifact this toolkit persists (teacher models, student models,
dataset caches) goes through the same envelope: a JSON document with a
``container`` kind tag and an integer ``version``, written with sorted
keys and no incidental whitespace so that identical payloads always
produce identical bytes.  Numpy arrays are stored as little-endian raw
bytes in base64, which round-trips every float bit-exactly.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import DataError


def encode_array(a: np.ndarray) -> dict:
    """Encode an array as a JSON-safe dict (dtype, shape, base64 payload)."""
    a = np.ascontiguousarray(a)
    little = a.astype(a.dtype.newbyteorder("<"), copy=False)
    return {
        "dtype": little.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(little.tobytes()).decode("ascii"),
    }


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    a = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"])
    return a.astype(a.dtype.newbyteorder("="), copy=True)


def save_container(path: str | Path, kind: str, version: int, payload: dict) -> None:
    """Write ``payload`` under a (kind, version) envelope, byte-deterministically."""
    doc = {"container": kind, "version": version, "payload": payload}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text, encoding="utf-8")


def load_container(path: str | Path, kind: str, version: int) -> dict:
    """Read an envelope back, checking kind and version."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"not a valid container file: {p} ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("container") != kind:
        raise DataError(
            f"{p}: expected container kind {kind!r}, found {doc.get('container')!r}"
        )
    if doc.get("version") != version:
        raise DataError(
            f"{p}: unsupported {kind} container version {doc.get('version')!r} "
            f"(this build reads version {version})"
        )
    return doc["payload"]
