"""Run manifests: everything needed to re-run a pipeline stage.

A manifest pins the command line, the configuration snapshot, seeds and
content digests of the inputs; two runs over identical inputs produce
identical manifests except for the timestamp.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .models import MODEL_FORMAT_VERSION
from .sparse import MATRIX_FORMAT_VERSION


def fingerprint_file(path) -> str:
    """SHA-256 digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, *, command, config=None, seeds=None, inputs=None) -> dict:
    """Write a JSON manifest next to a stage's outputs; returns it."""
    payload = {
        "command": list(command),
        "config": config or {},
        "seeds": list(seeds) if seeds is not None else [],
        "inputs": dict(inputs or {}),
        "artifact_versions": {
            "package": __version__,
            "matrix_format": MATRIX_FORMAT_VERSION,
            "model_format": MODEL_FORMAT_VERSION,
        },
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return payload


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def manifests_equivalent(a: dict, b: dict) -> bool:
    """Equality ignoring wall-clock fields."""
    strip = lambda m: {k: v for k, v in m.items() if k != "created_at"}
    return strip(a) == strip(b)
