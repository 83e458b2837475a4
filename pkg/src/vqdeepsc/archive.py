"""Named-array archive: an 8-byte little-endian header length, a JSON
header mapping names to dtype/shape/offsets, then the raw arrays.

This is the safetensors layout, so any safetensors reader in any language
can open checkpoints and traces. Free-form metadata travels as one JSON
string under the ``json`` key of the header's ``__metadata__`` map.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from safetensors.numpy import load_file, save_file


def save_archive(path, arrays: dict, meta: dict | None = None) -> None:
    clean = {k: np.ascontiguousarray(v) for k, v in arrays.items()}
    for k, v in clean.items():
        if np.iscomplexobj(v):
            raise TypeError(f"array {k!r} is complex; store real and imaginary parts separately")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_file(clean, str(path), metadata={"json": json.dumps(meta or {}, sort_keys=True)})


def load_archive(path) -> tuple[dict, dict]:
    from safetensors import safe_open

    path = str(path)
    with safe_open(path, framework="numpy") as fh:
        meta = fh.metadata() or {}
    return load_file(path), json.loads(meta.get("json", "{}"))
