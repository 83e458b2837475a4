"""Named derivation of child seeds from one top-level seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, name: str, *key: int) -> int:
    """Stable 32-bit seed for purpose ``name`` (``"train"``, ``"channel"``,
    ...) and an optional integer key such as ``(snr_index, trial, image)``."""
    spawn = (zlib.crc32(name.encode()),) + tuple(int(k) for k in key)
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=spawn)
    return int(ss.generate_state(1)[0])
