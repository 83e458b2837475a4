"""Fixed-width serialization of per-level index streams."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log2

import numpy as np


def bits_per_index(num_vectors: int) -> int:
    if num_vectors < 1:
        raise ValueError("codebook must hold at least one vector")
    return ceil(log2(num_vectors)) if num_vectors > 1 else 0


@dataclass
class Bitstream:
    """Serialized indices plus the layout needed to undo the packing.

    ``counts[i]`` indices of width ``widths[i]`` bits belong to the i-th
    transmitted level. No framing goes in-band; both ends derive the
    layout from the shared configuration.
    """

    bits: np.ndarray
    counts: tuple[int, ...]
    widths: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.bits.size)


def _to_fields(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values.astype(np.int64)[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def indices_to_bits(streams, num_vectors) -> Bitstream:
    """Concatenate index streams (ascending level order) as big-endian
    fields of ``ceil(log2 N)`` bits each."""
    if len(streams) != len(num_vectors):
        raise ValueError("one codebook size per stream is required")
    chunks, counts, widths = [], [], []
    for s, n in zip(streams, num_vectors):
        s = np.asarray(s, dtype=np.int64).ravel()
        if s.size and (s.min() < 0 or s.max() >= n):
            raise ValueError(f"index out of range for codebook of {n} vectors")
        w = bits_per_index(n)
        chunks.append(_to_fields(s, w))
        counts.append(s.size)
        widths.append(w)
    bits = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    return Bitstream(bits, tuple(counts), tuple(widths))


def bits_to_indices(bits, counts, num_vectors) -> tuple[list[np.ndarray], int]:
    """Inverse of :func:`indices_to_bits`.

    A decoded field that is not a valid index (possible when N is not a
    power of two) is clamped to ``N - 1``. Returns the streams and the
    number of clamped fields.
    """
    b = np.asarray(bits.bits if isinstance(bits, Bitstream) else bits, dtype=np.uint8).ravel()
    widths = [bits_per_index(n) for n in num_vectors]
    expected = sum(c * w for c, w in zip(counts, widths))
    if b.size != expected:
        raise ValueError(f"bitstream holds {b.size} bits, configuration expects {expected}")
    out, clamped, pos = [], 0, 0
    for c, w, n in zip(counts, widths, num_vectors):
        if w == 0:
            out.append(np.zeros(c, dtype=np.int64))
            continue
        fields = b[pos : pos + c * w].reshape(c, w).astype(np.int64)
        pos += c * w
        vals = fields @ (1 << np.arange(w - 1, -1, -1, dtype=np.int64))
        bad = vals >= n
        clamped += int(bad.sum())
        vals[bad] = n - 1
        out.append(vals)
    return out, clamped
