"""Constellations with Gray (or quasi-Gray) labels, hard mapping and exact
log-sum soft demapping under circular complex Gaussian noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class Constellation:
    """Unit-energy constellation.

    ``points[label]`` is the symbol carrying bit pattern ``label``; label
    bits are read most significant first.
    """

    name: str
    points: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.points.size))

    @property
    def bit_labels(self) -> np.ndarray:
        """(M, bits_per_symbol) array of label bits, MSB first."""
        m = self.bits_per_symbol
        labels = np.arange(self.points.size)
        return ((labels[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "bits", "real", "imag"])
            for lab, (bits, p) in enumerate(zip(self.bit_labels, self.points)):
                w.writerow([lab, "".join(map(str, bits)), repr(p.real), repr(p.imag)])


_PAM4_GRAY = {0b00: -3, 0b01: -1, 0b11: 1, 0b10: 3}

# 32-point cross. Labels 0..31 in order; derived from a Gray-labelled 8x4
# rectangle whose outer columns (|I| = 7) are folded onto the |Q| = 5 rows.
# 60 bit flips over the 52 nearest-neighbour pairs (a perfect Gray map
# would give 52, which no cross labelling achieves).
_QAM32_CROSS = [
    (-3, -5), (-1, -5), (-1, 5), (-3, 5), (-5, -3), (-5, -1), (-5, 3), (-5, 1),
    (-1, -3), (-1, -1), (-1, 3), (-1, 1), (-3, -3), (-3, -1), (-3, 3), (-3, 1),
    (3, -5), (1, -5), (1, 5), (3, 5), (5, -3), (5, -1), (5, 3), (5, 1),
    (1, -3), (1, -1), (1, 3), (1, 1), (3, -3), (3, -1), (3, 3), (3, 1),
]


def _bpsk() -> np.ndarray:
    return np.array([1.0 + 0j, -1.0 + 0j])


def _qam16() -> np.ndarray:
    pts = np.empty(16, dtype=complex)
    for lab in range(16):
        pts[lab] = _PAM4_GRAY[lab >> 2] + 1j * _PAM4_GRAY[lab & 0b11]
    return pts / np.sqrt(10.0)


def _qam32() -> np.ndarray:
    pts = np.array([i + 1j * q for i, q in _QAM32_CROSS])
    return pts / np.sqrt(20.0)


_BUILDERS = {"BPSK": _bpsk, "QAM16": _qam16, "QAM32": _qam32}


@lru_cache(maxsize=None)
def get_constellation(name: str) -> Constellation:
    key = name.upper().replace("-", "")
    if key == "16QAM":
        key = "QAM16"
    elif key == "32QAM":
        key = "QAM32"
    if key not in _BUILDERS:
        raise ValueError(f"unknown constellation {name!r}; choose from {sorted(_BUILDERS)}")
    pts = _BUILDERS[key]()
    pts.setflags(write=False)
    return Constellation(key, pts)


def modulate(bits: np.ndarray, constellation: Constellation | str) -> np.ndarray:
    """Map a bit vector onto symbols. Length must be a multiple of
    ``bits_per_symbol``; callers pad beforehand."""
    const = get_constellation(constellation) if isinstance(constellation, str) else constellation
    b = np.asarray(bits, dtype=np.uint8).ravel()
    m = const.bits_per_symbol
    if b.size % m:
        raise ValueError(f"{b.size} bits is not a multiple of {m} bits per symbol")
    groups = b.reshape(-1, m).astype(np.int64)
    labels = groups @ (1 << np.arange(m - 1, -1, -1))
    return const.points[labels]


def demodulate_soft(
    symbols: np.ndarray,
    constellation: Constellation | str,
    noise_variance,
    erasures: np.ndarray | None = None,
) -> np.ndarray:
    """Exact per-bit LLRs, ``log P(b=0|y) - log P(b=1|y)``.

    ``noise_variance`` is the total complex noise variance and may be a
    scalar or one value per symbol (post-equalisation noise differs per
    symbol on fading channels). Erased symbols yield zero LLRs.
    """
    const = get_constellation(constellation) if isinstance(constellation, str) else constellation
    y = np.asarray(symbols, dtype=complex).ravel()
    var = np.broadcast_to(np.asarray(noise_variance, dtype=float), y.shape)
    if np.any(var <= 0):
        raise ValueError("noise variance must be positive")
    d2 = np.abs(y[:, None] - const.points[None, :]) ** 2
    metric = -d2 / var[:, None]
    labels = const.bit_labels
    llr = np.empty((y.size, const.bits_per_symbol))
    for i in range(const.bits_per_symbol):
        zero = labels[:, i] == 0
        llr[:, i] = logsumexp(metric[:, zero], axis=1) - logsumexp(metric[:, ~zero], axis=1)
    if erasures is not None:
        llr[np.asarray(erasures, dtype=bool).ravel()] = 0.0
    return llr.ravel()


def hard_decision(llrs: np.ndarray) -> np.ndarray:
    return (np.asarray(llrs) < 0).astype(np.uint8)
