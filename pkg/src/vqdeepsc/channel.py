"""Flat-fading channel models with perfect-CSI equalisation.

Noise variance is the total complex variance, split evenly between the
in-phase and quadrature parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ERASURE_THRESHOLD = 1e-12

CHANNEL_KINDS = ("awgn", "rayleigh", "rician")


def rician_parameters(r: float) -> tuple[float, float]:
    """Mean and variance of the Rician coefficient: sqrt(r/(r+1)), 1/(r+1)."""
    if r < 0:
        raise ValueError("Rician factor must be non-negative")
    return float(np.sqrt(r / (r + 1.0))), 1.0 / (r + 1.0)


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_channel(
    kind: str, r: float, num_symbols: int, rng: np.random.Generator, block_fading: bool = False
) -> np.ndarray:
    """Draw channel coefficients, i.i.d. per symbol unless ``block_fading``
    holds one coefficient for the whole frame."""
    kind = kind.lower()
    if num_symbols < 1:
        raise ValueError("num_symbols must be at least 1")
    if kind == "awgn":
        return np.ones(num_symbols, dtype=complex)
    if kind == "rayleigh":
        mu, var = 0.0, 1.0
    elif kind == "rician":
        mu, var = rician_parameters(r)
    else:
        raise ValueError(f"unknown channel kind {kind!r}")
    n = 1 if block_fading else num_symbols
    h = mu + complex_normal(rng, n, var)
    return np.full(num_symbols, h[0]) if block_fading else h


def snr_to_noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    if signal_power <= 0:
        raise ValueError("signal power must be positive")
    return signal_power / 10 ** (snr_db / 10.0)


def apply_channel(x, h, noise_variance: float, rng: np.random.Generator):
    """``y = h * x + w`` with ``w ~ CN(0, noise_variance)``.

    Returns ``(y, w)``; with zero variance no random numbers are drawn and
    ``y`` equals ``h * x`` exactly.
    """
    x = np.asarray(x, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if x.shape != h.shape:
        raise ValueError(f"symbol/coefficient length mismatch {x.shape} vs {h.shape}")
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    if noise_variance == 0:
        w = np.zeros_like(x)
    else:
        w = complex_normal(rng, x.shape, noise_variance)
    return h * x + w, w


def equalize(y, h):
    """Zero-forcing with perfect CSI: ``conj(h) * y / |h|^2``.

    Symbols whose coefficient magnitude falls below 1e-12 are not divided;
    they come back as 0 with ``erased`` set so the demapper emits zero LLRs.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if y.shape != h.shape:
        raise ValueError("length mismatch between y and h")
    g = np.abs(h) ** 2
    erased = np.abs(h) < ERASURE_THRESHOLD
    safe = np.where(erased, 1.0, g)
    xhat = np.where(erased, 0.0, np.conj(h) * y / safe)
    return xhat, erased


def post_equalization_variance(h, noise_variance: float, floor: float = 1e-10) -> np.ndarray:
    """Per-symbol noise variance after zero forcing, ``sigma^2 / |h|^2``.

    ``floor`` keeps the noiseless case usable by the soft demapper.
    """
    g = np.maximum(np.abs(np.asarray(h)) ** 2, ERASURE_THRESHOLD**2)
    return np.maximum(noise_variance / g, floor)


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "awgn"
    rician_r: float = 1.0
    block_fading: bool = False

    def __post_init__(self):
        if self.kind.lower() not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.rician_r < 0:
            raise ValueError("Rician factor must be non-negative")


@dataclass
class ChannelRealization:
    kind: str
    rician_r: float
    h: np.ndarray
    noise: np.ndarray
    noise_variance: float
    seed: int

    def save(self, path) -> None:
        from .archive import save_archive

        save_archive(
            path,
            {
                "h_real": self.h.real, "h_imag": self.h.imag,
                "w_real": self.noise.real, "w_imag": self.noise.imag,
            },
            {
                "kind": self.kind, "rician_r": self.rician_r,
                "noise_variance": self.noise_variance, "seed": self.seed,
            },
        )

    @classmethod
    def load(cls, path) -> "ChannelRealization":
        from .archive import load_archive

        arrays, meta = load_archive(path)
        return cls(
            meta["kind"], float(meta["rician_r"]),
            arrays["h_real"] + 1j * arrays["h_imag"],
            arrays["w_real"] + 1j * arrays["w_imag"],
            float(meta["noise_variance"]), int(meta["seed"]),
        )


def realize(spec: ChannelSpec, x, snr_db: float | None, seed: int):
    """Sample a channel, pass ``x`` through it and keep the full trace.

    ``snr_db=None`` selects the noiseless channel.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=complex)
    h = sample_channel(spec.kind, spec.rician_r, max(x.size, 1), rng, spec.block_fading)[: x.size]
    var = 0.0 if snr_db is None else snr_to_noise_variance(snr_db, 1.0)
    y, w = apply_channel(x, h, var, rng)
    return y, ChannelRealization(spec.kind, spec.rician_r, h, w, var, seed)
