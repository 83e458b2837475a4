"""Adaptive modulation and coding: modes and SNR-interval mode tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .ldpc import LDPCCode, load_code
from .modulation import Constellation, get_constellation


class AMCGapError(LookupError):
    """No mode in the table covers the requested SNR."""

    def __init__(self, snrs):
        self.snrs = list(snrs)
        super().__init__(f"AMC table has no mode for SNR(s) {self.snrs} dB")


@dataclass
class AMCMode:
    label: str
    code: LDPCCode
    constellation: Constellation

    @property
    def rate(self) -> float:
        return self.code.rate

    @property
    def spectral_efficiency(self) -> float:
        return self.code.rate * self.constellation.bits_per_symbol


@lru_cache(maxsize=None)
def _cached_code(name: str, iters: int) -> LDPCCode:
    return load_code(name, iters)


def make_mode(label: str, code: str, constellation: str, max_bp_iterations: int = 50) -> AMCMode:
    return AMCMode(label, _cached_code(code, max_bp_iterations), get_constellation(constellation))


@dataclass
class AMCTable:
    """Half-open SNR intervals ``[low, high)`` mapped to mode labels."""

    modes: dict[str, AMCMode]
    intervals: list[tuple[float, float, str]] = field(default_factory=list)

    def __post_init__(self):
        for lo, hi, lab in self.intervals:
            if lab not in self.modes:
                raise ValueError(f"interval refers to unknown mode {lab!r}")
            if not lo < hi:
                raise ValueError(f"empty SNR interval [{lo}, {hi})")

    @classmethod
    def fixed(cls, mode: AMCMode) -> "AMCTable":
        return cls({mode.label: mode}, [(float("-inf"), float("inf"), mode.label)])

    @classmethod
    def from_dict(cls, d: dict) -> "AMCTable":
        iters = int(d.get("max_bp_iterations", 50))
        modes = {
            lab: make_mode(lab, spec["code"], spec["constellation"], iters)
            for lab, spec in d["modes"].items()
        }
        intervals = [
            (float(e.get("snr_min", float("-inf"))), float(e.get("snr_max", float("inf"))), e["mode"])
            for e in d["table"]
        ]
        return cls(modes, intervals)

    def select(self, snr_db: float) -> AMCMode:
        for lo, hi, lab in self.intervals:
            # +inf (the noiseless point) belongs to an interval open to +inf
            if lo <= snr_db < hi or snr_db == hi == float("inf"):
                return self.modes[lab]
        raise AMCGapError([snr_db])

    def check_coverage(self, snrs) -> None:
        missing = []
        for s in snrs:
            try:
                self.select(s)
            except AMCGapError:
                missing.append(s)
        if missing:
            raise AMCGapError(missing)
