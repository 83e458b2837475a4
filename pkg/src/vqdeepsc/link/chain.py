"""Bit-level transport: LDPC blocks -> constellation -> channel -> soft
demapping -> BP decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelSpec, equalize, post_equalization_variance, realize
from .amc import AMCMode
from .modulation import demodulate_soft, modulate


@dataclass(frozen=True)
class FrameLayout:
    info_bits: int
    num_blocks: int
    info_pad: int
    coded_bits: int
    symbol_pad: int
    num_symbols: int


def frame_layout(num_info_bits: int, mode: AMCMode) -> FrameLayout:
    k, n = mode.code.k, mode.code.n
    blocks = -(-num_info_bits // k)
    coded = blocks * n
    bps = mode.constellation.bits_per_symbol
    sym_pad = (-coded) % bps
    return FrameLayout(
        num_info_bits, blocks, blocks * k - num_info_bits, coded, sym_pad, (coded + sym_pad) // bps
    )


@dataclass
class LinkReport:
    layout: FrameLayout
    bit_errors: int
    blocks_unconverged: int
    noise_variance: float
    erasures: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.layout.info_bits if self.layout.info_bits else 0.0


def encode_frame(bits: np.ndarray, mode: AMCMode) -> tuple[np.ndarray, FrameLayout]:
    """Info bits -> unit-energy symbols, zero padding at both stages."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    lay = frame_layout(bits.size, mode)
    if lay.num_blocks == 0:
        return np.zeros(0, dtype=complex), lay
    msg = np.concatenate([bits, np.zeros(lay.info_pad, dtype=np.uint8)]).reshape(-1, mode.code.k)
    coded = mode.code.encode(msg).ravel()
    coded = np.concatenate([coded, np.zeros(lay.symbol_pad, dtype=np.uint8)])
    return modulate(coded, mode.constellation), lay


def decode_frame(llrs: np.ndarray, lay: FrameLayout, mode: AMCMode):
    if lay.num_blocks == 0:
        return np.zeros(0, dtype=np.uint8), 0
    llrs = np.asarray(llrs)[: lay.coded_bits].reshape(lay.num_blocks, mode.code.n)
    msg, conv = mode.code.decode(llrs)
    return msg.ravel()[: lay.info_bits], int((~conv).sum())


def transmit(
    bits: np.ndarray,
    mode: AMCMode,
    channel: ChannelSpec,
    snr_db: float | None,
    seed: int,
    trace: dict | None = None,
) -> tuple[np.ndarray, LinkReport]:
    """Send info bits over the full digital chain and return the decoded
    bits. ``snr_db=None`` is the noiseless link. When ``trace`` is a dict it
    receives the frame's symbols, LLRs and channel realization."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    x, lay = encode_frame(bits, mode)
    if lay.num_blocks == 0:
        return bits.copy(), LinkReport(lay, 0, 0, 0.0, 0)
    y, real = realize(channel, x, snr_db, seed)
    xhat, erased = equalize(y, real.h)
    var = post_equalization_variance(real.h, real.noise_variance)
    llrs = demodulate_soft(xhat, mode.constellation, var, erasures=erased)
    out, unconv = decode_frame(llrs, lay, mode)
    if trace is not None:
        trace.update(symbols=x, received=y, llrs=llrs, realization=real)
    report = LinkReport(lay, int((out != bits).sum()), unconv, real.noise_variance, int(erased.sum()))
    return out, report
