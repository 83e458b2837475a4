"""
===========================================
Coded BER of the desk LDPC codes
===========================================

Sends random information bits through the digital link (LDPC encoder,
Gray-mapped constellation, AWGN channel, soft demapper, belief propagation)
and plots post-decoding bit error rate against Es/N0 for the two shipped
rate-1/2 codes. The long code has a much steeper waterfall than the
20-bit one, which is the reason a blocklength change barely moves the
image-level curves once the link sits on its plateau.
"""

# %%
# Setup
# -----
# Everything here runs on numpy/scipy; torch is not involved.
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from vqdeepsc import ChannelSpec, make_mode, transmit
from vqdeepsc.seeding import derive_seed

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

SNR_DB = np.arange(-4.0, 10.01, 1.0)
BITS_PER_POINT = 40_000

modes = {
    "n=20, BPSK": make_mode("a", "ldpc_n20_r12", "BPSK"),
    "n=648, BPSK": make_mode("b", "ldpc_n648_r12", "BPSK"),
    "n=648, 16-QAM": make_mode("c", "ldpc_n648_r12", "16QAM"),
}

# %%
# Monte Carlo
# -----------
# One frame per SNR point; the frame is split into as many codewords as the
# payload needs. Seeds are derived from the point index so reruns agree.
rng = np.random.default_rng(0)
payload = rng.integers(0, 2, BITS_PER_POINT, dtype=np.uint8)
awgn = ChannelSpec("awgn")

curves = {}
for m, (label, mode) in enumerate(modes.items()):
    ber = []
    for i, snr in enumerate(SNR_DB):
        _, rep = transmit(payload, mode, awgn, float(snr), derive_seed(0, "waterfall", m, i))
        ber.append(rep.ber)
    curves[label] = np.array(ber)
    print(label, " ".join(f"{b:.1e}" for b in ber))

# %%
# Plot
# ----
# Zero-error points are drawn at the resolution floor 1/BITS_PER_POINT.
floor = 1.0 / BITS_PER_POINT
fig, ax = plt.subplots(figsize=(5, 3.6))
for label, ber in curves.items():
    ax.semilogy(SNR_DB, np.maximum(ber, floor), marker="o", label=label)
ax.axhline(floor, color="grey", lw=0.8, ls=":")
ax.set_xlabel("Es/N0 (dB)")
ax.set_ylabel("post-decoding BER")
ax.grid(alpha=0.3, which="both")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "ldpc_waterfall.png", dpi=120)
print("wrote", OUT / "ldpc_waterfall.png")
