"""
===========================================
One image through the full digital link
===========================================

Sends a single held-out crop through encoder, quantizer, bit packing, LDPC,
BPSK, a Rayleigh channel and back, at SNRs on both sides of the cliff, and
shows the reconstructions next to the noiseless one. Each call of
``vqdeepsc roundtrip`` writes ``reconstruction.png`` and a ``report.json``
with the frame accounting and error counts.
"""

# %%
# Setup
# -----
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from vqdeepsc.cli import main
from vqdeepsc.data import load_image

HERE = Path(__file__).resolve().parent
RUN = HERE / "runs" / "desk-vq-deepsc3"
IMAGE = HERE / "data" / "desk" / "crop_063.png"  # last crop: held out from training

# %%
# Roundtrips
# ----------
cases = [("noiseless", []), ("10 dB", ["--snr", "10"]), ("3 dB", ["--snr", "3"]),
         ("0 dB", ["--snr", "0"]), ("-2 dB", ["--snr=-2"])]
panels = [("original", load_image(IMAGE), None)]
for name, extra in cases:
    out = RUN / "roundtrip" / name.replace(" ", "")
    code = main(["roundtrip", "--checkpoint", str(RUN / "best.safetensors"), "--image", str(IMAGE),
                 "--channel", "rayleigh", "--out", str(out), *extra])
    assert code == 0, code
    rep = json.loads((out / "report.json").read_text())
    print(f"{name:>9}: {rep['info_bits']} info bits -> {rep['symbols']} symbols, "
          f"BER {rep['ber']:.2e}, IER {rep['ier']:.2e}, MS-SSIM {rep['ms_ssim']:.4f}")
    panels.append((f"{name}\nMS-SSIM {rep['ms_ssim']:.3f}", load_image(out / "reconstruction.png"), rep))

# %%
# Side by side
# ------------
fig, axes = plt.subplots(1, len(panels), figsize=(2.2 * len(panels), 2.6))
for ax, (title, img, _) in zip(axes, panels):
    ax.imshow(img)
    ax.set_title(title, fontsize=8)
    ax.axis("off")
fig.tight_layout()
(HERE / "out").mkdir(exist_ok=True)
fig.savefig(HERE / "out" / "roundtrip.png", dpi=120)
