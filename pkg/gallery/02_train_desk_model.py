"""
===========================================
Training a desk-scale VQ-DeepSC3
===========================================

Writes 64 random 64x64 crops of the scikit-image sample photographs to
``data/desk`` and trains the desk configuration in
``configs/desk-vq-deepsc3.toml`` for 200 steps through the ``vqdeepsc``
command line. It takes well under a minute on one CPU core.

The published codebook sizes are kept (2, 64, 4, 4 vectors per level) while
the vector dimensions are divided by 16, so an image costs the same number
of information bits as the full model would spend on it.
"""

# %%
# Dataset
# -------
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from vqdeepsc.cli import main
from vqdeepsc.data import write_desk_dataset

HERE = Path(__file__).resolve().parent
CONFIG = HERE / "configs" / "desk-vq-deepsc3.toml"
RUN = HERE / "runs" / "desk-vq-deepsc3"

write_desk_dataset(HERE / "data" / "desk", num=64, size=64, seed=0)

# %%
# Train
# -----
# The last eighth of the images is held out; ``best.safetensors`` is the
# checkpoint with the highest held-out MS-SSIM.
code = main(["train", "--config", str(CONFIG)])
assert code == 0, code
print(json.dumps(json.loads((RUN / "summary.json").read_text()), indent=2))

# %%
# Loss curves
# -----------
# ``gen_total`` mixes the weighted reconstruction/VQ objective with the
# (small) adversarial term; ``mae`` is plain reconstruction error.
with open(RUN / "train_log.csv") as fh:
    rows = list(csv.DictReader(fh))
steps = [int(r["step"]) for r in rows]
fig, axes = plt.subplots(1, 2, figsize=(8, 3))
axes[0].plot(steps, [float(r["gen_total"]) for r in rows], label="gen_total")
axes[0].plot(steps, [float(r["mae"]) for r in rows], label="mae")
axes[0].set_yscale("log")
axes[0].set_xlabel("step")
axes[0].legend(fontsize=8)
for l in range(1, 5):
    axes[1].plot(steps, [float(r[f"usage_entropy_l{l}"]) for r in rows], label=f"level {l}")
axes[1].set_xlabel("step")
axes[1].set_ylabel("codebook usage entropy (bits)")
axes[1].legend(fontsize=8)
fig.tight_layout()
(HERE / "out").mkdir(exist_ok=True)
fig.savefig(HERE / "out" / "training.png", dpi=120)
