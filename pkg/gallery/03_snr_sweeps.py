"""
===========================================
MS-SSIM against SNR: digital cliff vs analog
===========================================

Uses the checkpoint from ``02_train_desk_model.py``.

* AWGN sweep of the digital link through ``vqdeepsc sweep``.
* Rician (r = 1) sweep of the same checkpoint through the library API.
* An analog ablation: the same encoder/decoder trained without a quantizer,
  whose power-normalised features go straight over the channel. Its
  feature widths are picked so it spends roughly as many complex symbols per
  image as the coded digital frame.

The digital curves stay flat at the noiseless score until the LDPC decoder
falls off its waterfall, then collapse; the analog curve degrades gradually.
At this desk scale the analog model, which is not squeezed through a
2,720-bit budget, overtakes the digital one a few dB above the cliff, so only
the curve shapes (not the ranking of full-size models) are demonstrated here.
No external baseline curves are shipped; pass your own with ``--baseline``
to ``vqdeepsc plot``.
"""

# %%
# Setup
# -----
from pathlib import Path

import numpy as np
import torch

from vqdeepsc import ChannelSpec, ModelConfig, SweepSpec, TrainConfig, Trainer, VQDeepSC
from vqdeepsc import analog_bypass_eval, run_sweep
from vqdeepsc.checkpoint import load_model
from vqdeepsc.cli import main
from vqdeepsc.config import ExperimentConfig
from vqdeepsc.data import load_directory, to_batch
from vqdeepsc.evaluation import write_curve_csv
from vqdeepsc.seeding import derive_seed
from vqdeepsc.training import PatchDiscriminator, train

HERE = Path(__file__).resolve().parent
CONFIG = HERE / "configs" / "desk-vq-deepsc3.toml"
RUN = HERE / "runs" / "desk-vq-deepsc3"
CKPT = RUN / "best.safetensors"
GRID = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 10.0, 20.0]
TRIALS = 10

cfg = ExperimentConfig.load(CONFIG)
images = to_batch(load_directory(cfg.paths.dataset, size=64))

# %%
# Digital link over AWGN, via the CLI
# -----------------------------------
grid = ",".join(str(s) for s in GRID)
code = main(["sweep", "--config", str(CONFIG), "--checkpoint", str(CKPT), f"--snr-grid={grid}",
             "--label", "VQ-DeepSC3 (AWGN)", "--out", str(RUN / "awgn.csv")])
assert code == 0, code

# %%
# Digital link over Rician fading, via the library
# ------------------------------------------------
model, _ = load_model(CKPT, cfg.model)
rician = ChannelSpec("rician", rician_r=1.0)
sweep_imgs = images[: cfg.sweep.num_images]
spec = SweepSpec(GRID, rician, cfg.amc_table(), sweep_imgs, trials=TRIALS, seed=cfg.seed)
points = run_sweep(model, spec)
write_curve_csv(points, RUN / "rician.csv")
for p in points:
    print(f"rician {p.snr_db:5.1f} dB  MS-SSIM {p.ms_ssim_mean:.4f}  IER {p.ier:.2e}")
digital_symbols = points[0].symbols_per_image

# %%
# Analog ablation
# ---------------
# Same codec widths, no embedding spaces. Eight real channels per level
# gives about 5.4k complex symbols per 64x64 image, close to the 5,832
# symbols of the coded digital frame.
acfg = ModelConfig(codec=cfg.model.codec, num_vectors=cfg.model.num_vectors,
                   transmit=cfg.model.transmit, mode="analog", analog_channels=[8, 8, 8, 8])
torch.manual_seed(derive_seed(cfg.seed, "init"))
analog = VQDeepSC(acfg)
n_train = len(images) - int(np.ceil(cfg.val_fraction * len(images)))
trainer = Trainer(analog, cfg.train, PatchDiscriminator(cfg.discriminator),
                  steps_per_epoch=n_train // cfg.train.batch_size)
train(trainer, images[:n_train], cfg.steps, seed=derive_seed(cfg.seed, "train"))

for channel in (ChannelSpec("awgn"), rician):
    spec = SweepSpec(GRID, channel, cfg.amc_table(), sweep_imgs, trials=TRIALS, seed=cfg.seed)
    pts = analog_bypass_eval(analog, spec)
    write_curve_csv(pts, RUN / f"analog_{channel.kind}.csv")
print(f"symbols per image: digital {digital_symbols:.0f}, analog {pts[0].symbols_per_image:.0f}")

# %%
# Figures
# -------
# One PNG per channel kind; the channel of the CLI curve comes from its
# JSON sidecar, the others are tagged explicitly.
code = main(["plot", str(RUN / "awgn.csv"),
             f"VQ-DeepSC3 (Rician)={RUN / 'rician.csv'}@rician",
             f"analog (AWGN)={RUN / 'analog_awgn.csv'}@awgn",
             f"analog (Rician)={RUN / 'analog_rician.csv'}@rician",
             "--out", str(HERE / "out")])
assert code == 0, code
