"""PatchGAN discriminator, loss assembly and the alternating training loop.

The generator (encoder, decoder and codebooks) minimises
``lam * L_vq + L_adv`` while the discriminator maximises
``log D(I) + log(1 - D(I_hat))``. Training is noiseless: the quantized
features go straight to the decoder.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .model import VQDeepSC
from .quantizer import usage_entropy

EPS = 1e-7


class NonFiniteLossError(FloatingPointError):
    def __init__(self, metrics: dict):
        self.metrics = metrics
        super().__init__(f"non-finite loss encountered: {metrics}")


@dataclass
class DiscriminatorConfig:
    in_channels: int = 3
    widths: list = field(default_factory=lambda: [16, 32, 64, 128])
    kernel_size: int = 4
    strides: list = field(default_factory=lambda: [2, 2, 2, 1, 1])
    negative_slope: float = 0.2

    def __post_init__(self):
        if len(self.widths) != 4 or len(self.strides) != 5:
            raise ValueError("discriminator has a stem, three middle stages and an output conv")

    def grid_size(self, side: int) -> int:
        pad = 1
        for s in self.strides:
            side = (side + 2 * pad - self.kernel_size) // s + 1
        return side


@dataclass
class TrainConfig:
    beta_c: float = 0.25
    lam: float = 0.1
    lr_codec: float = 1.75e-4
    lr_disc: float = 1e-5
    betas: tuple = (0.5, 0.999)
    step_size_epochs: int = 100
    step_gamma: float = 0.5
    batch_size: int = 24
    epochs: int = 400
    seed: int = 0
    non_saturating: bool = False
    adversarial: bool = True
    adv_weight: float = 1.0
    adv_start_step: int = 0
    channel_in_loop: bool = False
    train_snr_db: float = 9.0
    train_channel: str = "awgn"
    rician_r: float = 1.0

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.beta_c <= 0 or self.lam <= 0:
            raise ValueError("beta_c and lam must be positive")
        if self.lr_codec <= 0 or self.lr_disc <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


class PatchDiscriminator(nn.Module):
    """Grid of per-patch real/fake probabilities."""

    def __init__(self, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or DiscriminatorConfig()
        k, s, w = cfg.kernel_size, cfg.strides, cfg.widths
        act = lambda: nn.LeakyReLU(cfg.negative_slope)  # noqa: E731
        layers = [nn.Conv2d(cfg.in_channels, w[0], k, s[0], 1), act()]
        for i in range(3):
            layers += [nn.Conv2d(w[i], w[i + 1], k, s[i + 1], 1, bias=False), nn.BatchNorm2d(w[i + 1]), act()]
        layers.append(nn.Conv2d(w[3], 1, k, s[4], 1))
        self.model = nn.Sequential(*layers)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.normal_(m.weight, 0.0, 0.02)
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        side = min(image.shape[-2:])
        if self.cfg.grid_size(side) < 1:
            raise ValueError(f"{side}px input is smaller than the discriminator's receptive field")
        return torch.sigmoid(self.model(image))


def discriminate(image: torch.Tensor, disc: PatchDiscriminator) -> torch.Tensor:
    return disc(image)


def _check_prob(t: torch.Tensor, name: str) -> torch.Tensor:
    if torch.any(t < 0) or torch.any(t > 1):
        raise ValueError(f"{name} must hold probabilities in [0, 1]")
    return t.clamp(EPS, 1 - EPS)


def gan_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """mean log D(I) + mean log(1 - D(I_hat)) over patches and batch."""
    if d_real.shape != d_fake.shape:
        raise ValueError("discriminator grids differ in shape")
    d_real = _check_prob(d_real, "d_real")
    d_fake = _check_prob(d_fake, "d_fake")
    return torch.log(d_real).mean() + torch.log1p(-d_fake).mean()


def generator_adversarial_loss(d_fake: torch.Tensor, non_saturating: bool = False) -> torch.Tensor:
    d_fake = _check_prob(d_fake, "d_fake")
    if non_saturating:
        return -torch.log(d_fake).mean()
    return torch.log1p(-d_fake).mean()


def total_loss(image, recon, vq_terms, beta_c: float) -> torch.Tensor:
    """MAE plus, over transmitted levels, embedding + beta_c * commitment."""
    if image.shape != recon.shape:
        raise ValueError("image and reconstruction differ in shape")
    loss = (image - recon).abs().mean()
    for terms in vq_terms:
        if terms is None:
            continue
        emb, com = terms
        loss = loss + emb + beta_c * com
    return loss


def channel_in_loop(cfg: TrainConfig, generator: torch.Generator):
    """Differentiable AWGN / Rician / Rayleigh channel on real pairs with
    perfect-CSI equalisation, for analog-mode training."""
    from .channel import rician_parameters

    var = 10 ** (-cfg.train_snr_db / 10)

    def fn(z: torch.Tensor) -> torch.Tensor:
        x = torch.complex(z[:, 0::2], z[:, 1::2])
        noise = torch.complex(
            torch.randn(x.shape, generator=generator, dtype=z.dtype),
            torch.randn(x.shape, generator=generator, dtype=z.dtype),
        ) * math.sqrt(var / 2)
        kind = cfg.train_channel.lower()
        if kind == "awgn":
            y = x + noise
        else:
            mu, hv = (0.0, 1.0) if kind == "rayleigh" else rician_parameters(cfg.rician_r)
            h = mu + torch.complex(
                torch.randn(x.shape, generator=generator, dtype=z.dtype),
                torch.randn(x.shape, generator=generator, dtype=z.dtype),
            ) * math.sqrt(hv / 2)
            y = (h * x + noise) * h.conj() / (h.abs() ** 2).clamp_min(1e-12)
        out = torch.empty_like(z)
        out[:, 0::2], out[:, 1::2] = y.real, y.imag
        return out

    return fn


class Trainer:
    """Owns the model, discriminator, both optimisers and their schedules."""

    def __init__(self, model: VQDeepSC, cfg: TrainConfig, disc: PatchDiscriminator | None = None,
                 steps_per_epoch: int = 1):
        self.model = model
        self.cfg = cfg
        self.disc = disc or PatchDiscriminator()
        self.opt_g = torch.optim.Adam(model.parameters(), lr=cfg.lr_codec, betas=cfg.betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=cfg.lr_disc, betas=cfg.betas)
        self.sched_g = torch.optim.lr_scheduler.StepLR(self.opt_g, cfg.step_size_epochs, cfg.step_gamma)
        total = cfg.epochs
        self.sched_d = torch.optim.lr_scheduler.LambdaLR(
            self.opt_d, lambda e: max(0.0, 1.0 - e / total)
        )
        self.steps_per_epoch = max(1, steps_per_epoch)
        self.step_count = 0
        self.epoch = 0
        self.noise_gen = torch.Generator().manual_seed(cfg.seed)

    def _vq_metrics(self, aux) -> dict:
        out = {}
        for l, terms in enumerate(aux["vq_losses"]):
            if terms is None:
                continue
            out[f"embedding_l{l + 1}"] = terms[0].item()
            out[f"commitment_l{l + 1}"] = terms[1].item()
            idx = aux["indices"][l]
            n = self.model.cfg.num_vectors[l]
            out[f"usage_entropy_l{l + 1}"] = usage_entropy(idx.cpu().numpy(), n)
        return out

    def train_step(self, batch: torch.Tensor) -> dict:
        """One alternating update: discriminator first, then generator."""
        cfg = self.cfg
        self.model.train()
        self.disc.train()
        if self.model.cfg.mode == "analog":
            fn = channel_in_loop(cfg, self.noise_gen) if cfg.channel_in_loop else None
            recon = self.model.analog_forward(batch, fn)
            aux = {"indices": None, "vq_losses": [None] * self.model.cfg.codec.num_levels}
        else:
            recon, aux = self.model(batch)

        metrics = {}
        use_adv = cfg.adversarial and self.step_count >= cfg.adv_start_step
        if use_adv:
            d_loss = gan_loss(self.disc(batch), self.disc(recon.detach()))
            self.opt_d.zero_grad(set_to_none=True)
            (-d_loss).backward()
            self.opt_d.step()
            metrics["gan_d"] = d_loss.item()

        vq = total_loss(batch, recon, aux["vq_losses"], cfg.beta_c)
        mae = (batch - recon).abs().mean()
        g_loss = cfg.lam * vq
        if use_adv:
            adv = generator_adversarial_loss(self.disc(recon), cfg.non_saturating)
            g_loss = g_loss + cfg.adv_weight * adv
            metrics["gen_adv"] = adv.item()
        else:
            metrics["gen_adv"] = 0.0
        metrics.update(mae=mae.item(), vq_total=vq.item(), gen_total=g_loss.item())
        if aux["indices"] is not None:
            metrics.update(self._vq_metrics(aux))
        if not all(math.isfinite(v) for v in metrics.values()):
            raise NonFiniteLossError(metrics)

        self.opt_g.zero_grad(set_to_none=True)
        g_loss.backward()
        self.opt_g.step()
        self.opt_d.zero_grad(set_to_none=True)

        self.step_count += 1
        metrics.update(step=self.step_count, epoch=self.epoch,
                       lr_g=self.opt_g.param_groups[0]["lr"], lr_d=self.opt_d.param_groups[0]["lr"])
        if self.step_count % self.steps_per_epoch == 0:
            self.epoch += 1
            self.sched_g.step()
            with warnings.catch_warnings():
                # the discriminator may not have stepped yet during an adversarial warm-up
                warnings.filterwarnings("ignore", message="Detected call of `lr_scheduler.step")
                self.sched_d.step()
        return metrics


def batch_indices(num_images: int, batch_size: int, step: int, seed: int) -> np.ndarray:
    """Image indices for global step ``step``.

    Each epoch is a fresh permutation drawn from ``(seed, epoch)``; the last
    short batch is dropped so batch-norm statistics stay comparable. Being a
    pure function of the step makes resumed runs replay the same batches.
    """
    per_epoch = num_images // batch_size
    if per_epoch < 1:
        raise ValueError(f"{num_images} images cannot fill a batch of {batch_size}")
    epoch, pos = divmod(step, per_epoch)
    order = np.random.default_rng([seed, epoch]).permutation(num_images)
    return order[pos * batch_size : (pos + 1) * batch_size]


def train(trainer: Trainer, images: np.ndarray, num_steps: int, seed: int,
          log_path=None, callback=None) -> list:
    """Advance ``trainer`` to global step ``num_steps`` over ``images`` (N, C, H, W)."""
    history = []
    writer = fh = None
    if log_path is not None:
        fh = open(log_path, "a", newline="")
    try:
        while trainer.step_count < num_steps:
            idx = batch_indices(len(images), trainer.cfg.batch_size, trainer.step_count, seed)
            m = trainer.train_step(torch.from_numpy(np.ascontiguousarray(images[idx])))
            history.append(m)
            if fh is not None:
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=list(m))
                    if fh.tell() == 0:
                        writer.writeheader()
                writer.writerow(m)
            if callback is not None:
                callback(trainer, m)
    finally:
        if fh is not None:
            fh.close()
    return history
