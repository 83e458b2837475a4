"""End-to-end transceiver: semantic encoder, per-scale quantizer, decoder.

``mode="analog"`` gives the ablation without vector quantization: each
level is squeezed by a 1x1 convolution and sent as power-normalised
complex symbols.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .codec import CodecConfig, SemanticDecoder, SemanticEncoder
from .link.bitstream import bits_per_index
from .quantizer import VectorQuantizer


@dataclass
class ModelConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    num_vectors: list = field(default_factory=lambda: [2, 64, 4, 4])
    transmit: list = field(default_factory=lambda: [True, True, True, True])
    mode: str = "vq"
    analog_channels: list = field(default_factory=lambda: [2, 2, 2, 2])

    def __post_init__(self):
        if isinstance(self.codec, dict):
            self.codec = CodecConfig(**self.codec)
        L = self.codec.num_levels
        self.num_vectors = [int(n) for n in self.num_vectors]
        self.transmit = [bool(t) for t in self.transmit]
        self.analog_channels = [int(c) for c in self.analog_channels]
        if self.mode not in ("vq", "analog"):
            raise ValueError(f"unknown model mode {self.mode!r}")
        if len(self.num_vectors) != L or len(self.transmit) != L:
            raise ValueError("num_vectors and transmit need one entry per codec level")
        if self.mode == "analog" and len(self.analog_channels) != L:
            raise ValueError("analog_channels needs one entry per codec level")
        if any(n < 1 for n in self.num_vectors):
            raise ValueError("every embedding space needs at least one vector")
        if not any(self.transmit):
            raise ValueError("at least one level must be transmitted")

    def to_dict(self) -> dict:
        return asdict(self)

    def info_bits(self, height: int, width: int) -> int:
        """Pre-coding bits per image: sum over sent levels of M_l * ceil(log2 N_l)."""
        total = 0
        for l in range(self.codec.num_levels):
            if self.transmit[l]:
                h, w = self.codec.level_shape(height, width, l + 1)
                total += h * w * bits_per_index(self.num_vectors[l])
        return total

    def analog_reals(self, height: int, width: int) -> int:
        total = 0
        for l in range(self.codec.num_levels):
            if self.transmit[l]:
                h, w = self.codec.level_shape(height, width, l + 1)
                total += h * w * self.analog_channels[l]
        return total


def normalize_power(z: torch.Tensor) -> torch.Tensor:
    """Scale each row of real pairs so its complex symbols average unit energy."""
    sym = z.shape[1] // 2
    power = (z**2).sum(dim=1, keepdim=True) / sym
    return z / torch.sqrt(power.clamp_min(1e-12))


class VQDeepSC(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.codec
        self.encoder = SemanticEncoder(c)
        self.decoder = SemanticDecoder(c)
        self.quantizer = VectorQuantizer(cfg.num_vectors, c.level_channels, cfg.transmit)
        if cfg.mode == "analog":
            self.compress = nn.ModuleList(nn.Conv2d(k, a, 1) for k, a in zip(c.level_channels, cfg.analog_channels))
            self.expand = nn.ModuleList(nn.Conv2d(a, k, 1) for k, a in zip(c.level_channels, cfg.analog_channels))

    # -- noiseless training path -------------------------------------------

    def forward(self, images: torch.Tensor):
        """Reconstruction with the link bypassed.

        Returns ``(recon, aux)`` where ``aux`` holds ``indices`` and
        per-level ``vq_losses`` (None for untransmitted levels).
        """
        pyramid = self.encoder(images)
        if self.cfg.mode == "analog":
            return self.decoder(self._analog(pyramid, None)), {"indices": None, "vq_losses": [None] * len(pyramid)}
        quantized, indices, losses = self.quantizer(pyramid)
        return self.decoder(quantized), {"indices": indices, "vq_losses": losses, "pyramid": pyramid}

    # -- digital transmitter / receiver -------------------------------------

    @torch.no_grad()
    def transmit_indices(self, images: torch.Tensor):
        pyramid = self.encoder(images)
        shapes = [(p.shape[0], p.shape[2], p.shape[3]) for p in pyramid]
        return self.quantizer.encode(pyramid), shapes

    @torch.no_grad()
    def reconstruct(self, indices, shapes) -> torch.Tensor:
        return self.decoder(self.quantizer.decode(indices, shapes))

    # -- analog ablation ----------------------------------------------------

    def analog_symbols(self, pyramid):
        """Flattened, power-normalised real pairs per image plus the layout."""
        parts, layout = [], []
        for l, (feat, tx) in enumerate(zip(pyramid, self.cfg.transmit)):
            if not tx:
                layout.append((l, None))
                continue
            z = self.compress[l](feat)
            layout.append((l, tuple(z.shape[1:])))
            parts.append(z.reshape(z.shape[0], -1))
        z = torch.cat(parts, dim=1)
        if z.shape[1] % 2:
            raise ValueError("analog payload must hold an even number of reals")
        return normalize_power(z), layout

    def analog_receive(self, z: torch.Tensor, layout, pyramid_like):
        out, pos = [], 0
        for (l, shape), ref in zip(layout, pyramid_like):
            if shape is None:
                out.append(torch.zeros_like(ref))
                continue
            n = int(np.prod(shape))
            part = z[:, pos : pos + n].reshape(z.shape[0], *shape)
            pos += n
            out.append(self.expand[l](part))
        return out

    def _analog(self, pyramid, channel_fn):
        z, layout = self.analog_symbols(pyramid)
        if channel_fn is not None:
            z = channel_fn(z)
        return self.analog_receive(z, layout, pyramid)

    def analog_forward(self, images: torch.Tensor, channel_fn=None) -> torch.Tensor:
        """Analog path; ``channel_fn`` maps (B, 2S) real pairs to received
        and equalised pairs."""
        return self.decoder(self._analog(self.encoder(images), channel_fn))
