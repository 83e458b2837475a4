"""U-Net style semantic encoder and decoder.

The encoder is a stem convolution followed by ``L`` down-sample blocks; the
output of every block is one level of the feature pyramid. The decoder
walks the pyramid top-down, up-sampling the running tensor and
concatenating it with the received level of matching scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

PRELU_INIT = 0.25


@dataclass
class CodecConfig:
    num_levels: int = 4
    base_channels: int = 16
    level_channels: list = field(default_factory=lambda: [8, 16, 32, 64])
    kernel_size: int = 3
    downsample_stride: int = 2
    in_channels: int = 3

    def __post_init__(self):
        self.level_channels = [int(c) for c in self.level_channels]
        if self.num_levels < 1:
            raise ValueError("num_levels must be at least 1")
        if len(self.level_channels) != self.num_levels:
            raise ValueError("level_channels needs one width per level")
        if any(c <= 0 for c in self.level_channels) or self.base_channels <= 0:
            raise ValueError("channel widths must be positive")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if self.downsample_stride != 2:
            raise ValueError("only stride-2 down-sampling is supported")

    def to_dict(self) -> dict:
        return asdict(self)

    def level_shape(self, height: int, width: int, level: int) -> tuple[int, int]:
        f = self.downsample_stride**level
        return height // f, width // f

    def check_image(self, height: int, width: int) -> None:
        f = self.downsample_stride**self.num_levels
        if height % f or width % f:
            raise ValueError(f"image {height}x{width} is not divisible by {f} = 2^L")


def _conv(cin, cout, k, stride=1):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)


class ResidualBlock(nn.Module):
    """x + conv(PReLU(BN(conv(x))))."""

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.channels = channels
        self.conv1 = _conv(channels, channels, kernel_size)
        self.norm = nn.BatchNorm2d(channels)
        self.act = nn.PReLU(channels, init=PRELU_INIT)
        self.conv2 = _conv(channels, channels, kernel_size)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ValueError(f"residual block expects {self.channels} channels, got {x.shape[1]}")
        return x + self.conv2(self.act(self.norm(self.conv1(x))))


class DownBlock(nn.Module):
    def __init__(self, cin: int, cout: int, kernel_size: int = 3, stride: int = 2):
        super().__init__()
        self.body = nn.Sequential(
            ResidualBlock(cin, kernel_size),
            _conv(cin, cout, kernel_size, stride=stride),
            ResidualBlock(cout, kernel_size),
            nn.BatchNorm2d(cout),
            nn.PReLU(cout, init=PRELU_INIT),
            _conv(cout, cout, kernel_size),
        )

    def forward(self, x):
        return self.body(x)


class UpBlock(nn.Module):
    def __init__(self, cin: int, cout: int, kernel_size: int = 3):
        super().__init__()
        self.res = ResidualBlock(cin, kernel_size)
        self.conv = _conv(cin, cout, kernel_size)
        self.norm = nn.BatchNorm2d(cout)
        self.act = nn.PReLU(cout, init=PRELU_INIT)

    def forward(self, x):
        x = F.interpolate(self.res(x), scale_factor=2, mode="nearest")
        return self.act(self.norm(self.conv(x)))


def init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, a=PRELU_INIT, nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class SemanticEncoder(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.cfg = cfg
        k = cfg.kernel_size
        self.stem = nn.Sequential(_conv(cfg.in_channels, cfg.base_channels, k), nn.PReLU(cfg.base_channels, init=PRELU_INIT))
        widths = [cfg.base_channels] + cfg.level_channels
        self.down = nn.ModuleList(
            DownBlock(widths[l], widths[l + 1], k, cfg.downsample_stride) for l in range(cfg.num_levels)
        )
        init_weights(self)

    def forward(self, image: torch.Tensor) -> list:
        if image.ndim != 4 or image.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected (B, {self.cfg.in_channels}, H, W) images, got {tuple(image.shape)}")
        self.cfg.check_image(image.shape[2], image.shape[3])
        x = self.stem(image)
        pyramid = []
        for block in self.down:
            x = block(x)
            pyramid.append(x)
        return pyramid


class SemanticDecoder(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        self.cfg = cfg
        k, L, K = cfg.kernel_size, cfg.num_levels, cfg.level_channels
        self.head = nn.Sequential(_conv(K[-1], K[-1], k), nn.PReLU(K[-1], init=PRELU_INIT))
        ups = []
        for l in range(L, 0, -1):
            # up block at level l feeds the skip of level l-1 (or the output)
            cin = K[-1] if l == L else 2 * K[l - 1]
            cout = K[l - 2] if l >= 2 else cfg.base_channels
            ups.append(UpBlock(cin, cout, k))
        self.up = nn.ModuleList(ups)
        self.out = nn.ConvTranspose2d(cfg.base_channels, cfg.in_channels, k, stride=1, padding=k // 2)
        init_weights(self)
        # start near mid-grey so the output clamp is inactive early on
        nn.init.normal_(self.out.weight, 0.0, 1e-3)
        nn.init.constant_(self.out.bias, 0.5)

    def forward(self, pyramid) -> torch.Tensor:
        L = self.cfg.num_levels
        if len(pyramid) != L:
            raise ValueError(f"expected {L} pyramid levels, got {len(pyramid)}")
        for l, (t, c) in enumerate(zip(pyramid, self.cfg.level_channels)):
            if t.shape[1] != c:
                raise ValueError(f"level {l + 1} has {t.shape[1]} channels, expected {c}")
        x = self.head(pyramid[-1])
        for i, block in enumerate(self.up):
            x = block(x)
            skip_level = L - 2 - i
            if skip_level >= 0:
                skip = pyramid[skip_level]
                if skip.shape[2:] != x.shape[2:]:
                    raise ValueError(
                        f"up-sampled tensor {tuple(x.shape[2:])} does not match level "
                        f"{skip_level + 1} of size {tuple(skip.shape[2:])}"
                    )
                x = torch.cat([x, skip], dim=1)
        return torch.clamp(self.out(x), 0.0, 1.0)


def encode(image: torch.Tensor, encoder: SemanticEncoder) -> list:
    return encoder(image)


def decode(pyramid, decoder: SemanticDecoder) -> torch.Tensor:
    return decoder(pyramid)


def residual_block(x: torch.Tensor, block: ResidualBlock) -> torch.Tensor:
    return block(x)
