"""Multi-scale structural similarity (MS-SSIM).

Standard five-scale form: 11x11 Gaussian window with sigma 1.5 applied
without padding, constants K1=0.01 and K2=0.03, 2x2 average pooling
between scales and the weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333).
Scores are computed per colour channel and then averaged.

Small images use fewer scales: scale ``s`` is kept only while the image
side at that scale is still at least one window wide (11 px), and the
retained weights are renormalised to sum to one. Five scales therefore
need a shorter side of at least 176 px; a 64x64 crop uses three.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WIN_SIZE = 11
WIN_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def num_scales(min_side: int, win_size: int = WIN_SIZE) -> int:
    s = 0
    while s < len(MS_SSIM_WEIGHTS) and (min_side >> s) >= win_size:
        s += 1
    if s == 0:
        raise ValueError(f"images smaller than the {win_size}px window")
    return s


def _gauss_1d(size: int, sigma: float, dtype) -> torch.Tensor:
    x = torch.arange(size, dtype=dtype) - size // 2
    g = torch.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter(x: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    wh = g.view(1, 1, 1, -1).repeat(c, 1, 1, 1)
    wv = g.view(1, 1, -1, 1).repeat(c, 1, 1, 1)
    return F.conv2d(F.conv2d(x, wh, groups=c), wv, groups=c)


def _ssim_cs(X, Y, g, data_range):
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2
    mu1, mu2 = _filter(X, g), _filter(Y, g)
    s11 = _filter(X * X, g) - mu1 * mu1
    s22 = _filter(Y * Y, g) - mu2 * mu2
    s12 = _filter(X * Y, g) - mu1 * mu2
    cs_map = (2 * s12 + C2) / (s11 + s22 + C2)
    ssim_map = ((2 * mu1 * mu2 + C1) / (mu1 * mu1 + mu2 * mu2 + C1)) * cs_map
    return ssim_map.flatten(2).mean(-1), cs_map.flatten(2).mean(-1)


def ms_ssim_batch(X: torch.Tensor, Y: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """MS-SSIM of (B, C, H, W) batches; returns one score per image."""
    if X.shape != Y.shape:
        raise ValueError(f"image shapes differ: {tuple(X.shape)} vs {tuple(Y.shape)}")
    if X.ndim != 4:
        raise ValueError("expected (B, C, H, W) tensors")
    X = X.to(torch.float64)
    Y = Y.to(torch.float64)
    S = num_scales(min(X.shape[-2:]))
    w = torch.tensor(MS_SSIM_WEIGHTS[:S], dtype=torch.float64)
    w = w / w.sum()
    g = _gauss_1d(WIN_SIZE, WIN_SIGMA, torch.float64)
    factors = []
    for s in range(S):
        ssim_c, cs_c = _ssim_cs(X, Y, g, data_range)
        if s < S - 1:
            factors.append(torch.relu(cs_c))
            X = F.avg_pool2d(X, 2)
            Y = F.avg_pool2d(Y, 2)
    factors.append(torch.relu(ssim_c))
    stacked = torch.stack(factors, dim=0)  # (S, B, C)
    per_channel = torch.prod(stacked ** w.view(-1, 1, 1), dim=0)
    return per_channel.mean(dim=1)


def _to_batch(img) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img
        if t.ndim == 3:
            t = t.unsqueeze(0)
        return t
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim == 3:
        # (H, W, C) image
        return torch.from_numpy(np.ascontiguousarray(a.transpose(2, 0, 1)))[None]
    if a.ndim == 4:
        return torch.from_numpy(np.ascontiguousarray(a.transpose(0, 3, 1, 2)))
    raise ValueError(f"cannot interpret array of shape {a.shape} as an image")


def ms_ssim(a, b, data_range: float = 1.0) -> float:
    """MS-SSIM between two images.

    Accepts (H, W, C) arrays or (C, H, W) / (1, C, H, W) tensors with values
    in ``[0, data_range]``. A batch input returns the mean score.
    """
    return float(ms_ssim_batch(_to_batch(a), _to_batch(b), data_range).mean())
