"""Per-scale codebooks, nearest-neighbour quantization and the VQ losses."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

_CHUNK = 4096


class EmbeddingSpace(nn.Module):
    """Codebook of ``num_vectors`` rows of dimension ``dim`` shared by both
    ends of the link."""

    def __init__(self, num_vectors: int, dim: int, level: int = 0):
        super().__init__()
        if num_vectors < 1 or dim < 1:
            raise ValueError("embedding space needs at least one vector of positive dimension")
        self.level = level
        self.vectors = nn.Parameter(torch.empty(num_vectors, dim))
        nn.init.uniform_(self.vectors, -1.0 / num_vectors, 1.0 / num_vectors)

    @property
    def num_vectors(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def extra_repr(self) -> str:
        return f"level={self.level}, num_vectors={self.num_vectors}, dim={self.dim}"


def _as_codebook(space) -> torch.Tensor:
    if isinstance(space, EmbeddingSpace):
        return space.vectors
    return torch.as_tensor(space)


def quantize(features, space) -> torch.Tensor:
    """Index of the nearest codebook row for every feature row.

    Distances are the summed squared differences (no expansion trick), so
    exact ties stay exact and resolve to the lowest index.
    """
    E = _as_codebook(space).detach()
    f = torch.as_tensor(features).detach()
    if E.shape[0] == 0:
        raise ValueError("empty codebook")
    if f.ndim != 2 or f.shape[1] != E.shape[1]:
        raise ValueError(f"features of shape {tuple(f.shape)} do not match codebook dim {E.shape[1]}")
    f = f.to(E.dtype)
    out = torch.empty(f.shape[0], dtype=torch.long, device=f.device)
    for start in range(0, f.shape[0], _CHUNK):
        blk = f[start : start + _CHUNK]
        d = ((blk[:, None, :] - E[None, :, :]) ** 2).sum(-1)
        # argmin returns the first minimum
        out[start : start + _CHUNK] = torch.argmin(d, dim=1)
    return out


def dequantize(indices, space) -> torch.Tensor:
    E = _as_codebook(space)
    idx = torch.as_tensor(indices, dtype=torch.long)
    if idx.numel() and (idx.min() < 0 or idx.max() >= E.shape[0]):
        raise IndexError(f"index out of range for codebook of {E.shape[0]} vectors")
    return E[idx]


def vq_loss_terms(features: torch.Tensor, quantized: torch.Tensor):
    """(embedding_loss, commitment_loss), each a mean over positions of a
    squared l2 distance with the stop-gradient on the other argument."""
    if features.shape != quantized.shape:
        raise ValueError("features and quantized must share a shape")
    embedding = ((features.detach() - quantized) ** 2).sum(-1).mean()
    commitment = ((quantized.detach() - features) ** 2).sum(-1).mean()
    return embedding, commitment


def straight_through_bind(features: torch.Tensor, quantized: torch.Tensor) -> torch.Tensor:
    """Forward value of ``quantized``, identity Jacobian back to ``features``."""
    if features.shape != quantized.shape:
        raise ValueError("features and quantized must share a shape")
    return features + (quantized - features).detach()


def to_rows(t: torch.Tensor) -> torch.Tensor:
    """(B, K, h, w) feature map -> (B*h*w, K) rows, row-major per image."""
    return t.permute(0, 2, 3, 1).reshape(-1, t.shape[1])


def from_rows(rows: torch.Tensor, batch: int, height: int, width: int) -> torch.Tensor:
    return rows.reshape(batch, height, width, -1).permute(0, 3, 1, 2).contiguous()


def usage_entropy(indices, num_vectors: int) -> float:
    """Shannon entropy (bits) of the empirical index histogram."""
    counts = np.bincount(np.asarray(indices).ravel(), minlength=num_vectors).astype(float)
    if counts.sum() == 0:
        return 0.0
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


class VectorQuantizer(nn.Module):
    """One embedding space per pyramid level, with a transmit flag each.

    Untransmitted levels carry no indices; the receiver sees zeros there.
    """

    def __init__(self, num_vectors, dims, transmit=None):
        super().__init__()
        if len(num_vectors) != len(dims):
            raise ValueError("num_vectors and dims must have one entry per level")
        transmit = [True] * len(dims) if transmit is None else list(transmit)
        if len(transmit) != len(dims):
            raise ValueError("transmit mask must have one entry per level")
        self.transmit = [bool(t) for t in transmit]
        self.spaces = nn.ModuleList(
            EmbeddingSpace(n, k, level=l + 1) for l, (n, k) in enumerate(zip(num_vectors, dims))
        )

    def encode(self, pyramid) -> list:
        """Index streams (B, h*w) per level; None for untransmitted levels."""
        out = []
        for feat, space, tx in zip(pyramid, self.spaces, self.transmit):
            if not tx:
                out.append(None)
                continue
            if feat.shape[1] != space.dim:
                raise ValueError(f"level {space.level}: {feat.shape[1]} channels, codebook dim {space.dim}")
            idx = quantize(to_rows(feat), space)
            out.append(idx.reshape(feat.shape[0], -1))
        return out

    def decode(self, indices, shapes) -> list:
        """Rebuild the receiver's pyramid; ``shapes`` holds (B, h, w) per level."""
        out = []
        for idx, space, tx, (b, h, w) in zip(indices, self.spaces, self.transmit, shapes):
            if not tx or idx is None:
                out.append(space.vectors.new_zeros(b, space.dim, h, w))
                continue
            rows = dequantize(torch.as_tensor(idx).reshape(-1), space)
            out.append(from_rows(rows, b, h, w))
        return out

    def forward(self, pyramid):
        """Training path: straight-through quantized pyramid, indices and
        per-level (embedding, commitment) losses."""
        quantized, indices, losses = [], [], []
        for feat, space, tx in zip(pyramid, self.spaces, self.transmit):
            if not tx:
                quantized.append(torch.zeros_like(feat))
                indices.append(None)
                losses.append(None)
                continue
            rows = to_rows(feat)
            idx = quantize(rows, space)
            q = dequantize(idx, space)
            losses.append(vq_loss_terms(rows, q))
            st = straight_through_bind(rows, q)
            quantized.append(from_rows(st, *feat.shape[:1], *feat.shape[2:]))
            indices.append(idx.reshape(feat.shape[0], -1))
        return quantized, indices, losses
