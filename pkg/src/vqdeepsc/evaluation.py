"""SNR sweeps over the full digital pipeline, the analog ablation,
compression accounting and curve I/O / plotting.

An SNR of ``inf`` in a sweep grid is the noiseless link.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .channel import ChannelSpec, equalize, realize
from .link.amc import AMCTable
from .link.bitstream import bits_to_indices, indices_to_bits
from .link.chain import frame_layout, transmit
from .metrics import ms_ssim_batch
from .model import ModelConfig, VQDeepSC
from .seeding import derive_seed

CURVE_COLUMNS = ("snr_db", "ms_ssim_mean", "ms_ssim_std", "ier", "ber", "symbols_per_image")
BASELINE_COLUMNS = ("snr_db", "ms_ssim_mean")


class SweepSpecError(ValueError):
    pass


class ModeMismatchError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass
class SweepSpec:
    snr_db: list
    channel: ChannelSpec
    amc: AMCTable
    images: np.ndarray  # (N, 3, H, W) float32 in [0, 1]
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        self.snr_db = [float(s) for s in self.snr_db]
        if not self.snr_db:
            raise SweepSpecError("SNR grid is empty")
        if any(math.isnan(s) for s in self.snr_db):
            raise SweepSpecError("SNR grid contains NaN")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise SweepSpecError(f"SNR grid must be strictly increasing: {self.snr_db}")
        if self.trials < 1:
            raise SweepSpecError("trials must be at least 1")
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4 or len(self.images) == 0:
            raise SweepSpecError("images must be a non-empty (N, C, H, W) array")


@dataclass
class CurvePoint:
    snr_db: float
    ms_ssim_mean: float
    ms_ssim_std: float
    ier: float
    ber: float
    symbols_per_image: float
    scores: np.ndarray = field(default=None, repr=False, compare=False)


def compression_ratio(cfg: ModelConfig, height: int, width: int) -> float:
    """Source bits (8-bit RGB) over pre-coding information bits."""
    return height * width * 3 * 8 / cfg.info_bits(height, width)


def _summary(snr, scores, ier, ber, symbols) -> CurvePoint:
    scores = np.asarray(scores, dtype=float)
    return CurvePoint(float(snr), float(scores.mean()), float(scores.std()), float(ier), float(ber),
                      float(symbols), scores)


def _image_streams(indices, i):
    return [None if s is None else s[i].cpu().numpy() for s in indices]


def _sent(model: VQDeepSC):
    return [l for l, t in enumerate(model.cfg.transmit) if t]


@torch.no_grad()
def reference_scores(model: VQDeepSC, images: np.ndarray) -> np.ndarray:
    """Per-image MS-SSIM of the noiseless reconstruction."""
    model.eval()
    X = torch.from_numpy(np.asarray(images, dtype=np.float32))
    if model.cfg.mode == "analog":
        recon = model.analog_forward(X)
    else:
        idx, shapes = model.transmit_indices(X)
        recon = model.reconstruct(idx, shapes)
    return ms_ssim_batch(X, recon).numpy()


@torch.no_grad()
def run_sweep(model: VQDeepSC, spec: SweepSpec, progress=None) -> list:
    """Monte-Carlo sweep of the digital pipeline.

    Every image is its own frame. Trial ``t`` of image ``i`` at grid point
    ``s`` uses the channel seed derived from ``(seed, "channel", s, t, i)``.
    """
    if model.cfg.mode != "vq":
        raise ModeMismatchError("run_sweep needs a vector-quantized model; use analog_bypass_eval")
    spec.amc.check_coverage(spec.snr_db)
    model.eval()
    X = torch.from_numpy(spec.images)
    _, _, H, W = X.shape
    model.cfg.codec.check_image(H, W)
    indices, shapes = model.transmit_indices(X)
    sent = _sent(model)
    Ns = [model.cfg.num_vectors[l] for l in sent]
    streams = [[_image_streams(indices, i)[l] for l in sent] for i in range(len(X))]
    payloads = [indices_to_bits(s, Ns) for s in streams]
    img_shapes = [(1, h, w) for (_, h, w) in shapes]

    points = []
    for si, snr in enumerate(spec.snr_db):
        mode = spec.amc.select(snr)
        lay = frame_layout(len(payloads[0]), mode)
        scores, idx_err, idx_tot, bit_err, bit_tot = [], 0, 0, 0, 0
        for t in range(spec.trials):
            rx = [[None] * len(X) for _ in range(model.cfg.codec.num_levels)]
            for i, pay in enumerate(payloads):
                seed = derive_seed(spec.seed, "channel", si, t, i)
                bits, rep = transmit(pay.bits, mode, spec.channel, None if math.isinf(snr) else snr, seed)
                got, _ = bits_to_indices(bits, pay.counts, Ns)
                for l, g, ref in zip(sent, got, streams[i]):
                    rx[l][i] = torch.from_numpy(g)
                    idx_err += int((g != ref).sum())
                    idx_tot += g.size
                bit_err += rep.bit_errors
                bit_tot += len(pay)
            batch_idx = [None if l not in sent else torch.stack(rx[l]) for l in range(len(rx))]
            recon = model.reconstruct(batch_idx, [(len(X), h, w) for (_, h, w) in img_shapes])
            scores.extend(ms_ssim_batch(X, recon).tolist())
        pt = _summary(snr, scores, idx_err / max(idx_tot, 1), bit_err / max(bit_tot, 1), lay.num_symbols)
        points.append(pt)
        if progress is not None:
            progress(pt)
    return points


def frame_power(z: torch.Tensor) -> torch.Tensor:
    """Mean complex-symbol energy per frame of real pairs."""
    return (z**2).sum(dim=1) / (z.shape[1] // 2)


@torch.no_grad()
def analog_bypass_eval(model: VQDeepSC, spec: SweepSpec, progress=None) -> list:
    """Same protocol with quantizer and digital link replaced by direct,
    power-normalised transmission of compressed features."""
    if model.cfg.mode != "analog":
        raise ModeMismatchError("analog_bypass_eval needs a model built in analog mode")
    model.eval()
    X = torch.from_numpy(spec.images)
    pyramid = model.encoder(X)
    z, layout = model.analog_symbols(pyramid)
    x = torch.complex(z[:, 0::2], z[:, 1::2]).to(torch.complex128).numpy()
    points = []
    for si, snr in enumerate(spec.snr_db):
        scores = []
        for t in range(spec.trials):
            out = np.empty_like(x)
            for i in range(len(x)):
                seed = derive_seed(spec.seed, "channel", si, t, i)
                y, real = realize(spec.channel, x[i], None if math.isinf(snr) else snr, seed)
                out[i], _ = equalize(y, real.h)
            zr = torch.empty_like(z)
            zr[:, 0::2] = torch.from_numpy(out.real).to(z.dtype)
            zr[:, 1::2] = torch.from_numpy(out.imag).to(z.dtype)
            recon = model.decoder(model.analog_receive(zr, layout, pyramid))
            scores.extend(ms_ssim_batch(X, recon).tolist())
        # no digital indices or bits in this mode
        pt = _summary(snr, scores, float("nan"), float("nan"), x.shape[1])
        points.append(pt)
        if progress is not None:
            progress(pt)
    return points


# -- curve files ---------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_curve_csv(points, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in points:
            w.writerow([_fmt(getattr(p, c)) for c in CURVE_COLUMNS])


def read_curve_csv(path, columns=CURVE_COLUMNS) -> dict:
    """Read a curve or baseline CSV as ``{column: float array}``.

    The header must contain every name in ``columns``; extra columns are an
    error for full curve files and allowed for baselines.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (have {header})")
    if columns == CURVE_COLUMNS and tuple(header) != CURVE_COLUMNS:
        raise SchemaError(f"{path}: columns {header} differ from {list(CURVE_COLUMNS)}")
    out = {h: [] for h in header}
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise SchemaError(f"{path}:{n}: expected {len(header)} fields, got {len(r)}")
        for h, v in zip(header, r):
            try:
                out[h].append(float(v))
            except ValueError as exc:
                raise SchemaError(f"{path}:{n}: column {h!r} is not numeric ({v!r})") from exc
    if not out["snr_db"]:
        raise SchemaError(f"{path}: no data rows")
    return {k: np.asarray(v) for k, v in out.items()}


def plot_curves(curves, baselines, out_dir) -> dict:
    """One MS-SSIM vs SNR figure per channel kind.

    ``curves`` and ``baselines`` are lists of ``(label, channel_kind, data)``
    with ``data`` from :func:`read_curve_csv`. Returns
    ``{kind: (png_path, legend_labels)}``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kinds = sorted({k for _, k, _ in curves} | {k for _, k, _ in baselines})
    result = {}
    for kind in kinds:
        fig, ax = plt.subplots(figsize=(5, 3.6))
        for label, k, d in curves:
            if k != kind:
                continue
            finite = np.isfinite(d["snr_db"])
            ax.errorbar(d["snr_db"][finite], d["ms_ssim_mean"][finite],
                        yerr=d["ms_ssim_std"][finite] if "ms_ssim_std" in d else None,
                        marker="o", capsize=2, label=label)
        for label, k, d in baselines:
            if k != kind:
                continue
            ax.plot(d["snr_db"], d["ms_ssim_mean"], linestyle="--", marker="s", label=label)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("MS-SSIM")
        ax.set_title(f"{kind} channel")
        ax.grid(alpha=0.3)
        leg = ax.legend(loc="lower right", fontsize=8)
        labels = [t.get_text() for t in leg.get_texts()]
        path = out_dir / f"ms_ssim_{kind}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        result[kind] = (path, labels)
    return result
