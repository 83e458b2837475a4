"""``vqdeepsc`` command line: train | sweep | roundtrip | plot.

Exit codes: 0 ok, 2 invalid config or usage, 3 unreadable dataset or image,
4 non-finite loss (state dumped), 5 checkpoint/config shape mismatch or AMC
gap, 6 curve CSV schema violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .channel import ChannelSpec
from .config import DEFAULT_AMC, ConfigError, ExperimentConfig
from .data import center_crop, load_directory, load_image, save_image, to_batch
from .evaluation import (
    ModeMismatchError,
    SchemaError,
    SweepSpec,
    SweepSpecError,
    BASELINE_COLUMNS,
    CURVE_COLUMNS,
    analog_bypass_eval,
    compression_ratio,
    plot_curves,
    read_curve_csv,
    reference_scores,
    run_sweep,
    write_curve_csv,
)
from .link.amc import AMCGapError, AMCTable
from .link.bitstream import bits_per_index, bits_to_indices, indices_to_bits
from .link.chain import transmit
from .metrics import ms_ssim_batch
from .model import VQDeepSC
from .seeding import derive_seed
from .training import NonFiniteLossError, PatchDiscriminator, Trainer, train

log = logging.getLogger("vqdeepsc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONFINITE, EXIT_MISMATCH, EXIT_SCHEMA = 0, 2, 3, 4, 5, 6


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load_config(args) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, ValueError) as exc:
        raise CommandError(EXIT_CONFIG, f"invalid config: {exc}") from exc
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _load_dataset(path, size: int, limit: int | None = None) -> np.ndarray:
    try:
        images = load_directory(path, size=size)
    except (OSError, ValueError) as exc:
        raise CommandError(EXIT_DATA, f"cannot read dataset: {exc}") from exc
    if limit is not None:
        images = images[:limit]
    return to_batch(images)


def _load_checkpoint(path, expect=None):
    if path is None:
        raise CommandError(EXIT_CONFIG, "--checkpoint is required")
    try:
        return ckpt.load_model(path, expect)
    except ckpt.CheckpointMismatchError as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(EXIT_DATA, f"cannot read checkpoint {path}: {exc}") from exc


# -- train --------------------------------------------------------------------


def _validation_score(model: VQDeepSC, images: np.ndarray) -> float:
    return float(reference_scores(model, images).mean())


def cmd_train(args) -> int:
    cfg = _load_config(args)
    data = _load_dataset(cfg.paths.dataset, cfg.image_size)
    n_val = int(math.ceil(cfg.val_fraction * len(data))) if cfg.val_fraction > 0 else 0
    train_imgs = data[: len(data) - n_val] if n_val else data
    val_imgs = data[len(data) - n_val :] if n_val else data
    if len(train_imgs) < cfg.train.batch_size:
        raise CommandError(EXIT_DATA, f"{len(train_imgs)} training images cannot fill a batch of {cfg.train.batch_size}")

    out = Path(args.out or cfg.paths.checkpoints)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.toml")
    steps_per_epoch = len(train_imgs) // cfg.train.batch_size
    tcfg = dataclasses.replace(cfg.train, seed=derive_seed(cfg.seed, "train-channel"))

    best = -1.0
    if args.checkpoint:
        model, meta = _load_checkpoint(args.checkpoint, cfg.model)
        trainer = ckpt.load_trainer(args.checkpoint, model, tcfg)
        best = float(meta.get("extra", {}).get("best_val_ms_ssim", -1.0))
        log.info("resuming from step %d", trainer.step_count)
    else:
        torch.manual_seed(derive_seed(cfg.seed, "init"))
        model = VQDeepSC(cfg.model)
        trainer = Trainer(model, tcfg, PatchDiscriminator(cfg.discriminator), steps_per_epoch)
    data_seed = derive_seed(cfg.seed, "train")
    state = {"best": best}

    def save(name, extra=None):
        ckpt.save_checkpoint(out / name, model, trainer, cfg.seed,
                             {"best_val_ms_ssim": state["best"], **(extra or {})})

    def on_step(tr, m):
        if tr.step_count % cfg.checkpoint_every and tr.step_count != cfg.steps:
            return
        score = _validation_score(model, val_imgs)
        log.info("step %d  gen %.4f  val MS-SSIM %.4f", tr.step_count, m["gen_total"], score)
        if score > state["best"]:
            state["best"] = score
            save("best.safetensors", {"val_ms_ssim": score})
        save(f"step_{tr.step_count:06d}.safetensors", {"val_ms_ssim": score})
        with open(out / "validation.csv", "a") as fh:
            fh.write(f"{tr.step_count},{score!r}\n")

    try:
        train(trainer, train_imgs, cfg.steps, data_seed, out / "train_log.csv", on_step)
    except NonFiniteLossError as exc:
        dump = {"step": trainer.step_count, "metrics": {k: repr(v) for k, v in exc.metrics.items()},
                "seed": cfg.seed}
        (out / "nonfinite_dump.json").write_text(json.dumps(dump, indent=2))
        save("nonfinite_state.safetensors")
        raise CommandError(EXIT_NONFINITE, f"non-finite loss at step {trainer.step_count}; state dumped to {out}")
    (out / "summary.json").write_text(json.dumps(
        {"steps": trainer.step_count, "best_val_ms_ssim": state["best"], "seed": cfg.seed,
         "data_seed": data_seed, "init_seed": derive_seed(cfg.seed, "init")}, indent=2))
    print(f"trained {trainer.step_count} steps; best validation MS-SSIM {state['best']:.4f}; checkpoints in {out}")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def _parse_grid(text: str) -> list:
    if not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CommandError(EXIT_CONFIG, f"bad SNR grid {text!r}") from exc


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    grid = _parse_grid(args.snr_grid) if args.snr_grid is not None else cfg.sweep.snr_db
    if not grid:
        raise CommandError(EXIT_CONFIG, "SNR grid is empty")
    model, _ = _load_checkpoint(args.checkpoint, cfg.model)
    images = _load_dataset(cfg.paths.dataset, cfg.sweep.image_size, cfg.sweep.num_images)
    try:
        model.cfg.codec.check_image(*images.shape[2:])
        spec = SweepSpec(grid, cfg.channel, cfg.amc_table(), images, cfg.sweep.trials, cfg.seed)
        fn = analog_bypass_eval if model.cfg.mode == "analog" else run_sweep
        points = fn(model, spec, progress=lambda p: log.info(
            "%s dB  MS-SSIM %.4f +- %.4f  IER %.3g", p.snr_db, p.ms_ssim_mean, p.ms_ssim_std, p.ier))
    except SweepSpecError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc
    except AMCGapError as exc:
        raise CommandError(EXIT_MISMATCH, f"AMC table has no mode for SNR(s): {exc.snrs}") from exc
    except (ModeMismatchError, ValueError) as exc:
        raise CommandError(EXIT_MISMATCH, str(exc)) from exc
    out = Path(args.out or Path(cfg.paths.output) / "curve.csv")
    write_curve_csv(points, out)
    meta = {"channel": cfg.channel.kind, "rician_r": cfg.channel.rician_r, "seed": cfg.seed,
            "trials": spec.trials, "model_mode": model.cfg.mode, "checkpoint": str(args.checkpoint),
            "label": args.label or out.stem}
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {out}")
    return EXIT_OK


# -- roundtrip ----------------------------------------------------------------


def cmd_roundtrip(args) -> int:
    if args.image is None:
        raise CommandError(EXIT_CONFIG, "--image is required")
    if args.config:
        cfg = _load_config(args)
        amc, spec_ch, seed = cfg.amc_table(), cfg.channel, cfg.seed
    else:
        amc, spec_ch, seed = AMCTable.from_dict(DEFAULT_AMC), ChannelSpec(), 0
    if args.channel:
        spec_ch = ChannelSpec(args.channel, args.rician_r)
    if args.seed is not None:
        seed = args.seed
    model, _ = _load_checkpoint(args.checkpoint)
    if model.cfg.mode != "vq":
        raise CommandError(EXIT_MISMATCH, "roundtrip runs the digital link and needs a vector-quantized checkpoint")
    try:
        img = center_crop(load_image(args.image), 2**model.cfg.codec.num_levels)
    except (OSError, ValueError) as exc:
        raise CommandError(EXIT_DATA, f"cannot read image: {exc}") from exc
    snr = args.snr
    try:
        mode = amc.select(math.inf if snr is None else snr)
    except AMCGapError as exc:
        raise CommandError(EXIT_MISMATCH, f"AMC table has no mode for SNR(s): {exc.snrs}") from exc

    X = torch.from_numpy(to_batch([img]))
    H, W = X.shape[2:]
    indices, shapes = model.transmit_indices(X)
    sent = [l for l, t in enumerate(model.cfg.transmit) if t]
    Ns = [model.cfg.num_vectors[l] for l in sent]
    streams = [indices[l][0].numpy() for l in sent]
    payload = indices_to_bits(streams, Ns)
    ch_seed = derive_seed(seed, "channel", 0, 0, 0)
    bits, rep = transmit(payload.bits, mode, spec_ch, snr, ch_seed)
    got, clamped = bits_to_indices(bits, payload.counts, Ns)
    rx = [None] * len(indices)
    levels = []
    for l in range(model.cfg.codec.num_levels):
        N = model.cfg.num_vectors[l]
        entry = {"level": l + 1, "transmitted": model.cfg.transmit[l], "num_vectors": N,
                 "bits_per_index": bits_per_index(N), "indices": 0, "info_bits": 0, "index_errors": 0}
        if l in sent:
            j = sent.index(l)
            rx[l] = torch.from_numpy(got[j])[None]
            entry.update(indices=int(streams[j].size), info_bits=int(streams[j].size * bits_per_index(N)),
                         index_errors=int((got[j] != streams[j]).sum()))
        levels.append(entry)
    recon = model.reconstruct(rx, shapes)
    clean = model.reconstruct(indices, shapes)
    out = Path(args.out or "roundtrip")
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "reconstruction.png", recon[0].numpy().transpose(1, 2, 0))
    n_idx = sum(e["indices"] for e in levels)
    report = {
        "image": str(args.image), "height": int(H), "width": int(W),
        "snr_db": snr, "channel": spec_ch.kind, "rician_r": spec_ch.rician_r,
        "seed": seed, "channel_seed": ch_seed, "amc_mode": mode.label,
        "code": mode.code.name, "constellation": mode.constellation.name,
        "levels": levels,
        "info_bits": len(payload), "compression_ratio": compression_ratio(model.cfg, H, W),
        "coded_bits": rep.layout.coded_bits, "symbols": rep.layout.num_symbols,
        "ldpc_blocks": rep.layout.num_blocks, "blocks_unconverged": rep.blocks_unconverged,
        "bit_errors": rep.bit_errors, "ber": rep.ber,
        "index_errors": sum(e["index_errors"] for e in levels),
        "ier": sum(e["index_errors"] for e in levels) / max(n_idx, 1),
        "clamped_indices": clamped,
        "ms_ssim": float(ms_ssim_batch(X, recon)[0]),
        "noiseless_ms_ssim": float(ms_ssim_batch(X, clean)[0]),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps({k: report[k] for k in ("info_bits", "symbols", "ber", "ms_ssim")}))
    return EXIT_OK


# -- plot ---------------------------------------------------------------------


def _curve_arg(text: str, columns):
    """``[label=]path[@channel]``; the channel falls back to the sweep's
    JSON sidecar and then to ``unspecified``."""
    label, _, rest = text.rpartition("=") if "=" in text else ("", "", text)
    path, _, kind = rest.partition("@")
    p = Path(path)
    side = p.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.is_file() else {}
    kind = kind or meta.get("channel", "unspecified")
    label = label or meta.get("label") or p.stem
    return label, kind, read_curve_csv(p, columns)


def cmd_plot(args) -> int:
    if not args.curves and not args.baseline:
        raise CommandError(EXIT_CONFIG, "nothing to plot")
    try:
        curves = [_curve_arg(c, CURVE_COLUMNS) for c in args.curves]
        bases = [_curve_arg(b, BASELINE_COLUMNS) for b in args.baseline or []]
    except SchemaError as exc:
        raise CommandError(EXIT_SCHEMA, f"schema violation: {exc}") from exc
    figs = plot_curves(curves, bases, args.out or "figures")
    for kind, (path, labels) in figs.items():
        print(f"{kind}: {path} ({len(labels)} curves)")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vqdeepsc", description="Vector-quantized semantic image transmission.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment TOML file")
        sp.add_argument("--checkpoint", help="checkpoint archive (.safetensors)")
        sp.add_argument("--seed", type=int, help="override the top-level seed")
        sp.add_argument("--out", help="output directory or file")

    t = sub.add_parser("train", help="train a model; --checkpoint resumes")
    common(t)
    s = sub.add_parser("sweep", help="Monte-Carlo SNR sweep to a curve CSV")
    common(s)
    s.add_argument("--snr-grid", help="comma-separated dB values overriding the config grid")
    s.add_argument("--label", help="legend label stored next to the CSV")
    r = sub.add_parser("roundtrip", help="send one image through the full link")
    common(r, config_required=False)
    r.add_argument("--image")
    r.add_argument("--snr", type=float, help="Es/N0 in dB; omit for a noiseless link")
    r.add_argument("--channel", choices=["awgn", "rayleigh", "rician"])
    r.add_argument("--rician-r", type=float, default=1.0)
    pl = sub.add_parser("plot", help="render MS-SSIM vs SNR figures from curve CSVs")
    pl.add_argument("curves", nargs="*", help="[label=]curve.csv[@channel]")
    pl.add_argument("--baseline", action="append", help="[label=]baseline.csv[@channel]")
    pl.add_argument("--out")
    return p


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "roundtrip": cmd_roundtrip, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
