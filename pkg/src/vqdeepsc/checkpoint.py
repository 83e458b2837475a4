"""Checkpoints in the named-array archive format.

Array names:
  ``model.<param>``          every model parameter and buffer
  ``embedding_space_<l>``    level-``l`` codebook (N_l x K_l), duplicated for
                             tools that only want the codebooks
  ``disc.<param>``           discriminator state (optional)
  ``opt_g.<i>.<key>`` / ``opt_d.<i>.<key>``   Adam moments (optional)

Everything else (configs, step counters, seed, RNG state, scheduler state)
lives in the JSON metadata.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
import torch

from .archive import load_archive, save_archive
from .codec import CodecConfig
from .model import ModelConfig, VQDeepSC
from .training import DiscriminatorConfig, PatchDiscriminator, TrainConfig, Trainer

FORMAT = "vqdeepsc-checkpoint/1"


class CheckpointMismatchError(ValueError):
    pass


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().contiguous().numpy()


def _optimizer_arrays(prefix: str, opt: torch.optim.Optimizer):
    arrays, scalars = {}, {}
    for i, st in opt.state_dict()["state"].items():
        for key, val in st.items():
            if torch.is_tensor(val) and val.ndim > 0:
                arrays[f"{prefix}.{i}.{key}"] = _np(val)
            else:
                scalars[f"{i}.{key}"] = float(val)
    groups = [{k: v for k, v in g.items() if k != "params"} for g in opt.state_dict()["param_groups"]]
    for g in groups:
        if "betas" in g:
            g["betas"] = list(g["betas"])
    return arrays, {"scalars": scalars, "groups": groups}


def _restore_optimizer(prefix: str, opt, arrays: dict, meta: dict) -> None:
    sd = opt.state_dict()
    state = {}
    for name, arr in arrays.items():
        if not name.startswith(prefix + "."):
            continue
        _, i, key = name.split(".", 2)
        state.setdefault(int(i), {})[key] = torch.from_numpy(arr.copy())
    for name, val in meta["scalars"].items():
        i, key = name.split(".", 1)
        state.setdefault(int(i), {})[key] = torch.tensor(val)
    groups = []
    for g, saved in zip(sd["param_groups"], meta["groups"]):
        g = dict(g)
        g.update({k: (tuple(v) if k == "betas" else v) for k, v in saved.items()})
        groups.append(g)
    opt.load_state_dict({"state": state, "param_groups": groups})


def save_checkpoint(path, model: VQDeepSC, trainer: Trainer | None = None, seed: int = 0,
                    extra: dict | None = None) -> None:
    arrays = {f"model.{k}": _np(v) for k, v in model.state_dict().items()}
    for l, space in enumerate(model.quantizer.spaces):
        arrays[f"embedding_space_{l + 1}"] = _np(space.vectors)
    meta = {
        "format": FORMAT,
        "model_config": model.cfg.to_dict(),
        "seed": int(seed),
        "extra": extra or {},
    }
    if trainer is not None:
        arrays.update({f"disc.{k}": _np(v) for k, v in trainer.disc.state_dict().items()})
        ga, gm = _optimizer_arrays("opt_g", trainer.opt_g)
        da, dm = _optimizer_arrays("opt_d", trainer.opt_d)
        arrays.update(ga)
        arrays.update(da)
        meta["trainer"] = {
            "train_config": trainer.cfg.to_dict(),
            "disc_config": asdict(trainer.disc.cfg),
            "step": trainer.step_count,
            "epoch": trainer.epoch,
            "steps_per_epoch": trainer.steps_per_epoch,
            "opt_g": gm,
            "opt_d": dm,
            "sched_g": trainer.sched_g.state_dict(),
            "sched_d": {k: v for k, v in trainer.sched_d.state_dict().items() if k != "lr_lambdas"},
            # torch generator state as a uint8 array
        }
        arrays["rng.noise_gen"] = _np(trainer.noise_gen.get_state())
    save_archive(path, arrays, meta)


def model_config_from_meta(meta: dict) -> ModelConfig:
    d = dict(meta["model_config"])
    d["codec"] = CodecConfig(**d["codec"])
    return ModelConfig(**d)


def load_model(path, expect: ModelConfig | None = None) -> tuple[VQDeepSC, dict]:
    """Rebuild the model stored in a checkpoint.

    With ``expect`` the stored configuration must match it exactly;
    otherwise :class:`CheckpointMismatchError` names the differing fields.
    """
    arrays, meta = load_archive(path)
    if meta.get("format") != FORMAT:
        raise CheckpointMismatchError(f"{path} is not a model checkpoint")
    cfg = model_config_from_meta(meta)
    if expect is not None and expect.to_dict() != cfg.to_dict():
        a, b = expect.to_dict(), cfg.to_dict()
        diff = sorted(k for k in a if a[k] != b.get(k))
        raise CheckpointMismatchError(f"checkpoint does not match the configured model (differs in {diff})")
    model = VQDeepSC(cfg)
    state = {k[len("model."):]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith("model.")}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointMismatchError(str(exc)) from exc
    model.eval()
    return model, meta


def load_trainer(path, model: VQDeepSC, cfg: TrainConfig | None = None) -> Trainer:
    """Recreate a trainer (discriminator, optimisers, schedules, counters)
    so training resumes exactly where the checkpoint left off."""
    arrays, meta = load_archive(path)
    tm = meta.get("trainer")
    if tm is None:
        raise CheckpointMismatchError(f"{path} holds no trainer state")
    tcfg = cfg or TrainConfig(**tm["train_config"])
    disc = PatchDiscriminator(DiscriminatorConfig(**tm["disc_config"]))
    disc.load_state_dict({k[5:]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith("disc.")})
    trainer = Trainer(model, tcfg, disc, steps_per_epoch=tm["steps_per_epoch"])
    _restore_optimizer("opt_g", trainer.opt_g, arrays, tm["opt_g"])
    _restore_optimizer("opt_d", trainer.opt_d, arrays, tm["opt_d"])
    trainer.sched_g.load_state_dict(tm["sched_g"])
    sd = trainer.sched_d.state_dict()
    sd.update(tm["sched_d"])
    trainer.sched_d.load_state_dict(sd)
    trainer.step_count = tm["step"]
    trainer.epoch = tm["epoch"]
    trainer.noise_gen.set_state(torch.from_numpy(arrays["rng.noise_gen"].copy()))
    return trainer


def load_codebooks(path) -> list:
    arrays, _ = load_archive(path)
    out, l = [], 1
    while f"embedding_space_{l}" in arrays:
        out.append(arrays[f"embedding_space_{l}"])
        l += 1
    return out
