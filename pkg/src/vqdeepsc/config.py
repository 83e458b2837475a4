"""Experiment configuration (TOML), presets and seed derivation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli
import tomli_w

from .channel import ChannelSpec
from .codec import CodecConfig
from .link.amc import AMCTable
from .link.ldpc import SHIPPED_CODES
from .model import ModelConfig
from .seeding import derive_seed  # noqa: F401
from .training import DiscriminatorConfig, TrainConfig

PUBLISHED_WIDTHS = [128, 256, 512, 1024]

PRESETS = {
    "vq-deepsc1": {"num_vectors": [1, 8, 4, 2], "transmit": [False, True, True, True]},
    "vq-deepsc2": {"num_vectors": [1, 64, 16, 4], "transmit": [False, True, True, True]},
    "vq-deepsc3": {"num_vectors": [2, 64, 4, 4], "transmit": [True, True, True, True]},
    "vq-deepsc4": {"num_vectors": [8, 4, 2, 2], "transmit": [True, True, True, True]},
}

DEFAULT_AMC = {
    "max_bp_iterations": 50,
    "modes": {"r12-bpsk-n648": {"code": "ldpc_n648_r12", "constellation": "BPSK"}},
    "table": [{"mode": "r12-bpsk-n648"}],
}


class ConfigError(ValueError):
    pass


def preset_model(name: str, width_scale: float = 1.0, base_channels: int | None = None) -> ModelConfig:
    """Model for one of the four published codebook configurations, with
    codebook dimensions optionally scaled down for desk-scale runs."""
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    widths = [max(1, int(round(k * width_scale))) for k in PUBLISHED_WIDTHS]
    base = base_channels if base_channels is not None else max(1, widths[0] // 2)
    p = PRESETS[key]
    return ModelConfig(CodecConfig(4, base, widths), list(p["num_vectors"]), list(p["transmit"]))


@dataclass
class SweepConfig:
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    trials: int = 20
    num_images: int = 8
    image_size: int = 64

    def __post_init__(self):
        self.snr_db = [float(s) for s in self.snr_db]
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")


@dataclass
class Paths:
    dataset: str = ""
    checkpoints: str = "checkpoints"
    output: str = "out"


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    amc: dict = field(default_factory=lambda: dict(DEFAULT_AMC))
    sweep: SweepConfig = field(default_factory=SweepConfig)
    paths: Paths = field(default_factory=Paths)
    seed: int = 0
    steps: int = 200
    image_size: int = 64
    checkpoint_every: int = 50
    val_fraction: float = 0.125

    def validate(self) -> None:
        c = self.model.codec
        if self.image_size % (2**c.num_levels):
            raise ConfigError(f"image_size {self.image_size} is not divisible by 2^{c.num_levels}")
        if len(self.model.num_vectors) != c.num_levels:
            raise ConfigError("one codebook size per level is required")
        if self.steps < 1 or self.checkpoint_every < 1:
            raise ConfigError("steps and checkpoint_every must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        try:
            table = self.amc_table()
        except (KeyError, ValueError, FileNotFoundError) as exc:
            raise ConfigError(f"invalid AMC table: {exc}") from exc
        del table

    def amc_table(self) -> AMCTable:
        for spec in self.amc.get("modes", {}).values():
            code = spec.get("code", "")
            if code not in SHIPPED_CODES and code != "ira_n64800_r12" and not Path(code).is_file():
                raise FileNotFoundError(f"LDPC code {code!r} is neither shipped nor an existing alist file")
        return AMCTable.from_dict(self.amc)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "steps": self.steps,
            "image_size": self.image_size,
            "checkpoint_every": self.checkpoint_every,
            "val_fraction": self.val_fraction,
            "model": {
                "mode": self.model.mode,
                "num_vectors": list(self.model.num_vectors),
                "transmit": list(self.model.transmit),
                "embedding_dims": list(self.model.codec.level_channels),
                "analog_channels": list(self.model.analog_channels),
            },
            "codec": asdict(self.model.codec),
            "train": self.train.to_dict(),
            "discriminator": asdict(self.discriminator),
            "channel": asdict(self.channel),
            "amc": self.amc,
            "sweep": asdict(self.sweep),
            "paths": asdict(self.paths),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = _reject_nan(d)
        known = {"seed", "steps", "image_size", "checkpoint_every", "val_fraction", "model", "codec",
                 "train", "discriminator", "channel", "amc", "sweep", "paths"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections/keys: {sorted(unknown)}")
        try:
            mdict = dict(d.get("model", {}))
            preset = mdict.pop("preset", None)
            scale = float(mdict.pop("width_scale", 1.0))
            dims = mdict.pop("embedding_dims", None)
            if preset is not None:
                base = preset_model(preset, scale, d.get("codec", {}).get("base_channels"))
                codec = {**asdict(base.codec), **d.get("codec", {})}
                mdict = {"num_vectors": base.num_vectors, "transmit": base.transmit, **mdict}
            else:
                codec = d.get("codec", {})
            model = ModelConfig(codec=CodecConfig(**codec), **mdict)
            if dims is not None and [int(k) for k in dims] != model.codec.level_channels:
                raise ConfigError(
                    f"embedding_dims {list(dims)} disagree with codec level_channels {model.codec.level_channels}"
                )
            return cls(
                model=model,
                train=_build(TrainConfig, d.get("train", {})),
                discriminator=_build(DiscriminatorConfig, d.get("discriminator", {})),
                channel=_build(ChannelSpec, d.get("channel", {})),
                amc=d.get("amc", dict(DEFAULT_AMC)),
                sweep=_build(SweepConfig, d.get("sweep", {})),
                paths=_build(Paths, d.get("paths", {})),
                seed=int(d.get("seed", 0)),
                steps=int(d.get("steps", 200)),
                image_size=int(d.get("image_size", 64)),
                checkpoint_every=int(d.get("checkpoint_every", 50)),
                val_fraction=float(d.get("val_fraction", 0.125)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path) -> None:
        Path(path).write_text(tomli_w.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, validate: bool = True) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        try:
            raw = tomli.loads(p.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        cfg = cls.from_dict(raw)
        # relative paths resolve against the config file's directory
        for f in fields(cfg.paths):
            v = getattr(cfg.paths, f.name)
            if v and not Path(v).is_absolute():
                setattr(cfg.paths, f.name, str((p.parent / v).resolve()))
        if validate:
            cfg.validate()
        return cfg


def preset_path(name: str) -> Path:
    p = Path(__file__).parent / "presets" / f"{name.lower()}.toml"
    if not p.is_file():
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return p


def _build(cls, d: dict):
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    return cls(**d)


def _reject_nan(obj):
    if isinstance(obj, dict):
        return {k: _reject_nan(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_reject_nan(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        raise ConfigError("NaN is not a valid configuration value")
    return obj
