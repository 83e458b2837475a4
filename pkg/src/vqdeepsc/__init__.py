"""Vector-quantized semantic image transmission.

A U-Net encoder turns an image into a four-level feature pyramid; every
level is vector quantized against its own embedding space and the indices
travel as bits over an LDPC-coded, QAM-modulated fading link. The receiver
looks the vectors back up and a mirrored decoder rebuilds the image.
"""

from .channel import ChannelSpec
from .codec import CodecConfig, SemanticDecoder, SemanticEncoder
from .config import ExperimentConfig, preset_model
from .evaluation import (
    CurvePoint,
    SweepSpec,
    analog_bypass_eval,
    compression_ratio,
    run_sweep,
)
from .link import AMCTable, load_code, make_mode, transmit
from .metrics import ms_ssim
from .model import ModelConfig, VQDeepSC
from .quantizer import VectorQuantizer, dequantize, quantize
from .training import PatchDiscriminator, TrainConfig, Trainer

__version__ = "0.1.0"

__all__ = [
    "AMCTable", "ChannelSpec", "CodecConfig", "CurvePoint", "ExperimentConfig", "ModelConfig",
    "PatchDiscriminator", "SemanticDecoder", "SemanticEncoder", "SweepSpec", "TrainConfig", "Trainer",
    "VQDeepSC", "VectorQuantizer", "analog_bypass_eval", "compression_ratio", "dequantize",
    "load_code", "make_mode", "ms_ssim", "preset_model", "quantize", "run_sweep", "transmit",
]
