"""Digital link: index serialization, LDPC coding, modulation, AMC."""

from .amc import AMCGapError, AMCMode, AMCTable, make_mode
from .bitstream import Bitstream, bits_per_index, bits_to_indices, indices_to_bits
from .chain import FrameLayout, LinkReport, decode_frame, encode_frame, frame_layout, transmit
from .ldpc import LDPCCode, load_code, read_alist, write_alist
from .modulation import Constellation, demodulate_soft, get_constellation, hard_decision, modulate

__all__ = [
    "AMCGapError", "AMCMode", "AMCTable", "make_mode",
    "Bitstream", "bits_per_index", "bits_to_indices", "indices_to_bits",
    "FrameLayout", "LinkReport", "decode_frame", "encode_frame", "frame_layout", "transmit",
    "LDPCCode", "load_code", "read_alist", "write_alist",
    "Constellation", "demodulate_soft", "get_constellation", "hard_decision", "modulate",
]
