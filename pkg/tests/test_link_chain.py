import math

import numpy as np
import pytest

from vqdeepsc.channel import ChannelSpec
from vqdeepsc.link import AMCGapError, AMCTable, frame_layout, make_mode, transmit
from vqdeepsc.link.chain import encode_frame


@pytest.fixture(scope="module")
def modes():
    return {
        "a": make_mode("a", "ldpc_n20_r12", "BPSK"),
        "b": make_mode("b", "ldpc_n648_r12", "BPSK"),
        "c": make_mode("c", "ldpc_n648_r12", "QAM16"),
        "d": make_mode("d", "ldpc_n648_r12", "QAM32"),
    }


def test_frame_layout_padding(modes):
    lay = frame_layout(2720, modes["b"])
    assert (lay.num_blocks, lay.info_pad, lay.coded_bits, lay.num_symbols) == (9, 196, 5832, 5832)
    lay = frame_layout(2720, modes["d"])
    # 5832 coded bits padded to a multiple of 5
    assert lay.symbol_pad == 3 and lay.num_symbols == 1167
    assert frame_layout(0, modes["b"]).num_symbols == 0


@pytest.mark.parametrize("label", "abcd")
@pytest.mark.parametrize("kind", ["awgn", "rayleigh", "rician"])
def test_noiseless_link_is_transparent(modes, label, kind):
    bits = np.random.default_rng(0).integers(0, 2, 1000, dtype=np.uint8)
    out, rep = transmit(bits, modes[label], ChannelSpec(kind), None, seed=1)
    assert rep.bit_errors == 0 and rep.blocks_unconverged == 0
    assert np.array_equal(out, bits)


def test_symbols_have_unit_energy(modes):
    bits = np.random.default_rng(1).integers(0, 2, 20000, dtype=np.uint8)
    x, _ = encode_frame(bits, modes["c"])
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, rel=0.03)


def test_transmit_is_deterministic_and_traces(modes):
    bits = np.random.default_rng(2).integers(0, 2, 3000, dtype=np.uint8)
    tr = {}
    o1, r1 = transmit(bits, modes["c"], ChannelSpec("rayleigh"), 3.0, seed=5, trace=tr)
    o2, r2 = transmit(bits, modes["c"], ChannelSpec("rayleigh"), 3.0, seed=5)
    assert np.array_equal(o1, o2) and r1.bit_errors == r2.bit_errors
    assert tr["llrs"].size == r1.layout.num_symbols * 4
    assert 0 <= r1.ber <= 1


def test_low_snr_causes_errors_high_snr_does_not(modes):
    bits = np.random.default_rng(3).integers(0, 2, 20000, dtype=np.uint8)
    _, low = transmit(bits, modes["b"], ChannelSpec(), -4.0, seed=0)
    _, high = transmit(bits, modes["b"], ChannelSpec(), 6.0, seed=0)
    assert low.bit_errors > 0 and high.bit_errors == 0


def test_amc_table_selection(modes):
    table = AMCTable({"b": modes["b"], "c": modes["c"]}, [(-math.inf, 8.0, "b"), (8.0, math.inf, "c")])
    assert table.select(7.99).label == "b"
    assert table.select(8.0).label == "c"
    assert table.select(math.inf).label == "c"
    gap = AMCTable({"c": modes["c"]}, [(5.0, 10.0, "c")])
    with pytest.raises(AMCGapError) as err:
        gap.check_coverage([0.0, 5.0, 12.0])
    assert err.value.snrs == [0.0, 12.0]
    with pytest.raises(ValueError):
        AMCTable({"b": modes["b"]}, [(0.0, 1.0, "zz")])


def test_amc_from_dict():
    t = AMCTable.from_dict({
        "modes": {"lo": {"code": "ldpc_n648_r12", "constellation": "BPSK"},
                  "hi": {"code": "ldpc_n648_r12", "constellation": "16QAM"}},
        "table": [{"snr_max": 10.0, "mode": "lo"}, {"snr_min": 10.0, "mode": "hi"}],
    })
    assert t.select(0).spectral_efficiency == 0.5
    assert t.select(15).spectral_efficiency == 2.0
