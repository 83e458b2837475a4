import itertools
import math

import numpy as np
import pytest

from vqdeepsc.link.modulation import demodulate_soft, get_constellation, hard_decision, modulate

NAMES = ["BPSK", "QAM16", "QAM32"]


def brute_llr(y, points, labels, var):
    """log-sum over the constellation written out with math.exp."""
    out = []
    for i in range(labels.shape[1]):
        num = sum(math.exp(-abs(y - p) ** 2 / var) for p, l in zip(points, labels) if l[i] == 0)
        den = sum(math.exp(-abs(y - p) ** 2 / var) for p, l in zip(points, labels) if l[i] == 1)
        out.append(math.log(num) - math.log(den))
    return out


@pytest.mark.parametrize("name", NAMES)
def test_unit_average_energy(name):
    c = get_constellation(name)
    assert len(c.points) == 2**c.bits_per_symbol
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12


def test_bpsk_llr_matches_numeric_log_sum():
    c = get_constellation("BPSK")
    llr = demodulate_soft(np.array([1.0 + 0j]), c, 0.5)
    assert llr[0] == pytest.approx(brute_llr(1.0, c.points, c.bit_labels, 0.5)[0], abs=1e-12)
    # |y+1|^2 - |y-1|^2 over the total complex variance
    assert llr[0] == pytest.approx(8.0, abs=1e-12)


def test_bpsk_midpoint_is_uninformative():
    assert demodulate_soft(np.array([0j]), "BPSK", 0.3)[0] == 0.0


def test_qam16_corner_label():
    sym = modulate(np.array([1, 0, 1, 0], dtype=np.uint8), "QAM16")
    assert sym[0] == pytest.approx((3 + 3j) / math.sqrt(10))


def test_qam16_is_gray():
    c = get_constellation("QAM16")
    d = math.sqrt(np.min([abs(a - b) ** 2 for a, b in itertools.combinations(c.points, 2)]))
    for (pa, la), (pb, lb) in itertools.combinations(zip(c.points, c.bit_labels), 2):
        if abs(abs(pa - pb) - d) < 1e-9:
            assert (la != lb).sum() == 1


def test_qam32_cross_shape_and_near_gray():
    c = get_constellation("QAM32")
    scaled = c.points * math.sqrt(20)
    assert np.allclose(scaled.real % 2, 1) and np.allclose(scaled.imag % 2, 1)
    assert not np.any((np.abs(scaled.real) == 5) & (np.abs(scaled.imag) == 5))
    flips = pairs = 0
    for (pa, la), (pb, lb) in itertools.combinations(zip(scaled, c.bit_labels), 2):
        if abs(abs(pa - pb) - 2) < 1e-9:
            pairs += 1
            flips += (la != lb).sum()
    assert pairs == 52 and flips == 60


@pytest.mark.parametrize("name", NAMES)
def test_llrs_match_brute_force(name):
    c = get_constellation(name)
    rng = np.random.default_rng(0)
    y = rng.normal(size=20) + 1j * rng.normal(size=20)
    var = rng.uniform(0.2, 2.0, size=20)
    got = demodulate_soft(y, c, var).reshape(20, -1)
    for yi, vi, g in zip(y, var, got):
        assert np.allclose(g, brute_llr(yi, c.points, c.bit_labels, vi), atol=1e-9)


@pytest.mark.parametrize("name", NAMES)
def test_noiseless_round_trip(name):
    c = get_constellation(name)
    bits = np.random.default_rng(1).integers(0, 2, 50 * c.bits_per_symbol, dtype=np.uint8)
    llr = demodulate_soft(modulate(bits, c), c, 1e-3)
    assert (hard_decision(llr) == bits).all()


def test_erasures_give_zero_llrs():
    llr = demodulate_soft(np.array([0.9 + 0.2j, -0.9 + 0.3j]), "QAM16", 0.1, erasures=np.array([True, False]))
    assert (llr[:4] == 0).all() and (llr[4:] != 0).all()


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        demodulate_soft(np.array([1.0]), "BPSK", 0.0)
    with pytest.raises(ValueError):
        modulate(np.array([1, 0, 1], dtype=np.uint8), "QAM16")
    with pytest.raises((KeyError, ValueError)):
        get_constellation("QAM64")
