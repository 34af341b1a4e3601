import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frislab.channel import FrisGeometry, build_jakes_correlation, identity_correlation, sample_channels
from frislab.fris import PhaseMode, configure_all, effective_gain, gain_matrix
from frislab.modem import (FrameConfig, demap, detect_greedy, detect_list, detect_ml, gray,
                           hamming_table, make_constellation, map_bits, popcount, psk, qam,
                           synthesize_rx)


def setup(seed, n_r=4, m=4, k=24, geom=FrisGeometry(8, 8, 0.5, 0.5), mode=PhaseMode(2)):
    ch = sample_channels(np.random.default_rng(seed), geom, n_r, build_jakes_correlation(geom))
    cfg = FrameConfig(n_r, m, k, mode)
    return ch, configure_all(ch, k, mode), cfg.constellation(), cfg


# --- constellations ----------------------------------------------------------------

@pytest.mark.parametrize("m,kind", [(1, None), (2, "psk"), (4, "psk"), (8, "psk"), (16, "qam"),
                                    (64, "qam"), (16, "psk"), (4, "qam")])
def test_constellation_invariants(m, kind):
    c = make_constellation(m, kind)
    assert c.order == m and c.points.size == m
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-14)
    assert len(set(np.round(c.points, 12))) == m


@pytest.mark.parametrize("m", [2, 4, 8, 16])
def test_psk_gray_adjacency(m):
    c = psk(m)
    ang = np.mod(np.angle(c.points), 2 * math.pi)
    order = np.argsort(ang)                  # labels in angular order
    for a, b in zip(order, np.roll(order, -1)):
        assert popcount(a ^ b) == 1


@pytest.mark.parametrize("m", [4, 16, 64])
def test_qam_per_axis_gray(m):
    c = qam(m)
    pts = c.points * math.sqrt(2 * (m - 1) / 3)
    for a, b in itertools.combinations(range(m), 2):
        d = pts[a] - pts[b]
        if abs(abs(d) - 2) < 1e-9:           # nearest neighbours along an axis
            assert popcount(a ^ b) == 1


def test_default_modulation_choice():
    assert make_constellation(16).kind == "qam"
    assert make_constellation(4).kind == "psk"
    assert make_constellation(4).points[0] == pytest.approx(np.exp(1j * math.pi / 4))
    with pytest.raises(ValueError):
        make_constellation(8, "qam")


def test_frame_config_validation():
    with pytest.raises(ValueError):
        FrameConfig(3)
    with pytest.raises(ValueError):
        FrameConfig(4, m=3)
    with pytest.raises(ValueError):
        FrameConfig(4, list_size=5)
    assert FrameConfig(8, 16).bits == 7


# --- bit mapping -------------------------------------------------------------------

def test_map_examples():
    cfg = FrameConfig(4, 4)
    i, s, x = map_bits([0, 0, 0, 0], cfg)
    assert (i, s) == (0, 0) and x == cfg.constellation().points[0]
    i, s, x = map_bits([1, 1], FrameConfig(4, 1))
    assert (i, s, x) == (3, 0, 1)
    with pytest.raises(ValueError):
        map_bits([1, 0, 1], cfg)


def test_map_round_trip_exhaustive():
    cfg = FrameConfig(8, 16)
    seen = set()
    for v in range(2 ** cfg.bits):
        bits = [(v >> (cfg.bits - 1 - k)) & 1 for k in range(cfg.bits)]
        i, s, _ = map_bits(bits, cfg)
        assert list(demap(i, s, cfg)) == bits
        seen.add((i, s))
    assert len(seen) == 2 ** cfg.bits


def test_hamming_table():
    h = hamming_table(4, 4)
    assert h.shape == (16, 16) and np.all(np.diag(h) == 0)
    assert h[0b0111, 0b1000] == 4
    assert np.array_equal(h, h.T)


# --- synthesis ---------------------------------------------------------------------

def test_synthesize_noiseless():
    ch, cfgs, const, _ = setup(1)
    y = synthesize_rx(ch, cfgs[2], 1.0, 0.0)
    ref = [effective_gain(ch, cfgs[2], ell) for ell in range(4)]
    assert np.allclose(y, ref, rtol=1e-14)
    phi = 0.7
    assert np.allclose(synthesize_rx(ch, cfgs[2], np.exp(1j * phi), 0.0), y * np.exp(1j * phi))


def test_synthesize_noise_variance():
    ch, cfgs, _, _ = setup(2)
    zero = type(ch)(np.zeros_like(ch.f), ch.g, np.zeros_like(ch.g_tilde))
    rng = np.random.default_rng(3)
    ys = np.array([synthesize_rx(zero, cfgs[0], 1.0, 4.0, rng) for _ in range(25000)])
    assert np.var(ys) == pytest.approx(4.0, abs=0.1)
    with pytest.raises(ValueError):
        synthesize_rx(zero, cfgs[0], 1.0, -1.0)


# --- detectors ---------------------------------------------------------------------

def test_ml_noiseless_exact():
    ch, cfgs, const, _ = setup(4)
    for i in range(4):
        for s in range(4):
            y = synthesize_rx(ch, cfgs[i], const.points[s], 0.0)
            r = detect_ml(y, ch, cfgs, const)
            assert (r.antenna_index, r.symbol_index) == (i, s)
            assert r.metric == pytest.approx(0.0, abs=1e-20)


def test_ml_matches_enumeration():
    geom = FrisGeometry(4, 4, 0.5, 0.5)
    rng = np.random.default_rng(5)
    const = make_constellation(2)
    for _ in range(200):
        ch = sample_channels(rng, geom, 2, identity_correlation(16))
        cfgs = configure_all(ch, 8)
        h = gain_matrix(ch, cfgs)
        y = h[:, 1] * const.points[0] + rng.standard_normal(2) + 1j * rng.standard_normal(2)
        mets = {(i, s): np.sum(np.abs(y - h[:, i] * const.points[s]) ** 2)
                for i in range(2) for s in range(2)}
        best = min(mets, key=lambda key: (mets[key], key))
        r = detect_ml(y, ch, cfgs, const)
        assert (r.antenna_index, r.symbol_index) == best
        assert r.metric == pytest.approx(mets[best])


def test_ml_zero_observation():
    ch, cfgs, const, _ = setup(6)
    r = detect_ml(np.zeros(4, complex), ch, cfgs, const)
    h = gain_matrix(ch, cfgs)
    model = np.abs(h[:, :, None] * const.points[None, None, :]) ** 2
    norms = model.sum(axis=0)            # (i, s)
    flat = int(np.argmin(norms.reshape(-1)))
    assert (r.antenna_index, r.symbol_index) == divmod(flat, 4)


def test_greedy_examples():
    ch, cfgs, const, _ = setup(7, k=60)
    y = synthesize_rx(ch, cfgs[1], const.points[3], 0.0)
    r = detect_greedy(y, ch, cfgs, const)
    assert (r.antenna_index, r.symbol_index) == (1, 3)
    r = detect_greedy(np.array([1, 5, 2, 0], complex), ch, cfgs, const)
    assert r.antenna_index == 1


def test_greedy_agrees_with_ml_at_high_snr():
    geom = FrisGeometry(8, 8, 0.5, 0.5)
    corr = build_jakes_correlation(geom)
    rng = np.random.default_rng(8)
    const = make_constellation(1)
    n0 = 10 ** (-30 / 10)
    agree, n = 0, 400
    for _ in range(n):
        ch = sample_channels(rng, geom, 4, corr)
        cfgs = configure_all(ch, 64)
        i = int(rng.integers(4))
        y = synthesize_rx(ch, cfgs[i], 1.0, n0, rng)
        agree += detect_greedy(y, ch, cfgs, const).antenna_index == detect_ml(y, ch, cfgs, const).antenna_index
    assert agree / n >= 0.99


def test_list_detector_properties():
    geom = FrisGeometry(6, 6, 0.4, 0.4)
    corr = build_jakes_correlation(geom)
    rng = np.random.default_rng(9)
    const = make_constellation(4)
    for _ in range(300):
        ch = sample_channels(rng, geom, 8, corr)
        cfgs = configure_all(ch, 12, PhaseMode(2))
        i, s = int(rng.integers(8)), int(rng.integers(4))
        y = synthesize_rx(ch, cfgs[i], const.points[s], 2.0, rng)
        ml = detect_ml(y, ch, cfgs, const)
        mets = [detect_list(y, ch, cfgs, const, L).metric for L in range(1, 9)]
        assert np.all(np.diff(mets) <= 1e-12)
        full = detect_list(y, ch, cfgs, const, 8)
        assert (full.antenna_index, full.symbol_index, full.metric) == (ml.antenna_index, ml.symbol_index, ml.metric)
        one = detect_list(y, ch, cfgs, const, 1)
        assert one.antenna_index == int(np.argmax(np.abs(y) ** 2))
    with pytest.raises(ValueError):
        detect_list(y, ch, cfgs, const, 0)


def test_list_full_equals_ml_on_batch():
    geom = FrisGeometry(5, 4, 0.5, 0.5)
    corr = build_jakes_correlation(geom)
    rng = np.random.default_rng(10)
    const = make_constellation(2)
    for _ in range(10000):
        ch = sample_channels(rng, geom, 2, corr)
        cfgs = configure_all(ch, 6)
        y = synthesize_rx(ch, cfgs[int(rng.integers(2))], 1.0, 0.5, rng)
        a, b = detect_ml(y, ch, cfgs, const), detect_list(y, ch, cfgs, const, 2)
        assert (a.antenna_index, a.symbol_index) == (b.antenna_index, b.symbol_index)


@given(st.integers(0, 2 ** 31), st.floats(1e-3, 1e3))
def test_scale_equivariance(seed, scale):
    ch, cfgs, const, _ = setup(seed % 1000, k=10)
    rng = np.random.default_rng(seed)
    y = synthesize_rx(ch, cfgs[1], const.points[2], 1.0, rng)
    scaled = type(ch)(ch.f * scale, ch.g, ch.g_tilde)
    for det in (detect_ml, detect_greedy):
        a, b = det(y, ch, cfgs, const), det(y * scale, scaled, cfgs, const)
        assert (a.antenna_index, a.symbol_index) == (b.antenna_index, b.symbol_index)


def test_batch_ber_reproducible():
    def ber(seed):
        rng = np.random.default_rng(seed)
        geom = FrisGeometry(4, 4, 0.5, 0.5)
        corr = build_jakes_correlation(geom)
        cfg = FrameConfig(4, 4, 8)
        const = cfg.constellation()
        ham = hamming_table(4, 4)
        err = 0
        for _ in range(200):
            ch = sample_channels(rng, geom, 4, corr)
            cfgs = configure_all(ch, 8)
            bits = rng.integers(0, 2, cfg.bits)
            i, s, x = map_bits(bits, cfg, const)
            r = detect_ml(synthesize_rx(ch, cfgs[i], x, 1.0, rng), ch, cfgs, const)
            err += ham[i * 4 + s, r.antenna_index * 4 + r.symbol_index]
        return err
    assert ber(77) == ber(77)
