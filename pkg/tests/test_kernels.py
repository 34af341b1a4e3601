import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frislab import kernels
from frislab._jit import HAVE_NUMBA
from frislab.channel import ChannelRealization, FrisGeometry
from frislab.fris import PhaseMode, configure_all
from frislab.harness import _factor, draw_block
from frislab.modem import FrameConfig, detect_greedy, detect_list, detect_ml, popcount

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not available")

GEOM = FrisGeometry(8, 8, 0.5, 0.5)


def tables(rules, variants):
    """rules: [(k, q, inphase)], variants: [(cfg, det, list_size)]."""
    r = np.array(rules, dtype=np.int64).reshape(-1, 3)
    v = np.array(variants, dtype=np.int64).reshape(-1, 3)
    return r[:, 0], r[:, 1], r[:, 2].astype(bool), v[:, 0], v[:, 1], v[:, 2]


def block(seed, n_frames=64, n_r=4, m=4, corr=True):
    factor = _factor(GEOM, "jakes") if corr else None
    return draw_block(seed, 0, n_frames, n_r, m, GEOM.n_tot, factor)


RULES = [(24, 2, True), (8, 2, True), (24, 0, False), (24, 3, False)]
VARIANTS = [(0, kernels.DET_ML, 4), (1, kernels.DET_ML, 4), (2, kernels.DET_ML, 4),
            (3, kernels.DET_ML, 4), (0, kernels.DET_GREEDY, 1), (0, kernels.DET_LIST, 2),
            (0, kernels.DET_LIST, 4)]
SIGMA = np.sqrt(10 ** (-np.array([-40.0, -30.0, -20.0, 60.0]) / 10))


def reference_errors(gt, f, tx, w, cfg, sigma, rule, variant):
    k, q, inphase = rule
    _, det, lsize = variant
    mode = PhaseMode(q if q else None)
    const = cfg.constellation()
    total = 0
    for fr in range(gt.shape[0]):
        ch = ChannelRealization(f[fr], gt[fr], gt[fr])
        confs = configure_all(ch, k, mode, "inphase" if inphase else "magnitude")
        i, s = divmod(int(tx[fr]), cfg.m)
        h_col = (gt[fr] * f[fr]) @ confs[i].reflection
        y = h_col * const.points[s] + sigma * w[fr]
        if det == kernels.DET_ML:
            r = detect_ml(y, ch, confs, const)
        elif det == kernels.DET_GREEDY:
            r = detect_greedy(y, ch, confs, const)
        else:
            r = detect_list(y, ch, confs, const, lsize)
        total += int(popcount(int(tx[fr]) ^ (r.antenna_index * cfg.m + r.symbol_index)))
    return total


def test_numpy_kernel_matches_reference_detectors():
    gt, f, tx, w = block(11, n_frames=48)
    cfg = FrameConfig(4, 4, 24, PhaseMode(2))
    points = cfg.constellation().points
    tab = tables(RULES, VARIANTS)
    active = np.ones((len(VARIANTS), SIGMA.size), bool)
    got = kernels.block_errors_numpy(gt, f, tx, w, points, SIGMA, *tab, active)
    for v, var in enumerate(VARIANTS):
        for p, s in enumerate(SIGMA):
            assert got[v, p] == reference_errors(gt, f, tx, w, cfg, s, RULES[var[0]], var)


@needs_numba
@pytest.mark.parametrize("seed,corr", [(1, True), (2, False), (3, True)])
def test_numba_matches_numpy(seed, corr):
    gt, f, tx, w = block(seed, n_frames=256, corr=corr)
    points = FrameConfig(4, 4, 24, PhaseMode(2)).constellation().points
    tab = tables(RULES, VARIANTS)
    active = np.ones((len(VARIANTS), SIGMA.size), bool)
    active[1, 0] = active[5, 2] = False
    a = kernels.block_errors_numba(gt, f, tx, w, points, SIGMA, *tab, active)
    b = kernels.block_errors_numpy(gt, f, tx, w, points, SIGMA, *tab, active)
    np.testing.assert_array_equal(a, b)
    assert np.all(a[~active] == 0)


def test_noiseless_limit_has_no_errors():
    gt, f, tx, w = block(5, n_frames=128)
    points = FrameConfig(4, 4, 24, PhaseMode(2)).constellation().points
    tab = tables(RULES[:1], [(0, kernels.DET_ML, 4)])
    got = kernels.block_errors(gt, f, tx, w, points, np.array([0.0]), *tab, np.ones((1, 1), bool))
    assert got[0, 0] == 0


def test_full_list_equals_ml():
    gt, f, tx, w = block(8, n_frames=256)
    points = FrameConfig(4, 4, 24, PhaseMode(2)).constellation().points
    tab = tables(RULES[:1], [(0, kernels.DET_ML, 4), (0, kernels.DET_LIST, 4)])
    got = kernels.block_errors(gt, f, tx, w, points, SIGMA, *tab, np.ones((2, SIGMA.size), bool))
    np.testing.assert_array_equal(got[0], got[1])


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.block_errors(*([None] * 13), backend="fortran")


# --- ranking helpers ---------------------------------------------------------------

metrics = st.lists(st.sampled_from([-1.0, 0.0, 0.5, 1.0, 2.0, 3.5]), min_size=1, max_size=40)


@needs_numba
@given(metrics, st.data())
def test_top_order_is_stable_descending(vals, data):
    metric = np.array(vals)
    k = data.draw(st.integers(1, metric.size))
    oracle = sorted(range(metric.size), key=lambda j: (-metric[j], j))[:k]
    assert kernels._top_order(metric, k).tolist() == oracle


@given(metrics, st.data())
def test_topk_mask_matches_stable_rank(vals, data):
    metric = np.array(vals)
    k = data.draw(st.integers(1, metric.size))
    oracle = sorted(range(metric.size), key=lambda j: (-metric[j], j))[:k]
    assert np.flatnonzero(kernels._topk_mask(metric[None], k)[0]).tolist() == sorted(oracle)


@needs_numba
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0, 1, 2, 3]), st.booleans())
def test_prefix_sums_serve_every_k(seed, q, inphase):
    # gains for several K from one ranking equal independent per-K computations
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((3, 20)) + 1j * rng.standard_normal((3, 20))
    ks = np.array([1, 5, 12, 20], np.int64)
    h = np.zeros((ks.size, 3, 3), np.complex128)
    kernels._gains_group(c, q, inphase, ks, np.arange(ks.size), h)
    for u, k in enumerate(ks):
        want = kernels._gains_numpy(c[None], int(k), q, inphase)[0]
        np.testing.assert_allclose(h[u], want, rtol=1e-12, atol=1e-12)


def test_disable_flag_selects_numpy():
    code = ("from frislab import _jit, kernels; import numpy as np;"
            "print(_jit.HAVE_NUMBA, kernels._top_order(np.array([1.0, 3.0, 3.0]), 2).tolist())")
    env = dict(os.environ, FRISLAB_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out[0] == "False"
    assert "".join(out[1:]) == "[1,2]"
