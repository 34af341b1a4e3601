"""Per-block Monte Carlo kernel: configure every mode, synthesize and detect.

Two interchangeable backends share one signature:

* ``block_errors_numba``: frame loop compiled with numba;
* ``block_errors_numpy``: vectorised over the frames of a block.

``block_errors`` picks numba unless it is missing or ``FRISLAB_DISABLE_JIT``
is set. Both apply the same selection rule (k largest, ties to the smaller
index) and the same decision rules, so they agree frame for frame up to
floating-point rounding in exact ties.

Shapes: ``gt`` (F, n_r, N) correlated surface-to-receiver channel, ``f``
(F, N), ``tx`` (F,) transmitted codeword ``i * m + s``, ``w`` (F, n_r) unit
CN noise, ``sigma`` (P,) noise standard deviations. Configurations are
described by ``cfg_k``, ``cfg_q`` (0 = continuous) and ``cfg_inphase``;
detectors by ``var_cfg`` (configuration index), ``var_det`` (0 ML,
1 greedy, 2 list) and ``var_list``. ``active`` (V, P) masks the
(variant, SNR) cells to evaluate. Returns bit errors (V, P).
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import HAVE_NUMBA, njit

DET_ML, DET_GREEDY, DET_LIST = 0, 1, 2
TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

@njit(cache=True)
def _phase_table(q):
    step = TWO_PI / (1 << q)
    tab = np.empty(1 << q, dtype=np.complex128)
    for cell in range(1 << q):
        tq = (cell * step + 0.5 * step) % TWO_PI
        tab[cell] = complex(math.cos(tq), math.sin(tq))
    return tab


@njit(cache=True)
def _phase_row(c_row, q, inphase, table, phasor, metric):
    n = c_row.size
    if q == 0:
        for j in range(n):
            mag = abs(c_row[j])
            metric[j] = mag
            phasor[j] = c_row[j].conjugate() / mag if mag > 0 else 1.0
        return
    step = TWO_PI / (1 << q)
    top = (1 << q) - 1
    for j in range(n):
        th = -math.atan2(c_row[j].imag, c_row[j].real) % TWO_PI
        if th >= TWO_PI:
            th = 0.0
        ph = table[min(int(math.floor(th / step)), top)]
        phasor[j] = ph
        metric[j] = (c_row[j] * ph).real if inphase else abs(c_row[j])


@njit(cache=True)
def _top_order(metric, k):
    """Indices of the k largest values, descending, ties to the smaller index."""
    n = metric.size
    if 2 * k >= n:
        return np.argsort(-metric, kind="mergesort")[:k]
    kth = np.partition(metric, n - k)[n - k]
    cand = np.empty(k, dtype=np.int64)
    cnt = 0
    for j in range(n):
        if metric[j] > kth:
            cand[cnt] = j
            cnt += 1
    for j in range(n):
        if cnt >= k:
            break
        if metric[j] == kth:
            cand[cnt] = j
            cnt += 1
    vals = np.empty(k)
    for t in range(k):
        vals[t] = -metric[cand[t]]
    return cand[np.argsort(vals, kind="mergesort")]


@njit(cache=True)
def _gains_group(c, q, inphase, ks, cfg_of, h):
    """Gains of every configuration sharing one phase rule.

    Ranking by descending metric (ties to the smaller index) makes the
    top-K set of each K a prefix, so one running sum serves all K.
    """
    n_r, n = c.shape
    metric = np.empty(n)
    phasor = np.empty(n, dtype=np.complex128)
    acc = np.empty(n_r, dtype=np.complex128)
    table = _phase_table(max(q, 1))
    k_max = 0
    for t in range(ks.size):
        k_max = max(k_max, ks[t])
    for i in range(n_r):
        _phase_row(c[i], q, inphase, table, phasor, metric)
        order = _top_order(metric, k_max)
        acc[:] = 0.0
        for t in range(k_max):
            j = order[t]
            ph = phasor[j]
            for ell in range(n_r):
                acc[ell] += c[ell, j] * ph
            for u in range(ks.size):
                if ks[u] == t + 1:
                    for ell in range(n_r):
                        h[cfg_of[u], ell, i] = acc[ell]


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        c += x & 1
        x >>= 1
    return c


@njit(cache=True)
def _block_numba(gt, f, tx, w, points, sigma, cfg_k, cfg_grp, grp_q, grp_inphase,
                 var_cfg, var_det, var_list, active):
    n_frames, n_r, n = gt.shape
    m = points.size
    n_cfg = cfg_k.size
    n_var, n_snr = active.shape
    errors = np.zeros((n_var, n_snr), dtype=np.int64)
    cfg_used = np.zeros(n_cfg, dtype=np.bool_)
    for v in range(n_var):
        for p in range(n_snr):
            if active[v, p]:
                cfg_used[var_cfg[v]] = True
    h = np.empty((n_cfg, n_r, n_r), dtype=np.complex128)
    c = np.empty((n_r, n), dtype=np.complex128)
    y = np.empty(n_r, dtype=np.complex128)
    z = np.empty(n_r, dtype=np.complex128)
    energy = np.empty((n_cfg, n_r))
    ey = np.empty(n_r)
    pt_e = np.empty(m)
    for s in range(m):
        pt_e[s] = points[s].real ** 2 + points[s].imag ** 2
    order = np.empty(n_r, dtype=np.int64)
    for fr in range(n_frames):
        for ell in range(n_r):
            for j in range(n):
                c[ell, j] = gt[fr, ell, j] * f[fr, j]
        for gr in range(grp_q.size):
            sel = np.flatnonzero(cfg_used & (cfg_grp == gr))
            if sel.size == 0:
                continue
            _gains_group(c, grp_q[gr], grp_inphase[gr], cfg_k[sel], sel, h)
        for g in range(n_cfg):
            if cfg_used[g]:
                for i in range(n_r):
                    e = 0.0
                    for ell in range(n_r):
                        e += h[g, ell, i].real ** 2 + h[g, ell, i].imag ** 2
                    energy[g, i] = e
        i_tx = tx[fr] // m
        x = points[tx[fr] % m]
        for v in range(n_var):
            g = var_cfg[v]
            det = var_det[v]
            for p in range(n_snr):
                if not active[v, p]:
                    continue
                yy = 0.0
                for ell in range(n_r):
                    y[ell] = h[g, ell, i_tx] * x + sigma[p] * w[fr, ell]
                    ey[ell] = y[ell].real ** 2 + y[ell].imag ** 2
                    yy += ey[ell]
                best = np.inf
                bi = 0
                bs = 0
                if det == DET_GREEDY:
                    bi = 0
                    for ell in range(1, n_r):
                        if ey[ell] > ey[bi]:
                            bi = ell
                    for s in range(m):
                        r = y[bi] - h[g, bi, bi] * points[s]
                        met = r.real ** 2 + r.imag ** 2
                        if met < best:
                            best = met
                            bs = s
                else:
                    n_cand = n_r
                    if det == DET_LIST:
                        n_cand = var_list[v]
                        # stable descending-energy ranking of the branches
                        for a in range(n_r):
                            order[a] = a
                        for a in range(1, n_r):
                            key = order[a]
                            b = a - 1
                            while b >= 0 and ey[order[b]] < ey[key]:
                                order[b + 1] = order[b]
                                b -= 1
                            order[b + 1] = key
                        # restore ascending index order among candidates
                        for a in range(1, n_cand):
                            key = order[a]
                            b = a - 1
                            while b >= 0 and order[b] > key:
                                order[b + 1] = order[b]
                                b -= 1
                            order[b + 1] = key
                    for t in range(n_cand):
                        i = order[t] if det == DET_LIST else t
                        zi = 0j
                        for ell in range(n_r):
                            zi += h[g, ell, i].conjugate() * y[ell]
                        z[i] = zi
                        for s in range(m):
                            pr = points[s]
                            met = yy - 2.0 * (pr.conjugate() * zi).real + pt_e[s] * energy[g, i]
                            if met < best:
                                best = met
                                bi = i
                                bs = s
                errors[v, p] += _popcount(tx[fr] ^ (bi * m + bs))
    return errors


def block_errors_numba(gt, f, tx, w, points, sigma, cfg_k, cfg_q, cfg_inphase,
                       var_cfg, var_det, var_list, active):
    if not HAVE_NUMBA:
        raise RuntimeError("numba backend unavailable")
    rules = list(zip(np.asarray(cfg_q).tolist(), np.asarray(cfg_inphase, bool).tolist()))
    uniq = sorted(set(rules))
    cfg_grp = np.array([uniq.index(r) for r in rules], np.int64)
    grp_q = np.array([r[0] for r in uniq], np.int64)
    grp_inphase = np.array([r[1] for r in uniq], np.bool_)
    return _block_numba(np.ascontiguousarray(gt), np.ascontiguousarray(f), np.asarray(tx, np.int64),
                        np.ascontiguousarray(w), np.asarray(points, np.complex128),
                        np.asarray(sigma, np.float64), np.asarray(cfg_k, np.int64), cfg_grp,
                        grp_q, grp_inphase, np.asarray(var_cfg, np.int64),
                        np.asarray(var_det, np.int64), np.asarray(var_list, np.int64),
                        np.asarray(active, np.bool_))


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _topk_mask(metric, k):
    n = metric.shape[-1]
    kth = np.partition(metric, n - k, axis=-1)[..., n - k:n - k + 1]
    above = metric > kth
    ties = metric == kth
    room = k - above.sum(axis=-1, keepdims=True)
    return above | (ties & (np.cumsum(ties, axis=-1) <= room))


def _gains_numpy(c, k, q, inphase):
    if q == 0:
        mag = np.abs(c)
        metric = mag
        safe = np.where(mag > 0, mag, 1.0)
        phasor = np.where(mag > 0, np.conj(c) / safe, 1.0)
    else:
        step = TWO_PI / (1 << q)
        th = np.mod(-np.arctan2(c.imag, c.real), TWO_PI)
        th = np.where(th >= TWO_PI, 0.0, th)
        cell = np.minimum(np.floor(th / step), (1 << q) - 1)
        tq = np.mod(cell * step + 0.5 * step, TWO_PI)
        phasor = np.cos(tq) + 1j * np.sin(tq)
        metric = (c * phasor).real if inphase else np.abs(c)
    v = np.where(_topk_mask(metric, k), phasor, 0.0)
    # h[f, ell, i] = sum_n c[f, ell, n] v[f, i, n]
    return np.matmul(c, np.swapaxes(v, -1, -2))


def block_errors_numpy(gt, f, tx, w, points, sigma, cfg_k, cfg_q, cfg_inphase,
                       var_cfg, var_det, var_list, active):
    active = np.asarray(active, bool)
    n_frames, n_r, _ = gt.shape
    m = points.size
    n_var, n_snr = active.shape
    errors = np.zeros((n_var, n_snr), dtype=np.int64)
    c = gt * f[:, None, :]
    used = {int(var_cfg[v]) for v in range(n_var) if active[v].any()}
    gains = {g: _gains_numpy(c, int(cfg_k[g]), int(cfg_q[g]), bool(cfg_inphase[g])) for g in used}
    i_tx = tx // m
    x = points[tx % m]
    rows = np.arange(n_frames)
    pt_e = np.abs(points) ** 2
    for v in range(n_var):
        if not active[v].any():
            continue
        h = gains[int(var_cfg[v])]
        energy = np.sum(np.abs(h) ** 2, axis=1)            # (F, n_r)
        clean = h[rows, :, i_tx] * x[:, None]               # (F, n_r)
        det = int(var_det[v])
        for p in np.flatnonzero(active[v]):
            y = clean + sigma[p] * w
            ey = y.real ** 2 + y.imag ** 2
            if det == DET_GREEDY:
                bi = np.argmax(ey, axis=1)
                diag = h[rows, bi, bi]
                r = y[rows, bi][:, None] - diag[:, None] * points[None, :]
                bs = np.argmin(r.real ** 2 + r.imag ** 2, axis=1)
            else:
                z = np.einsum("fli,fl->fi", np.conj(h), y)
                met = (ey.sum(axis=1)[:, None, None]
                       - 2.0 * (np.conj(points)[None, None, :] * z[:, :, None]).real
                       + pt_e[None, None, :] * energy[:, :, None])
                if det == DET_LIST:
                    order = np.argsort(-ey, axis=1, kind="stable")[:, :int(var_list[v])]
                    keep = np.zeros(ey.shape, bool)
                    np.put_along_axis(keep, order, True, axis=1)
                    met = np.where(keep[:, :, None], met, np.inf)
                flat = np.argmin(met.reshape(n_frames, -1), axis=1)
                bi, bs = flat // m, flat % m
            diff = tx ^ (bi * m + bs)
            errors[v, p] = int(np.sum(_popcount_array(diff)))
    return errors


def _popcount_array(x):
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


def block_errors(*args, backend=None):
    if backend is None:
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        return block_errors_numba(*args)
    if backend == "numpy":
        return block_errors_numpy(*args)
    raise ValueError(f"unknown backend {backend!r}")
