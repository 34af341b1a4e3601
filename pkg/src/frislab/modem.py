"""Bit mapping, constellations, received-signal synthesis and detectors.

A frame carries ``B = log2(n_r * m)`` bits. The leading ``log2(n_r)`` bits
pick the focused receive antenna in natural binary; the rest pick a
Gray-labelled symbol. Constellation ``points[b]`` is the point whose label
is the integer ``b``, so Hamming distances are popcounts of XORs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelRealization, complex_normal
from .fris import PhaseMode, CONTINUOUS, gain_matrix


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def gray(k):
    return k ^ (k >> 1)


def popcount(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


@dataclass(frozen=True, eq=False)
class Constellation:
    order: int
    points: np.ndarray
    kind: str = "psk"

    @property
    def bits(self) -> int:
        return int(math.log2(self.order))

    def labels(self) -> list:
        return [format(b, f"0{self.bits}b") if self.bits else "" for b in range(self.order)]


def psk(m: int) -> Constellation:
    if not _is_pow2(m):
        raise ValueError("PSK order must be a power of two")
    if m == 1:
        return Constellation(1, np.ones(1, dtype=complex), "none")
    offset = math.pi / 4 if m == 4 else 0.0
    pts = np.empty(m, dtype=complex)
    for k in range(m):
        pts[gray(k)] = np.exp(1j * (2 * math.pi * k / m + offset))
    return Constellation(m, pts, "psk")


def qam(m: int) -> Constellation:
    side = int(round(math.sqrt(m)))
    if side * side != m or not _is_pow2(m) or m < 4:
        raise ValueError("QAM order must be a square power of two >= 4")
    half = int(math.log2(side))
    levels = np.empty(side)
    for k in range(side):
        levels[gray(k)] = 2 * k - (side - 1)
    scale = math.sqrt(2.0 * (m - 1) / 3.0)
    pts = np.empty(m, dtype=complex)
    for b in range(m):
        pts[b] = complex(levels[b >> half], levels[b & (side - 1)]) / scale
    return Constellation(m, pts, "qam")


def make_constellation(m: int, kind: Optional[str] = None) -> Constellation:
    """Unit-energy constellation; square orders default to QAM, others to PSK."""
    if m == 1:
        return psk(1)
    if kind is None:
        kind = "qam" if m >= 16 and round(math.sqrt(m)) ** 2 == m else "psk"
    if kind == "qam":
        return qam(m)
    if kind == "psk":
        return psk(m)
    raise ValueError(f"unknown modulation {kind!r}")


@dataclass(frozen=True)
class FrameConfig:
    n_r: int
    m: int = 1
    k_sel: int = 64
    phase_mode: PhaseMode = CONTINUOUS
    list_size: Optional[int] = None
    modulation: Optional[str] = None
    select_by: str = "inphase"

    def __post_init__(self):
        if not _is_pow2(self.n_r) or self.n_r < 2:
            raise ValueError("n_r must be a power of two >= 2")
        if not _is_pow2(self.m):
            raise ValueError("m must be a power of two (1 for RSSK)")
        if self.k_sel < 1:
            raise ValueError("k_sel must be >= 1")
        if self.list_size is not None and not 1 <= self.list_size <= self.n_r:
            raise ValueError("list size must lie in [1, n_r]")
        if self.select_by not in ("inphase", "magnitude"):
            raise ValueError("select_by must be 'inphase' or 'magnitude'")

    @property
    def bits_index(self) -> int:
        return int(math.log2(self.n_r))

    @property
    def bits_symbol(self) -> int:
        return int(math.log2(self.m))

    @property
    def bits(self) -> int:
        return self.bits_index + self.bits_symbol

    def constellation(self) -> Constellation:
        return make_constellation(self.m, self.modulation)


@dataclass(frozen=True)
class DetectionResult:
    antenna_index: int
    symbol_index: int
    metric: float


def bits_to_int(bits) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def int_to_bits(v: int, width: int) -> np.ndarray:
    return np.array([(v >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.int8)


def map_bits(bits, cfg: FrameConfig, const: Optional[Constellation] = None):
    """(antenna index, symbol index, symbol) carried by one frame of bits."""
    bits = np.asarray(bits)
    if bits.size != cfg.bits:
        raise ValueError(f"expected {cfg.bits} bits, got {bits.size}")
    const = const or cfg.constellation()
    i = bits_to_int(bits[:cfg.bits_index])
    s = bits_to_int(bits[cfg.bits_index:])
    return i, s, complex(const.points[s])


def demap(i: int, s: int, cfg: FrameConfig) -> np.ndarray:
    return int_to_bits((i << cfg.bits_symbol) | s, cfg.bits)


def hamming_table(n_r: int, m: int) -> np.ndarray:
    """(n_r*m, n_r*m) bit distances between codewords (i, s) -> i*m + s."""
    w = np.arange(n_r * m)
    return popcount(w[:, None] ^ w[None, :])


def synthesize_rx(chan: ChannelRealization, config, x: complex, n0: float,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """y = G_tilde diag(v) f x + n with n ~ CN(0, n0 I)."""
    if n0 < 0:
        raise ValueError("noise variance must be non-negative")
    y = (chan.g_tilde * chan.f) @ config.reflection * x
    if n0 > 0:
        y = y + math.sqrt(n0) * complex_normal(rng, y.shape)
    return y


def _joint_search(y, h, points, candidates):
    best = (math.inf, 0, 0)
    for i in candidates:
        r = y[:, None] - h[:, i][:, None] * points[None, :]
        met = np.sum(r.real ** 2 + r.imag ** 2, axis=0)
        s = int(np.argmin(met))
        if met[s] < best[0]:
            best = (float(met[s]), int(i), s)
    return DetectionResult(best[1], best[2], best[0])


def _energy_order(y):
    e = y.real ** 2 + y.imag ** 2
    return np.argsort(-e, kind="stable")


def detect_ml(y, chan: ChannelRealization, configs, const: Constellation) -> DetectionResult:
    """Joint argmin over (i, x) of ||y - G_tilde Phi_i f x||^2."""
    h = gain_matrix(chan, configs)
    return _joint_search(np.asarray(y), h, const.points, range(h.shape[1]))


def detect_greedy(y, chan: ChannelRealization, configs, const: Constellation) -> DetectionResult:
    """Strongest-branch antenna, then scalar ML on that branch only."""
    y = np.asarray(y)
    h = gain_matrix(chan, configs)
    i = int(_energy_order(y)[0])
    r = y[i] - h[i, i] * const.points
    met = r.real ** 2 + r.imag ** 2
    s = int(np.argmin(met))
    full = y - h[:, i] * const.points[s]
    return DetectionResult(i, s, float(np.sum(full.real ** 2 + full.imag ** 2)))


def detect_list(y, chan: ChannelRealization, configs, const: Constellation,
                list_size: int) -> DetectionResult:
    """ML search restricted to the ``list_size`` strongest receive branches."""
    y = np.asarray(y)
    if not 1 <= list_size <= y.size:
        raise ValueError(f"list size {list_size} outside [1, {y.size}]")
    h = gain_matrix(chan, configs)
    cand = np.sort(_energy_order(y)[:list_size])
    return _joint_search(y, h, const.points, cand)
