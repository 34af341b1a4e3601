"""Per-mode FRIS configuration: strongest-link selection and phase control."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRealization

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhaseMode:
    """Continuous phases (``q_bits=None``) or a Q-bit mid-rise alphabet."""
    q_bits: Optional[int] = None

    def __post_init__(self):
        if self.q_bits is not None and self.q_bits < 1:
            raise ValueError("q_bits must be >= 1")

    @property
    def continuous(self) -> bool:
        return self.q_bits is None

    @property
    def step(self) -> float:
        return 0.0 if self.q_bits is None else TWO_PI / 2 ** self.q_bits

    @classmethod
    def parse(cls, text: str) -> "PhaseMode":
        t = str(text).strip().lower()
        if t in ("cont", "continuous", "inf"):
            return cls(None)
        if t.startswith("q"):
            t = t[1:]
        return cls(int(t))

    def __str__(self):
        return "continuous" if self.q_bits is None else f"q{self.q_bits}"


CONTINUOUS = PhaseMode()


@dataclass(frozen=True, eq=False)
class ReflectionConfig:
    selection: np.ndarray   # bool (n_tot,)
    phases: np.ndarray      # (n_tot,) in [0, 2 pi)
    reflection: np.ndarray  # complex (n_tot,)

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.selection)


def _wrap(theta):
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def cascaded_coeffs(chan: ChannelRealization, i: int) -> np.ndarray:
    """c_{i,n} = g_tilde[i, n] * f[n]."""
    if not 0 <= i < chan.n_r:
        raise IndexError(f"antenna index {i} out of range [0, {chan.n_r})")
    return chan.g_tilde[i] * chan.f


def select_topk(metric, k: int) -> np.ndarray:
    """Indices of the k largest entries of ``metric``, ties to the smaller index."""
    metric = np.asarray(metric, dtype=float)
    if not 1 <= k <= metric.size:
        raise ValueError(f"k={k} outside [1, {metric.size}]")
    order = np.argsort(-metric, kind="stable")
    return np.sort(order[:k])


def select_topk_continuous(c, k: int) -> np.ndarray:
    return select_topk(np.abs(c), k)


def align_phases(c, selected) -> np.ndarray:
    """Phases that make c_n e^{j theta_n} real and non-negative on ``selected``."""
    c = np.asarray(c)
    theta = np.zeros(c.shape[0])
    sel = np.asarray(selected, dtype=int)
    theta[sel] = _wrap(-np.angle(c[sel]))
    return theta


def quantize_phase(theta, q: int):
    """Mid-rise Q-bit quantizer: cell centres at Delta/2 + k Delta."""
    if q < 1:
        raise ValueError("q must be >= 1")
    step = TWO_PI / 2 ** q
    cell = np.floor(_wrap(np.asarray(theta, dtype=float)) / step)
    cell = np.minimum(cell, 2 ** q - 1)
    out = _wrap(cell * step + 0.5 * step)
    return float(out) if np.ndim(out) == 0 else out


def _config(n_tot, selected, phases):
    selection = np.zeros(n_tot, dtype=bool)
    selection[selected] = True
    theta = np.where(selection, phases, 0.0)
    refl = np.where(selection, np.exp(1j * theta), 0.0)
    return ReflectionConfig(selection, theta, refl)


def configure_mode(chan: ChannelRealization, i: int, k: int, mode: PhaseMode = CONTINUOUS,
                   select_by: str = "inphase") -> ReflectionConfig:
    """Configuration focusing on receive antenna ``i`` with ``k`` active elements.

    In quantized mode ``select_by="inphase"`` ranks elements by
    Re{c e^{j theta_Q}}; ``"magnitude"`` ranks by |c| as in continuous mode.
    """
    c = cascaded_coeffs(chan, i)
    if mode.continuous:
        sel = select_topk(np.abs(c), k)
        return _config(c.size, sel, align_phases(c, sel))
    theta_q = quantize_phase(_wrap(-np.angle(c)), mode.q_bits)
    if select_by == "inphase":
        metric = np.real(c * np.exp(1j * theta_q))
    elif select_by == "magnitude":
        metric = np.abs(c)
    else:
        raise ValueError(f"unknown selection metric {select_by!r}")
    sel = select_topk(metric, k)
    return _config(c.size, sel, theta_q)


def configure_all(chan: ChannelRealization, k: int, mode: PhaseMode = CONTINUOUS,
                  select_by: str = "inphase") -> list:
    return [configure_mode(chan, i, k, mode, select_by) for i in range(chan.n_r)]


def effective_gain(chan: ChannelRealization, config: ReflectionConfig, ell: int) -> complex:
    """H_ell = sum_n c_{ell,n} v_n."""
    return complex(np.dot(cascaded_coeffs(chan, ell), config.reflection))


def gain_matrix(chan: ChannelRealization, configs) -> np.ndarray:
    """(n_r, n_modes) matrix with entry [ell, i] = H_ell^{(i)}."""
    v = np.stack([cfg.reflection for cfg in configs], axis=1)
    return (chan.g_tilde * chan.f) @ v
