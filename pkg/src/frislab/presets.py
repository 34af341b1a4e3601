"""Experiment presets for the published figure configurations.

Element spacings follow from the aperture as d = W / (N - 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    n_x: int
    n_z: int
    w_x: float
    w_z: float
    n_r: int
    m: int
    k_sel: int
    phase: str = "continuous"
    detector: str = "ml"
    list_size: Optional[int] = None
    correlation: str = "jakes"
    snr_db: tuple = ()

    @property
    def d_x(self) -> float:
        return self.w_x / (self.n_x - 1)

    @property
    def d_z(self) -> float:
        return self.w_z / (self.n_z - 1)

    @property
    def n_tot(self) -> int:
        return self.n_x * self.n_z


def _grid(lo, hi, step=1.0):
    return tuple(float(v) for v in np.round(np.arange(lo, hi + 0.5 * step, step), 6))


def _build():
    out = {}

    def add(p):
        out[p.name] = p

    for n_tot, n_x, n_z, lo in ((64, 8, 8, -36), (128, 16, 8, -40), (256, 16, 16, -44)):
        add(Preset(f"fig2_{n_tot}", f"grid-size gain, ({n_tot};{n_x},{n_z}), RSSK, W=3.5x3.5",
                   n_x, n_z, 3.5, 3.5, n_r=4, m=1, k_sel=64, snr_db=_grid(lo, lo + 20)))
    for layout, (w_x, w_z) in (("dense", (4.5, 2.0)), ("sparse", (9.0, 4.0))):
        for phase in ("cont", "q1", "q2", "q3"):
            add(Preset(f"fig3_{layout}_{phase}",
                       f"quantization, {layout} 25x10 in W=({w_x},{w_z}), K=50, Nr=4, M=4",
                       25, 10, w_x, w_z, n_r=4, m=4, k_sel=50,
                       phase="continuous" if phase == "cont" else phase, snr_db=_grid(-38, -16)))
    for k, (n_x, n_z) in ((20, (10, 6)), (40, (12, 10)), (60, (15, 12)), (80, (16, 15))):
        add(Preset(f"fig4_k{k}", f"fixed ratio 1/3, {n_x}x{n_z} at 2 wavelengths, K={k}",
                   n_x, n_z, 2.0 * (n_x - 1), 2.0 * (n_z - 1), n_r=8, m=4, k_sel=k,
                   phase="q3", snr_db=_grid(-42, -8)))
    for k in (40, 80, 120, 160, 200, 240):
        add(Preset(f"fig5_k{k}", f"activation ratio, 24x10 in W=(46,18), K={k}",
                   24, 10, 46.0, 18.0, n_r=8, m=4, k_sel=k, phase="q3", snr_db=_grid(-46, -20)))
    for L in (1, 2, 3, 5, 16):
        add(Preset(f"fig6_L{L}", f"Top-L list detector, 20x9 in W=(4.5,3), L={L}",
                   20, 9, 4.5, 3.0, n_r=16, m=16, k_sel=70, phase="q2",
                   detector="list", list_size=L, snr_db=_grid(-36, -10)))
    return out


PRESETS = _build()


def list_presets():
    """(name, description) for every preset."""
    return [(p.name, p.description) for p in PRESETS.values()]


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}") from None
