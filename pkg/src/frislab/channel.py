"""FRIS geometry, Jakes spatial correlation and cascaded channel sampling.

Spacings are in wavelengths. Elements are numbered row-major,
``n = j * n_x + i`` for grid coordinate ``(i, j)`` with ``i < n_x``,
``j < n_z``; indices are 0-based throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DomainError, bessel_j0

EIG_CLAMP = 1e-10
EIG_FAIL = 1e-6


class ModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class FrisGeometry:
    n_x: int
    n_z: int
    d_x: float
    d_z: float

    def __post_init__(self):
        if self.n_x < 1 or self.n_z < 1:
            raise ValueError("grid dimensions must be positive")
        if not (self.d_x > 0 and self.d_z > 0):
            raise ValueError("element spacings must be positive")

    @classmethod
    def from_aperture(cls, n_x, n_z, w_x, w_z):
        """Grid spanning a (w_x, w_z) aperture, d = W / (N - 1)."""
        d_x = w_x / (n_x - 1) if n_x > 1 else 0.5
        d_z = w_z / (n_z - 1) if n_z > 1 else 0.5
        return cls(n_x, n_z, d_x, d_z)

    @property
    def n_tot(self) -> int:
        return self.n_x * self.n_z

    def coords(self, n):
        """Grid coordinate (i, j) of element ``n``."""
        n = np.asarray(n)
        if np.any((n < 0) | (n >= self.n_tot)):
            raise IndexError(f"element index out of range [0, {self.n_tot})")
        return n % self.n_x, n // self.n_x

    def positions(self) -> np.ndarray:
        """(n_tot, 2) array of element positions in wavelengths."""
        i, j = self.coords(np.arange(self.n_tot))
        return np.column_stack([i * self.d_x, j * self.d_z])


def element_distance(geom: FrisGeometry, p: int, q: int) -> float:
    ip, jp = geom.coords(p)
    iq, jq = geom.coords(q)
    return float(np.hypot(geom.d_x * (ip - iq), geom.d_z * (jp - jq)))


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    j_matrix: np.ndarray
    sqrt_factor: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def n_tot(self) -> int:
        return self.j_matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.j_matrix, np.eye(self.n_tot)))

    def low_rank_factor(self, rel_cutoff=1e-13):
        """(r, n_tot) matrix L with L^T L = J up to eigenvalues below cutoff.

        ``G' L`` with G' having r i.i.d. CN(0, 1) columns has the same law as
        ``G J^{1/2}`` (up to the discarded spectrum), at r/n_tot of the cost.
        """
        lam = self.eigenvalues
        keep = lam > rel_cutoff * lam.max()
        return (self.eigenvectors[:, keep] * np.sqrt(lam[keep])).T.copy()


def _eig_psd(j):
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(j))))
    if np.max(np.abs(j - j.T)) > 1e-10 * scale:
        raise DomainError("matrix is not symmetric")
    lam, u = np.linalg.eigh(0.5 * (j + j.T))
    return lam, u


def psd_sqrt(j: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root U sqrt(max(L, 0)) U^T."""
    lam, u = _eig_psd(np.asarray(j, dtype=float))
    if lam.min() < -EIG_CLAMP * max(1.0, lam.max()):
        raise DomainError(f"matrix has eigenvalue {lam.min():.3g} < 0")
    root = (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.T
    return 0.5 * (root + root.T)


def correlation_from_matrix(j: np.ndarray) -> CorrelationModel:
    j = np.asarray(j, dtype=float)
    lam, u = _eig_psd(j)
    if lam.min() < -EIG_FAIL:
        raise ModelError(f"correlation matrix has eigenvalue {lam.min():.3g}")
    lam = np.clip(lam, 0.0, None)
    root = (u * np.sqrt(lam)) @ u.T
    return CorrelationModel(j, 0.5 * (root + root.T), lam, u)


def identity_correlation(n_tot: int) -> CorrelationModel:
    eye = np.eye(n_tot)
    return CorrelationModel(eye, eye.copy(), np.ones(n_tot), eye.copy())


def jakes_matrix(geom: FrisGeometry) -> np.ndarray:
    pos = geom.positions()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    # few distinct distances on a grid; evaluate J0 once per value
    uniq, inv = np.unique(np.round(dist, 12), return_inverse=True)
    vals = bessel_j0(2.0 * np.pi * uniq)
    j = vals[inv].reshape(dist.shape)
    np.fill_diagonal(j, 1.0)
    return j


def build_jakes_correlation(geom: FrisGeometry) -> CorrelationModel:
    return correlation_from_matrix(jakes_matrix(geom))


def build_correlation(geom: FrisGeometry, kind: str = "jakes") -> CorrelationModel:
    if kind == "jakes":
        return build_jakes_correlation(geom)
    if kind == "identity":
        return identity_correlation(geom.n_tot)
    raise ValueError(f"unknown correlation model {kind!r}")


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    f: np.ndarray        # (n_tot,)
    g: np.ndarray        # (n_r, n_tot)
    g_tilde: np.ndarray  # (n_r, n_tot), g @ sqrt_factor

    @property
    def n_r(self) -> int:
        return self.g.shape[0]

    @property
    def n_tot(self) -> int:
        return self.f.shape[0]


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: two independent N(0, 1/2) draws per entry."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample_channels(rng: np.random.Generator, geom: FrisGeometry, n_r: int,
                    corr: CorrelationModel) -> ChannelRealization:
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    if corr.n_tot != geom.n_tot:
        raise ValueError("correlation model does not match geometry")
    f = complex_normal(rng, (geom.n_tot,))
    g = complex_normal(rng, (n_r, geom.n_tot))
    return ChannelRealization(f, g, g @ corr.sqrt_factor)
