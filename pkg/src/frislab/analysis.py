"""Post-selection statistics, MGF-based pairwise error probabilities and the
union bound on BER for the uncorrelated (J = I) surface.

Selected cascaded gains are modelled as i.i.d. draws from the tail event
above a threshold whose probability equals ``p_sel = k_sel / n_tot``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fris import PhaseMode
from .modem import Constellation, FrameConfig, hamming_table, popcount
from .numerics import (DEFAULT_QUAD, DomainError, QuadratureSpec, bessel_k0_k1,
                       double_rayleigh_pdf, double_rayleigh_tail, gauss_legendre,
                       integrate, integrate_tail, solve_root_monotone, tail_threshold)


@dataclass(frozen=True)
class EffectiveStats:
    mu_eff: float
    sigma2_eff: float
    e2_eff: float
    e2b_eff: float
    threshold: float
    p_sel: float
    q_bits: Optional[int] = None

    @property
    def second_moment(self) -> float:
        """Second moment of the coherently combined component."""
        return self.sigma2_eff + self.mu_eff ** 2


# ---------------------------------------------------------------------------
# continuous phase
# ---------------------------------------------------------------------------

def tail_moment_m0(t: float) -> float:
    return float(double_rayleigh_tail(t))


def tail_moment_m2(t: float) -> float:
    """Closed form of the integral of 4 r^3 K0(2 r) over [t, inf)."""
    if t <= 0:
        return 1.0
    k0, k1 = bessel_k0_k1(2.0 * t)
    return 2 * t ** 3 * k1 + 2 * t ** 2 * k0 + 2 * t * k1


def tail_moment_m1(t: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integral of 4 r^2 K0(2 r) over [t, inf), by quadrature."""
    if t <= 0:
        return math.pi / 4
    return integrate_tail(lambda r: r * double_rayleigh_pdf(r), t, spec)


def continuous_stats(p_sel: float, spec: QuadratureSpec = DEFAULT_QUAD) -> EffectiveStats:
    if not 0 < p_sel <= 1:
        raise DomainError("selection ratio must lie in (0, 1]")
    tau = tail_threshold(p_sel)
    m0 = tail_moment_m0(tau)
    m1 = tail_moment_m1(tau, spec)
    m2 = tail_moment_m2(tau)
    mu = m1 / m0
    e2 = m2 / m0
    return EffectiveStats(mu, e2 - mu * mu, e2, 0.0, tau, p_sel, None)


# ---------------------------------------------------------------------------
# quantized phase
# ---------------------------------------------------------------------------

class _QuantizedTail:
    """Incomplete moments of a = r cos(eps), eps ~ U[-step/2, step/2]."""

    def __init__(self, q_bits: int, spec: QuadratureSpec):
        self.step = 2 * math.pi / 2 ** q_bits
        self.half = 0.5 * self.step
        self.spec = spec

    def phi(self, r, tau):
        ratio = np.clip(tau / r, -1.0, 1.0)
        return np.minimum(np.arccos(ratio), self.half)

    def _split(self, weight, tau):
        # phi has a kink where arccos(tau / r) reaches step / 2
        f = lambda r: weight(r, self.phi(r, tau)) * double_rayleigh_pdf(r)
        if tau <= 0:
            return integrate_tail(f, 0.0, self.spec)
        if self.half < 0.5 * math.pi:
            knee = tau / math.cos(self.half)
            return integrate(f, tau, knee, self.spec) + integrate_tail(f, knee, self.spec)
        return integrate_tail(f, tau, self.spec)

    def m0(self, tau):
        return self._split(lambda r, ph: 2 * ph / self.step, tau)

    def m1(self, tau):
        return self._split(lambda r, ph: 2 * r * np.sin(ph) / self.step, tau)

    def m2a(self, tau):
        return self._split(lambda r, ph: r * r * (ph + 0.5 * np.sin(2 * ph)) / self.step, tau)

    def m2r(self, tau):
        return self._split(lambda r, ph: 2 * r * r * ph / self.step, tau)


def quantized_threshold(p_sel: float, q_bits: int, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    if not 0 < p_sel <= 1:
        raise DomainError("selection ratio must lie in (0, 1]")
    if p_sel == 1:
        return 0.0
    qt = _QuantizedTail(q_bits, spec)
    return solve_root_monotone(lambda t: qt.m0(t) - p_sel, 1e-8, 50.0, tol=1e-12)


def quantized_stats(p_sel: float, q_bits: int, spec: QuadratureSpec = DEFAULT_QUAD) -> EffectiveStats:
    if q_bits < 1:
        raise DomainError("q_bits must be >= 1")
    qt = _QuantizedTail(q_bits, spec)
    tau = quantized_threshold(p_sel, q_bits, spec)
    m0 = qt.m0(tau)
    m1 = qt.m1(tau)
    m2a = qt.m2a(tau)
    m2r = qt.m2r(tau)
    mu = m1 / m0
    return EffectiveStats(mu, m2a / m0 - mu * mu, m2r / m0, (m2r - m2a) / m0, tau, p_sel, q_bits)


def effective_stats(p_sel: float, mode: PhaseMode, spec: QuadratureSpec = DEFAULT_QUAD) -> EffectiveStats:
    if mode.continuous:
        return continuous_stats(p_sel, spec)
    return quantized_stats(p_sel, mode.q_bits, spec)


def aggregate(stats: EffectiveStats, k_sel: int):
    """CLT moments (E[H_i], Var[H_i], E|H_l|^2) of the combined gains."""
    if k_sel < 1:
        raise ValueError("k_sel must be >= 1")
    return k_sel * stats.mu_eff, k_sel * stats.sigma2_eff, k_sel * stats.e2_eff


# ---------------------------------------------------------------------------
# MGFs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianQuadraticForm:
    """||y||^2 for y ~ N(mean, covariance)."""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.covariance, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != np.size(self.mean):
            raise ValueError("mean / covariance dimensions disagree")
        if np.max(np.abs(c - c.T)) > 1e-12 * max(1.0, np.max(np.abs(c))):
            raise ValueError("covariance must be symmetric")


def gaussian_quadratic_mgf(form: GaussianQuadraticForm, s):
    """E[exp(-s ||y||^2)].

    Uses [I - (I + 2sC)^{-1}] C^{-1} = 2s (I + 2sC)^{-1}, which stays valid
    for singular C.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("MGF argument must be non-negative")
    lam, vec = np.linalg.eigh(np.asarray(form.covariance, dtype=float))
    lam = np.clip(lam, 0.0, None)
    mu2 = (vec.T @ np.asarray(form.mean, dtype=float)) ** 2
    ss = s_arr[..., None]
    den = 1.0 + 2.0 * ss * lam
    out = np.prod(den, axis=-1) ** -0.5 * np.exp(-np.sum(ss * mu2 / den, axis=-1))
    return float(out) if s_arr.ndim == 0 else out


def case1_form(x: complex, x_hat: complex, stats: EffectiveStats, k_sel: int) -> GaussianQuadraticForm:
    """Gaussian model of the two branches involved in an index error."""
    xr, xi, hr, hi = x.real, x.imag, x_hat.real, x_hat.imag
    ks2 = k_sel * stats.sigma2_eff
    a_xh = 0.5 * k_sel * stats.e2_eff * abs(x_hat) ** 2
    a_x = 0.5 * k_sel * stats.e2_eff * abs(x) ** 2
    c = 0.5 * k_sel * stats.mu_eff ** 2
    s13 = c * (-xr * hr + xi * hi)
    s14 = -c * (xr * hi + xi * hr)
    cov = np.array([
        [ks2 * xr * xr + a_xh, ks2 * xr * xi, s13, s14],
        [ks2 * xr * xi, ks2 * xi * xi + a_xh, s14, -s13],
        [s13, s14, ks2 * hr * hr + a_x, ks2 * hr * hi],
        [s14, -s13, ks2 * hr * hi, ks2 * hi * hi + a_x],
    ])
    mean = k_sel * stats.mu_eff * np.array([xr, xi, -hr, -hi])
    return GaussianQuadraticForm(mean, cov)


def mgf_case1(s, x: complex, x_hat: complex, stats: EffectiveStats, k_sel: int, n_r: int):
    """MGF of the decision distance for an index error (i != i_hat)."""
    if n_r < 2:
        raise DomainError("index errors need n_r >= 2")
    s_arr = np.asarray(s, dtype=float)
    m1 = gaussian_quadratic_mgf(case1_form(complex(x), complex(x_hat), stats, k_sel), s_arr)
    spread = k_sel * stats.e2_eff * (abs(x) ** 2 + abs(x_hat) ** 2)
    return m1 * (1.0 + s_arr * spread) ** -(n_r - 2)


def mgf_case2(s, x: complex, x_hat: complex, stats: EffectiveStats, k_sel: int, n_r: int):
    """MGF of the decision distance for a symbol-only error (i == i_hat)."""
    d2 = abs(complex(x) - complex(x_hat)) ** 2
    if d2 == 0:
        raise DomainError("symbol-only error needs x != x_hat")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("MGF argument must be non-negative")
    mu_h = k_sel * stats.mu_eff
    var_h = k_sel * stats.sigma2_eff
    den = 1.0 + 2.0 * s_arr * var_h * d2
    focused = den ** -0.5 * np.exp(-mu_h ** 2 * d2 * s_arr / den)
    return focused * (1.0 + s_arr * k_sel * stats.e2_eff * d2) ** -(n_r - 1)


CRAIG_EPS = 1e-9


def upep(mgf: Callable, n0: float, method: str = "craig", nodes: int = 64) -> float:
    """Unconditional PEP from the MGF of the decision distance.

    ``craig``: (1/pi) int_0^{pi/2} mgf(1 / (4 n0 sin^2 eta)) d eta by
    Gauss-Legendre; ``two_exp``: mgf(1/(4 n0))/12 + mgf(1/(3 n0))/4.
    """
    if not n0 > 0:
        raise DomainError("noise variance must be positive")
    if method == "craig":
        f = lambda eta: mgf(1.0 / (4.0 * n0 * np.sin(eta) ** 2))
        head = CRAIG_EPS * float(f(np.array(CRAIG_EPS)))
        return (gauss_legendre(f, CRAIG_EPS, 0.5 * math.pi, nodes) + head) / math.pi
    if method == "two_exp":
        return float(mgf(1.0 / (4.0 * n0)) / 12.0 + mgf(1.0 / (3.0 * n0)) / 4.0)
    raise ValueError(f"unknown UPEP method {method!r}")


@dataclass(frozen=True)
class ErrorEvent:
    i: int
    i_hat: int
    x: complex
    x_hat: complex
    hamming: int

    def __post_init__(self):
        if self.i == self.i_hat and self.x == self.x_hat:
            raise ValueError("an error event needs distinct codewords")


def error_events(cfg: FrameConfig, const: Optional[Constellation] = None):
    """All ordered codeword pairs with their Hamming weights."""
    const = const or cfg.constellation()
    m = cfg.m
    ham = hamming_table(cfg.n_r, m)
    for i in range(cfg.n_r):
        for ih in range(cfg.n_r):
            for s in range(m):
                for sh in range(m):
                    if i == ih and s == sh:
                        continue
                    yield ErrorEvent(i, ih, complex(const.points[s]), complex(const.points[sh]),
                                     int(ham[i * m + s, ih * m + sh]))


def union_bound_ber(cfg: FrameConfig, stats: EffectiveStats, n0: float, method: str = "craig",
                    nodes: int = 64, const: Optional[Constellation] = None) -> float:
    """Hamming-weighted union bound on BER.

    PEPs do not depend on which antennas are involved, only on whether the
    index is wrong, so the antenna sums collapse to pair counts.
    """
    const = const or cfg.constellation()
    pts = const.points
    m, n_r, k = cfg.m, cfg.n_r, cfg.k_sel
    idx = np.arange(n_r)
    idx_weight = float(np.sum(popcount(idx[:, None] ^ idx[None, :])))
    n_pairs = n_r * (n_r - 1)
    total = 0.0
    for s in range(m):
        for sh in range(m):
            d_sym = int(popcount(s ^ sh))
            x, xh = complex(pts[s]), complex(pts[sh])
            p1 = upep(lambda z: mgf_case1(z, x, xh, stats, k, n_r), n0, method, nodes)
            total += p1 * (idx_weight + n_pairs * d_sym)
            if s != sh:
                p2 = upep(lambda z: mgf_case2(z, x, xh, stats, k, n_r), n0, method, nodes)
                total += n_r * p2 * d_sym
    return total / (m * n_r * cfg.bits)


def union_bound_curve(cfg: FrameConfig, n_tot: int, snr_db, method: str = "craig",
                      stats: Optional[EffectiveStats] = None) -> np.ndarray:
    """Union bound at each E_s/N0 (dB) for unit-energy symbols."""
    if stats is None:
        stats = effective_stats(cfg.k_sel / n_tot, cfg.phase_mode)
    const = cfg.constellation()
    return np.array([union_bound_ber(cfg, stats, 10 ** (-snr / 10), method, const=const)
                     for snr in np.atleast_1d(snr_db)])


# ---------------------------------------------------------------------------
# identity-correlation ordering
# ---------------------------------------------------------------------------

@dataclass
class OrderingReport:
    s: np.ndarray
    mgf_j: np.ndarray
    mgf_i: np.ndarray
    std_err: np.ndarray       # standard error of the paired difference
    ordered: np.ndarray       # mgf_j >= mgf_i - 3 std_err, per s
    majorizes: bool

    @property
    def ok(self) -> bool:
        return bool(np.all(self.ordered) and self.majorizes)


def majorizes(lam, diag, tol=1e-9) -> bool:
    """True when ``lam`` majorizes ``diag`` (sorted partial sums dominate)."""
    a = np.cumsum(np.sort(np.asarray(lam))[::-1])
    b = np.cumsum(np.sort(np.asarray(diag))[::-1])
    scale = max(1.0, abs(a[-1]))
    return bool(np.all(a >= b - tol * scale) and abs(a[-1] - b[-1]) <= tol * scale)


def event_weights(x: complex, x_hat: complex, v_i: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    """Diagonal of A = diag(x v_i - x_hat v_hat)."""
    return x * np.asarray(v_i) - x_hat * np.asarray(v_hat)


def verify_identity_lower_bound(j_matrix: np.ndarray, a_diag: np.ndarray, n_r: int,
                                rng: np.random.Generator, s_values=(0.1, 1.0, 10.0),
                                n_samples: int = 20000) -> OrderingReport:
    """Monte Carlo check that E_f[(1 + s f^H B_J f)^{-n_r}] >= its J = I value.

    Both expectations use the same draws of f; the reported standard error
    is that of the paired difference.
    """
    j_matrix = np.asarray(j_matrix, dtype=float)
    a_diag = np.asarray(a_diag, dtype=complex)
    n = a_diag.size
    if n > 32:
        raise ValueError("ordering check is meant for n_tot <= 32")
    b_j = np.conj(a_diag)[:, None] * j_matrix * a_diag[None, :]
    lam = np.linalg.eigvalsh(b_j)
    major = majorizes(lam, np.abs(a_diag) ** 2)

    f = (rng.standard_normal((n_samples, n)) + 1j * rng.standard_normal((n_samples, n))) * math.sqrt(0.5)
    u = f * a_diag
    q_j = np.real(np.sum(np.conj(u) * (u @ j_matrix), axis=1))
    q_i = np.sum(np.abs(u) ** 2, axis=1)
    s_arr = np.asarray(s_values, dtype=float)
    mj, mi, se = [], [], []
    for s in s_arr:
        wj = (1.0 + s * q_j) ** -n_r
        wi = (1.0 + s * q_i) ** -n_r
        mj.append(wj.mean())
        mi.append(wi.mean())
        se.append((wj - wi).std(ddof=1) / math.sqrt(n_samples))
    mj, mi, se = map(np.array, (mj, mi, se))
    return OrderingReport(s_arr, mj, mi, se, mj >= mi - 3 * se, major)
