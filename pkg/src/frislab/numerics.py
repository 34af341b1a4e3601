"""Special functions, quadrature and root finding.

Every function here takes and returns plain floats or numpy arrays and keeps
no state, so they are safe to call from any thread.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

EULER_GAMMA = 0.57721566490153286061


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class BracketError(ValueError):
    """Root bracket without a sign change."""


class ConvergenceError(RuntimeError):
    """Quadrature did not reach the requested tolerance.

    ``estimate`` and ``error`` hold the best value and its error estimate.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-11
    absolute_tolerance: float = 1e-14
    max_subdivisions: int = 400

    def __post_init__(self):
        if not (self.relative_tolerance > 0 and self.absolute_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


# ---------------------------------------------------------------------------
# Bessel J0
# ---------------------------------------------------------------------------

def _j0_series(x):
    # ascending series; max term ~ e^x / (2 pi x) so only used for |x| <= 8
    t = -0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 45):
        term = term * t / (k * k)
        total = total + term
    return total


def _j0_miller(x):
    # backward recurrence J_{n-1} = (2n/x) J_n - J_{n+1}, normalised with
    # 1 = J_0 + 2 * sum_k J_{2k}
    n_start = 90
    jp1 = np.zeros_like(x)
    jn = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for n in range(n_start, 0, -1):
        jm1 = (2.0 * n / x) * jn - jp1
        jp1, jn = jn, jm1
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm = norm + 2.0 * jn
        big = np.abs(jn) > 1e250
        if big.any():
            scale = np.where(big, 1e-250, 1.0)
            jn, jp1, norm = jn * scale, jp1 * scale, norm * scale
    norm = norm + jn
    return jn / norm


def _j0_hankel(x):
    # large-argument expansion; terms shrink until k ~ 2x, x > 25 here
    inv = 1.0 / x
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    coef = 1.0
    power = np.ones_like(x)
    for k in range(0, 30):
        if k > 0:
            coef *= -((2 * k - 1) ** 2) / (k * 8.0)
            power = power * inv
        term = coef * power
        if k % 2 == 0:
            p = p + (term if (k // 2) % 2 == 0 else -term)
        else:
            q = q + (term if ((k - 1) // 2) % 2 == 0 else -term)
    chi = x - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j0(x):
    """Bessel function of the first kind, order zero."""
    arr, scalar = _as_array(x)
    if not np.all(np.isfinite(arr)):
        raise DomainError("bessel_j0 requires finite arguments")
    ax = np.abs(arr)
    out = np.empty_like(ax)
    lo = ax <= 8.0
    mid = (ax > 8.0) & (ax <= 25.0)
    hi = ax > 25.0
    if lo.any():
        out[lo] = _j0_series(ax[lo])
    if mid.any():
        out[mid] = _j0_miller(ax[mid])
    if hi.any():
        out[hi] = _j0_hankel(ax[hi])
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# Modified Bessel K0, K1
# ---------------------------------------------------------------------------

def _k01_series(x):
    # x <= 2: ascending series for I0, I1 plus the digamma-weighted sums
    t = 0.25 * x * x
    lg = np.log(0.5 * x)
    i0 = np.ones_like(x)
    s0 = np.zeros_like(x)
    a = np.ones_like(x)           # t^k / (k!)^2
    b = np.ones_like(x)           # t^k / (k! (k+1)!)
    i1_sum = np.ones_like(x)
    harm = 0.0
    s1 = np.full_like(x, 2.0 * (-EULER_GAMMA) + 1.0)   # psi(1) + psi(2) at k=0
    for k in range(1, 30):
        a = a * t / (k * k)
        b = b * t / (k * (k + 1))
        harm += 1.0 / k
        i0 = i0 + a
        s0 = s0 + harm * a
        i1_sum = i1_sum + b
        s1 = s1 + (2.0 * (harm - EULER_GAMMA) + 1.0 / (k + 1)) * b
    k0 = -(lg + EULER_GAMMA) * i0 + s0
    i1 = 0.5 * x * i1_sum
    k1 = 1.0 / x + lg * i1 - 0.25 * x * s1
    return k0, k1


def _k01_steed(x):
    # x > 2: Steed's continued fraction CF2 with Temme's normalisation
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    done = np.zeros(x.shape, dtype=bool)
    for i in range(2, 20000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = np.where(done, 0.0, (b * d - 1.0) * delh)
        h = h + delh
        dels = q * delh
        s = s + dels
        done |= np.abs(dels) < 1e-17 * np.abs(s)
        if done.all():
            break
    h = a1 * h
    k0 = np.sqrt(math.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _k01(x):
    arr, scalar = _as_array(x)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("modified Bessel K requires x > 0")
    k0 = np.empty_like(arr)
    k1 = np.empty_like(arr)
    small = arr <= 2.0
    if small.any():
        k0[small], k1[small] = _k01_series(arr[small])
    if (~small).any():
        k0[~small], k1[~small] = _k01_steed(arr[~small])
    if scalar:
        return float(k0), float(k1)
    return k0, k1


def bessel_k0(x):
    """Modified Bessel function of the second kind, order zero (x > 0)."""
    return _k01(x)[0]


def bessel_k1(x):
    """Modified Bessel function of the second kind, order one (x > 0)."""
    return _k01(x)[1]


def bessel_k0_k1(x):
    return _k01(x)


def double_rayleigh_pdf(r):
    """4 r K0(2 r); density of |g f| for independent unit CN g, f."""
    arr, scalar = _as_array(r)
    out = np.zeros_like(arr)
    pos = arr > 0
    if pos.any():
        out[pos] = 4.0 * arr[pos] * bessel_k0(2.0 * arr[pos])
    return float(out) if scalar else out


def double_rayleigh_tail(t):
    """P(r > t) = 2 t K1(2 t), with the t -> 0 limit 1."""
    arr, scalar = _as_array(t)
    out = np.ones_like(arr)
    pos = arr > 0
    if pos.any():
        out[pos] = 2.0 * arr[pos] * bessel_k1(2.0 * arr[pos])
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG7 = np.zeros(15)
_WG7[[1, 3, 5]] = _WG[:3]
_WG7[7] = _WG[3]
_WG7[[9, 11, 13]] = _WG[2::-1]


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = np.asarray(f(mid + half * _NODES), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    k = half * np.dot(_WK15, vals)
    g = half * np.dot(_WG7, vals)
    return k, abs(k - g)


def _adaptive(f, a, b, spec):
    total, err = _gk15(f, a, b)
    heap = [(-err, a, b, total, err)]
    n = 1
    while err > max(spec.absolute_tolerance, spec.relative_tolerance * abs(total)):
        if n >= spec.max_subdivisions:
            raise ConvergenceError(
                f"quadrature did not converge in {n} subdivisions", total, err)
        _, lo, hi, val, e = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - val
        err += e1 + e2 - e
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        n += 1
        if n % 50 == 0:
            # refresh running sums to shed accumulated rounding
            total = sum(item[3] for item in heap)
            err = sum(item[4] for item in heap)
    return total


def integrate(f: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Adaptive Gauss-Kronrod (7/15) integral of a vectorised ``f`` over [a, b]."""
    if b == a:
        return 0.0
    return _adaptive(f, float(a), float(b), spec)


def integrate_tail(f: Callable, a: float, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integral of ``f`` over [a, inf).

    Maps r = a + u / (1 - u) onto u in [0, 1) and refines adaptively. The
    Kronrod nodes never touch u = 1, so ``f`` is only sampled at finite r.
    """
    a = float(a)

    def mapped(u):
        w = 1.0 - u
        r = a + u / w
        return np.asarray(f(r), dtype=float) / (w * w)

    return _adaptive(mapped, 0.0, 1.0, spec)


@lru_cache(maxsize=32)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(f: Callable, a: float, b: float, n: int = 64) -> float:
    """Fixed n-node Gauss-Legendre estimate of the integral of ``f`` on [a, b]."""
    if n < 2:
        raise ValueError("gauss_legendre needs at least 2 nodes")
    x, w = _legendre(n)
    half = 0.5 * (b - a)
    vals = np.asarray(f(0.5 * (a + b) + half * x), dtype=float)
    return float(half * np.dot(w, vals))


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def solve_root_monotone(g: Callable[[float], float], lo: float = 1e-8, hi: float = 50.0,
                        tol: float = 1e-13) -> float:
    """Root of a continuous monotone ``g`` bracketed by [lo, hi]."""
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    if glo * ghi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: g={glo:.3g}, {ghi:.3g}")
    return brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def tail_threshold(p_sel: float) -> float:
    """Threshold t with 2 t K1(2 t) = p_sel; t = 0 for p_sel = 1."""
    if not 0 < p_sel <= 1:
        raise DomainError("selection ratio must lie in (0, 1]")
    if p_sel == 1:
        return 0.0
    return solve_root_monotone(lambda t: double_rayleigh_tail(t) - p_sel, 1e-8, 50.0)
