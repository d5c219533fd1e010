"""Numerically stable scalar kernels used throughout the analytic layer.

The resilience/excitation algebra keeps producing the same four ratios of
exponentials (``zeta``, ``zeta_prime``, ``omega``, ``omega_prime``), an
exponential integral, and one auxiliary integral ``L``.  All of them have
removable singularities or catastrophic cancellation near zero, so each one
switches to a short Taylor series below a configurable threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expi


@dataclass(frozen=True)
class StabilityConfig:
    """Switch-over and tolerance knobs for the scalar kernels.

    series_threshold: |y| below which the zeta/omega family uses its Taylor
    series instead of the closed form.  quad_rel_tol: relative tolerance the
    closed-form L must meet against adaptive quadrature of its defining
    integral.  max_quad_subdivisions: subdivision cap handed to that
    quadrature (test oracle only, never the hot path).
    """

    series_threshold: float = 1e-4
    quad_rel_tol: float = 1e-12
    max_quad_subdivisions: int = 200

    def __post_init__(self) -> None:
        if not (self.series_threshold > 0.0):
            raise ValueError("series_threshold must be > 0")
        if not (self.quad_rel_tol > 0.0):
            raise ValueError("quad_rel_tol must be > 0")
        if self.max_quad_subdivisions <= 0:
            raise ValueError("max_quad_subdivisions must be > 0")


DEFAULT_STABILITY = StabilityConfig()


# Scalar evaluators.  These are mirrored verbatim by the compiled kernel, so
# keep the operation order stable: the backend parity tests compare bitwise.

def zeta_scalar(y: float, threshold: float = DEFAULT_STABILITY.series_threshold) -> float:
    """(1 - exp(-y)) / y, filled with 1 at y = 0."""
    if abs(y) < threshold:
        return 1.0 + y * (-1.0 / 2.0 + y * (1.0 / 6.0 + y * (-1.0 / 24.0 + y * (1.0 / 120.0 + y * (-1.0 / 720.0 + y * (1.0 / 5040.0))))))
    return -math.expm1(-y) / y


# The derivative kernels cancel catastrophically near zero in any closed
# form expressible in doubles, so their series regions are widened beyond the
# configurable threshold (the polynomials below are accurate to ~1e-16 there).
ZETA_PRIME_SERIES_RADIUS = 0.1
OMEGA_PRIME_SERIES_RADIUS = 0.15


def zeta_prime_scalar(y: float, threshold: float = DEFAULT_STABILITY.series_threshold) -> float:
    """((1 + y) exp(-y) - 1) / y**2, filled with -1/2 at y = 0."""
    if abs(y) < max(threshold, ZETA_PRIME_SERIES_RADIUS):
        return -1.0 / 2.0 + y * (
            1.0 / 3.0
            + y * (-1.0 / 8.0 + y * (1.0 / 30.0 + y * (-1.0 / 144.0 + y * (1.0 / 840.0 + y * (-1.0 / 5760.0 + y * (1.0 / 45360.0 + y * (-1.0 / 403200.0 + y * (1.0 / 3991680.0))))))))
        )
    return ((1.0 + y) * math.exp(-y) - 1.0) / (y * y)


def omega_scalar(y: float, threshold: float = DEFAULT_STABILITY.series_threshold) -> float:
    """(exp(-y) - 1 + y) / y**2, filled with 1/2 at y = 0."""
    if abs(y) < threshold:
        return 1.0 / 2.0 + y * (-1.0 / 6.0 + y * (1.0 / 24.0 + y * (-1.0 / 120.0 + y * (1.0 / 720.0 + y * (-1.0 / 5040.0 + y * (1.0 / 40320.0))))))
    return (math.expm1(-y) + y) / (y * y)


def omega_prime_scalar(y: float, threshold: float = DEFAULT_STABILITY.series_threshold) -> float:
    """(2(1 - exp(-y)) - y(1 + exp(-y))) / y**3, filled with -1/6 at y = 0."""
    if abs(y) < max(threshold, OMEGA_PRIME_SERIES_RADIUS):
        return -1.0 / 6.0 + y * (
            1.0 / 12.0
            + y * (-1.0 / 40.0 + y * (1.0 / 180.0 + y * (-1.0 / 1008.0 + y * (1.0 / 6720.0 + y * (-1.0 / 51840.0 + y * (1.0 / 453600.0 + y * (-1.0 / 4435200.0 + y * (1.0 / 47900160.0))))))))
        )
    e = math.exp(-y)
    return (2.0 * (1.0 - e) - y * (1.0 + e)) / (y * y * y)


def zeta_family(y, config: StabilityConfig = DEFAULT_STABILITY):
    """Evaluate (zeta, zeta', omega, omega') together.

    Accepts a scalar or an ndarray; rejects non-finite input.
    """
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("zeta_family: input must be finite")
    thr = config.series_threshold
    if arr.ndim == 0:
        v = float(arr)
        return (
            zeta_scalar(v, thr),
            zeta_prime_scalar(v, thr),
            omega_scalar(v, thr),
            omega_prime_scalar(v, thr),
        )
    z = np.empty_like(arr)
    zp = np.empty_like(arr)
    w = np.empty_like(arr)
    wp = np.empty_like(arr)
    flat = arr.ravel()
    zf, zpf, wf, wpf = z.ravel(), zp.ravel(), w.ravel(), wp.ravel()
    for i, v in enumerate(flat):
        zf[i] = zeta_scalar(v, thr)
        zpf[i] = zeta_prime_scalar(v, thr)
        wf[i] = omega_scalar(v, thr)
        wpf[i] = omega_prime_scalar(v, thr)
    return z, zp, w, wp


def zeta_third_scalar(y: float) -> float:
    """Third derivative of zeta; needed by the divided-difference helper."""
    if abs(y) < 0.05:
        # series: sum_{k>=3} (-1)^k k(k-1)(k-2) y^{k-3} / (k+1)!
        acc = 0.0
        term_sign = -1.0
        fact = 24.0  # (k+1)! at k=3
        powy = 1.0
        for k in range(3, 14):
            coef = k * (k - 1) * (k - 2) / fact
            acc += term_sign * coef * powy
            term_sign = -term_sign
            powy *= y
            fact *= k + 2
        return acc
    e = math.exp(-y)
    return -6.0 / y**4 * (1.0 - e * (1.0 + y + y * y / 2.0 + y**3 / 6.0))


def zeta_divided_difference(a: float, b: float) -> float:
    """(zeta(a) - zeta(b)) / (a - b), stable when a and b nearly coincide."""
    d = a - b
    if abs(d) > 1e-5 * (1.0 + max(abs(a), abs(b))):
        return (zeta_scalar(a) - zeta_scalar(b)) / d
    m = 0.5 * (a + b)
    return zeta_prime_scalar(m) + zeta_third_scalar(m) * d * d / 24.0


def expint(y: float) -> float:
    """Exponential integral -PV int_{-y}^{inf} exp(-u)/u du (i.e. Ei(y)).

    y = 0 sits on the logarithmic singularity and is rejected.
    """
    if not math.isfinite(y):
        raise ValueError("expint: input must be finite")
    if y == 0.0:
        raise ValueError("expint: singular at y = 0")
    return float(expi(y))


def L(r: float, lam: float, t: float, config: StabilityConfig = DEFAULT_STABILITY) -> float:
    """r * int_0^t exp(lam*s) / (2 + r*s) ds in closed form.

    Uses the exponential-integral antiderivative for lam != 0 and the exact
    logarithm for lam = 0.  Both Ei arguments carry the sign of lam, so the
    difference never straddles the singularity.
    """
    if not (r > 0.0):
        raise ValueError("L: r must be > 0")
    if t < 0.0:
        raise ValueError("L: t must be >= 0")
    if t == 0.0:
        return 0.0
    if lam == 0.0:
        return math.log1p(r * t / 2.0)
    a = 2.0 * lam / r
    b = lam * (2.0 + r * t) / r
    value = math.exp(-a) * (expint(b) - expint(a))
    if not math.isfinite(value):
        raise OverflowError(f"L({r}, {lam}, {t}) overflowed the Ei branch")
    return value


def L_quadrature(r: float, lam: float, t: float, config: StabilityConfig = DEFAULT_STABILITY) -> float:
    """Adaptive-quadrature evaluation of the integral defining L (test oracle)."""
    from scipy.integrate import quad

    if not (r > 0.0):
        raise ValueError("L_quadrature: r must be > 0")
    if t < 0.0:
        raise ValueError("L_quadrature: t must be >= 0")
    if t == 0.0:
        return 0.0
    val, _ = quad(
        lambda s: r * math.exp(lam * s) / (2.0 + r * s),
        0.0,
        t,
        epsabs=0.0,
        epsrel=config.quad_rel_tol,
        limit=config.max_quad_subdivisions,
    )
    return val


# Vectorized twins for grid evaluation in the analytic layer (the kernels
# keep using the scalar versions above).

def zeta_vec(y, threshold: float = DEFAULT_STABILITY.series_threshold):
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < threshold
    ys = y[small]
    out[small] = 1.0 + ys * (-1.0 / 2.0 + ys * (1.0 / 6.0 + ys * (-1.0 / 24.0 + ys * (1.0 / 120.0 + ys * (-1.0 / 720.0 + ys * (1.0 / 5040.0))))))
    yb = y[~small]
    out[~small] = -np.expm1(-yb) / yb
    return out


def omega_vec(y, threshold: float = DEFAULT_STABILITY.series_threshold):
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < threshold
    ys = y[small]
    out[small] = 1.0 / 2.0 + ys * (-1.0 / 6.0 + ys * (1.0 / 24.0 + ys * (-1.0 / 120.0 + ys * (1.0 / 720.0 + ys * (-1.0 / 5040.0 + ys * (1.0 / 40320.0))))))
    yb = y[~small]
    out[~small] = (np.expm1(-yb) + yb) / (yb * yb)
    return out


def omega_prime_vec(y, threshold: float = DEFAULT_STABILITY.series_threshold):
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = np.abs(y) < max(threshold, OMEGA_PRIME_SERIES_RADIUS)
    ys = y[small]
    out[small] = -1.0 / 6.0 + ys * (
        1.0 / 12.0
        + ys * (-1.0 / 40.0 + ys * (1.0 / 180.0 + ys * (-1.0 / 1008.0 + ys * (1.0 / 6720.0 + ys * (-1.0 / 51840.0 + ys * (1.0 / 453600.0 + ys * (-1.0 / 4435200.0 + ys * (1.0 / 47900160.0))))))))
    )
    yb = y[~small]
    e = np.exp(-yb)
    out[~small] = (2.0 * (1.0 - e) - yb * (1.0 + e)) / (yb * yb * yb)
    return out


def expint_vec(y):
    y = np.asarray(y, dtype=float)
    if np.any(y == 0.0):
        raise ValueError("expint: singular at y = 0")
    return expi(y)


def L_vec(r: float, lam: float, t):
    """Vectorized L over an array of horizons t >= 0."""
    t = np.asarray(t, dtype=float)
    if not (r > 0.0):
        raise ValueError("L_vec: r must be > 0")
    if np.any(t < 0.0):
        raise ValueError("L_vec: t must be >= 0")
    if lam == 0.0:
        return np.log1p(r * t / 2.0)
    a = 2.0 * lam / r
    b = lam * (2.0 + r * t) / r
    out = math.exp(-a) * (expi(b) - expi(a))
    if not np.all(np.isfinite(out)):
        raise OverflowError("L_vec overflowed the Ei branch")
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def gauss_legendre_panels(f, a: float, b: float, n_panels: int) -> float:
    """Composite 24-node Gauss-Legendre quadrature of a smooth scalar function."""
    if b <= a:
        return 0.0
    total = 0.0
    width = (b - a) / n_panels
    for k in range(n_panels):
        lo = a + k * width
        mid = lo + 0.5 * width
        half = 0.5 * width
        vals = f(mid + half * _GL_NODES)
        total += half * float(np.dot(_GL_WEIGHTS, vals))
    return total
