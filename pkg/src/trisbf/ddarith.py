"""Vectorized double-double arithmetic (~32 significant digits).

Error-free transformations (Knuth two-sum, Dekker split/two-prod) over
numpy arrays; a value is an (hi, lo) pair with hi + lo exact to ~2^-106
relative.  Used by the nested-sum evaluator when alternating-term
cancellation exceeds what float64 can absorb.  Magnitudes here stay far
below the Dekker-split overflow bound (~1e292), so no scaling is needed.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

_SPLITTER = 134217729.0  # 2^27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    # requires |a| >= |b| elementwise (true for normalized intermediates)
    s = a + b
    err = b - (s - a)
    return s, err


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def dd_add(xh, xl, yh, yl):
    s, e = two_sum(xh, yh)
    e = e + xl + yl
    return quick_two_sum(s, e)


def dd_neg(xh, xl):
    return -xh, -xl


def dd_sub(xh, xl, yh, yl):
    return dd_add(xh, xl, -yh, -yl)


def dd_mul(xh, xl, yh, yl):
    p, e = two_prod(xh, yh)
    e = e + (xh * yl + xl * yh)
    return quick_two_sum(p, e)


def dd_mul_float(xh, xl, c):
    p, e = two_prod(xh, c)
    e = e + xl * c
    return quick_two_sum(p, e)


def dd_div_float(xh, xl, d):
    q1 = xh / d
    ph, pl = two_prod(q1, d)
    rh, rl = dd_add(xh, xl, -ph, -pl)
    q2 = (rh + rl) / d
    return quick_two_sum(q1, q2)


def dd_exp_mp(xh, xl):
    """exp(xh+xl) element-wise through mpmath (dd-accurate seed values)."""
    with mpmath.workdps(40):
        vals = [mpmath.exp(mpmath.mpf(float(h)) + mpmath.mpf(float(l)))
                for h, l in zip(np.atleast_1d(xh), np.atleast_1d(xl))]
    return dd_from_mp(vals)


def dd_pow_int_table(base_hi: float, base_lo: float, n_max: int):
    """(base)^k for k = 0..n_max as dd arrays."""
    hi = np.empty(n_max + 1)
    lo = np.empty(n_max + 1)
    hi[0], lo[0] = 1.0, 0.0
    for k in range(1, n_max + 1):
        hi[k], lo[k] = dd_mul(hi[k - 1], lo[k - 1],
                              np.float64(base_hi), np.float64(base_lo))
    return hi, lo


def dd_from_mp(values) -> tuple[np.ndarray, np.ndarray]:
    """Convert an iterable of mpmath numbers to dd (hi, lo) arrays."""
    his, los = [], []
    for v in values:
        h = float(v)
        los.append(float(v - mpmath.mpf(h)))
        his.append(h)
    return np.asarray(his), np.asarray(los)


# ---------------------------------------------------------------------------
# dd-accurate Gauss-Legendre nodes (Newton-refined in mpmath, cached)
# ---------------------------------------------------------------------------

_DD_GL_CACHE: dict = {}


def dd_gauss_legendre(n: int):
    """Nodes/weights on [-1, 1] as dd arrays, accurate to ~1e-32."""
    if n in _DD_GL_CACHE:
        return _DD_GL_CACHE[n]
    x0, _ = np.polynomial.legendre.leggauss(n)
    with mpmath.workdps(42):
        nodes = []
        weights = []
        for xi in x0:
            x = mpmath.mpf(float(xi))
            for _ in range(4):
                p0, p1 = mpmath.mpf(1), x
                for k in range(2, n + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = n * (x * p1 - p0) / (x * x - 1)
                x = x - p1 / dp
            p0, p1 = mpmath.mpf(1), x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = n * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    xh, xl = dd_from_mp(nodes)
    wh, wl = dd_from_mp(weights)
    _DD_GL_CACHE[n] = (xh, xl, wh, wl)
    return _DD_GL_CACHE[n]
