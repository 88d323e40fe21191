"""Closed-form base cases for the Gaussian-damped integral.

Structure: a double sum over the falling power series of the Legendre
polynomial (index n) and a binomial expansion (index m), with each term
combining eight signed-corner evaluations of two antiderivatives,

    Phi_m(w)  = int_0^w R^m exp(-(R/2p)^2) dR                  (real)
    chi_m(w)  = int_0^w R^m exp(-(R/2p)^2) erf(-iR/2p) dR      (imaginary)

at the corners w = r_sigma = s1 r1 + s2 r2 + s3 r3.  chi_m has the closed
form -(i/4p) Gamma((m+2)/2) w^{m+2} 2F2~(...)  whose power prefactor
carries the correct parity for negative corners; the incomplete-Gamma form
of Phi_m is valid only for w >= 0, so the parity-corrected
`gaussian_moment_integral` is used instead (for radii with r1 < r2 + r3 and
friends all corners are positive and the two agree exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

from .core import (
    BaseCaseVariant,
    Diagnostics,
    DomainError,
    EvalResult,
    GaussDamping,
    KernelCache,
    OrderLimitError,
    RadiiTriple,
    check_reality,
)
from .specfun import (
    DEFAULT_POLICY,
    PrecisionPolicy,
    gaussian_moment_integral,
    reg_2f2_chi_pattern,
)

__all__ = ["SignedRadiusSum", "g_factor", "chi_factor", "gauss_base_case",
           "MAX_BASE_ELL_DEFAULT"]

MAX_BASE_ELL_DEFAULT = 22

_MINUS_I_POW = (1 + 0j, -1j, -1 + 0j, 1j)

# (overall sign, extra power of -i, line weight over (s2, s3))
_VARIANT_TABLE = {
    BaseCaseVariant.L00: (-1.0, 0, lambda s2, s3: float(s2 * s3)),
    BaseCaseVariant.Lm10: (+1.0, 1, lambda s2, s3: float(s3)),
    BaseCaseVariant.Lm1m1: (+1.0, 0, lambda s2, s3: 1.0),
}


@dataclass(frozen=True)
class SignedRadiusSum:
    """One corner value s1 r1 + s2 r2 + s3 r3 with its sign triple."""

    value: float
    signs: tuple[int, int, int]

    @classmethod
    def from_radii(cls, radii: RadiiTriple, signs: tuple[int, int, int]) -> "SignedRadiusSum":
        r = radii.as_tuple()
        return cls(value=signs[0] * r[0] + signs[1] * r[1] + signs[2] * r[2],
                   signs=signs)


def _rs_value(rs) -> float:
    return rs.value if isinstance(rs, SignedRadiusSum) else float(rs)


def g_factor(m: int, rs, damping: GaussDamping, *,
             policy: PrecisionPolicy = DEFAULT_POLICY) -> float:
    """2^m p^{m+1} Gamma((m+1)/2, (rs/2p)^2)."""
    from .specfun import upper_incomplete_gamma

    if m < 0 or int(m) != m:
        raise DomainError("g_factor requires m >= 0")
    v = _rs_value(rs)
    p = damping.p
    return (2.0**m) * p ** (m + 1) * upper_incomplete_gamma(
        (m + 1) / 2.0, (v / (2 * p)) ** 2, policy=policy)


def chi_factor(m: int, rs, damping: GaussDamping, *,
               policy: PrecisionPolicy = DEFAULT_POLICY) -> complex:
    """-(i/4p) Gamma((m+2)/2) rs^{m+2} 2F2~(1,(m+2)/2; 3/2,(m+4)/2; -(rs/2p)^2).

    Purely imaginary; odd/even in rs according to the power m+2.
    """
    if m < 0 or int(m) != m:
        raise DomainError("chi_factor requires m >= 0")
    v = _rs_value(rs)
    p = damping.p
    if v == 0.0:
        return 0.0 + 0.0j
    f = reg_2f2_chi_pattern(int(m), -((v / (2 * p)) ** 2), policy=policy)
    return -0.25j / p * math.gamma((m + 2) / 2.0) * v ** (m + 2) * f


def _chi_mp(m: int, v, p, dps: int):
    """chi antiderivative at escalated precision (erfi-form quadrature)."""
    with mpmath.workdps(dps):
        v = mpmath.mpf(v)
        p = mpmath.mpf(p)
        if v == 0:
            return mpmath.mpc(0)
        x = (v / (2 * p)) ** 2
        if x <= 200:
            f = mpmath.hyper([1, mpmath.mpf(m + 2) / 2],
                             [mpmath.mpf(3) / 2, mpmath.mpf(m + 4) / 2], -x)
            f = f / (mpmath.gamma(mpmath.mpf(3) / 2) * mpmath.gamma(mpmath.mpf(m + 4) / 2))
            return -0.25j / p * mpmath.gamma(mpmath.mpf(m + 2) / 2) * v ** (m + 2) * f
        integrand = lambda t: t**m * mpmath.exp(-((t / (2 * p)) ** 2)) \
            * mpmath.erfi(t / (2 * p))
        sign = 1 if v > 0 else (-1) ** m
        return -1j * sign * mpmath.quad(integrand, [0, abs(v)])


_SIGN_PAIRS = ((-1, -1), (-1, 1), (1, -1), (1, 1))


def _corner_bracket(m, corner, p, phi, chi):
    """Phi_m(corner) - chi_m(corner) via the cached providers."""
    return phi(m, corner) - chi(m, corner)


def _base_case_sum(ell, variant, radii, phi, chi, term_sink=None):
    """The (n, m, sign)-sum; generic over the value providers.

    phi(m, w) and chi(m, w) must return the two antiderivatives at the
    signed corner w.  `term_sink` receives |term| magnitudes when supplied
    (cancellation accounting).
    """
    r1, r2, r3 = radii
    _, _, weight = _VARIANT_TABLE[variant]
    terms = []
    for nn in range(ell // 2 + 1):
        outer = (-1.0) ** nn * math.comb(ell, nn) * math.comb(2 * (ell - nn), ell) \
            * r1 ** (2 * nn - ell - 1)
        for m in range(ell - 2 * nn + 1):
            mid = outer * math.comb(ell - 2 * nn, m)
            power = ell - 2 * nn - m
            for s2, s3 in _SIGN_PAIRS:
                base = -s2 * r2 - s3 * r3
                if power == 0:
                    pw = 1.0
                elif base == 0.0:
                    continue
                else:
                    pw = base**power
                line = mid * weight(s2, s3) * pw
                for s1 in (1, -1):
                    corner = s1 * r1 + s2 * r2 + s3 * r3
                    term = line * s1 * (phi(m, corner) - chi(m, corner))
                    terms.append(term)
                    if term_sink is not None:
                        term_sink.append(abs(term))
    return terms


def _assemble(ell, variant, radii, p, terms):
    overall, extra, _ = _VARIANT_TABLE[variant]
    r1, r2, r3 = radii
    pref = overall * _MINUS_I_POW[(ell + extra) % 4] * math.sqrt(math.pi) \
        / (16.0 * p * r2 * r3) / (2.0**ell)
    if terms and isinstance(terms[0], (complex, float)):
        re = math.fsum(t.real if isinstance(t, complex) else t for t in terms)
        im = math.fsum(t.imag if isinstance(t, complex) else 0.0 for t in terms)
        return pref * complex(re, im)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return pref * total


def gauss_base_case(ell: int, variant: BaseCaseVariant, radii: RadiiTriple,
                    damping: GaussDamping, *,
                    policy: PrecisionPolicy = DEFAULT_POLICY,
                    cache: KernelCache | None = None,
                    max_ell: int = MAX_BASE_ELL_DEFAULT) -> EvalResult:
    """One Gaussian-damping base case as a real value with diagnostics.

    Terms are summed exactly (Shewchuk-style compensated accumulation); when
    the largest term magnitude exceeds the policy threshold relative to the
    result, the whole sum is recomputed at escalated precision.
    """
    if ell < 0 or int(ell) != ell:
        raise OrderLimitError("base-case order must be >= 0")
    if ell > max_ell:
        raise OrderLimitError(
            f"base-case order {ell} exceeds cap {max_ell}; raise max_ell to override")
    r = radii.as_tuple()
    p = damping.p
    diag = Diagnostics(base_case_count=1)

    def phi(m, w):
        key = (m, abs(w), p, 0)
        if cache is not None:
            mag = cache.get_or_compute(
                cache.phi, key,
                lambda: gaussian_moment_integral(m, abs(w), p, policy=policy))
        else:
            mag = gaussian_moment_integral(m, abs(w), p, policy=policy)
        return mag if (w >= 0 or m % 2 == 1) else -mag

    def chi(m, w):
        key = (m, abs(w), p, 0)
        if cache is not None:
            mag = cache.get_or_compute(
                cache.chi, key,
                lambda: chi_factor(m, abs(w), damping, policy=policy))
        else:
            mag = chi_factor(m, abs(w), damping, policy=policy)
        return mag if (w >= 0 or m % 2 == 0) else -mag

    sizes: list[float] = []
    terms = _base_case_sum(ell, variant, r, phi, chi, term_sink=sizes)
    raw = _assemble(ell, variant, r, p, terms)
    max_term = max(sizes, default=0.0) * math.sqrt(math.pi) / (16.0 * p * r[1] * r[2]) / (2.0**ell)
    diag.max_abs_term = max_term

    ratio = max_term / max(abs(raw.real), 1e-300)
    im_bad = abs(raw.imag) > 0.25 * max(1e-12, 1e-10 * abs(raw.real))
    if ratio > policy.cancellation_threshold or im_bad:
        dps = min(300, int(16 + math.log10(max(ratio, 1.0)) + 12))
        for _ in range(3):
            dps = 20 * ((dps + 19) // 20)  # bucket for cache reuse
            with mpmath.workdps(dps):
                pm = mpmath.mpf(p)

                def phi_mp(m, w):
                    key = (m, abs(w), p, dps)
                    if cache is not None:
                        mag = cache.get_or_compute(
                            cache.phi, key,
                            lambda m=m, w=w: gaussian_moment_integral(
                                m, mpmath.mpf(abs(w)), pm, policy=policy))
                    else:
                        mag = gaussian_moment_integral(m, mpmath.mpf(abs(w)), pm,
                                                       policy=policy)
                    return mag if (w >= 0 or m % 2 == 1) else -mag

                def chi_mp(m, w):
                    key = (m, abs(w), p, dps)
                    if cache is not None:
                        mag = cache.get_or_compute(
                            cache.chi, key,
                            lambda m=m, w=w: _chi_mp(m, abs(w), pm, dps))
                    else:
                        mag = _chi_mp(m, abs(w), pm, dps)
                    return mag if (w >= 0 or m % 2 == 0) else -mag

                terms_mp = _base_case_sum(ell, variant,
                                          tuple(mpmath.mpf(x) for x in r),
                                          phi_mp, chi_mp)
                raw_mp = _assemble(ell, variant, r, p, terms_mp)
                raw_c = complex(raw_mp)
            ratio_mp = max_term / max(abs(raw_c.real), 1e-300)
            needed = int(16 + math.log10(max(ratio_mp, 1.0)) + 12)
            diag.precision_escalations += 1
            diag.working_dps = dps
            if needed <= dps or dps >= 300:
                raw = raw_c
                if needed > dps:
                    diag.low_confidence = True
                    diag.notes.append("escalation cap reached")
                break
            dps = min(300, needed)

    value, resid = check_reality(raw, f"gauss_base_case(ell={ell}, {variant.name})")
    return EvalResult(value=value, method="gauss-base-case", im_residual=resid,
                      diagnostics=diag)
