"""Closed-form base cases for the exponentially damped integral.

Each base case is a signed combination of four Legendre-Q values at the
complex points R_{s2 s3} = (-i p^2 + s2 r2 + s3 r3)/r1, multiplied by an
exact power of -i.  All three variants share the same four Q values and
differ only in sign pattern and prefactor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

from .core import (
    BaseCaseVariant,
    Diagnostics,
    EvalResult,
    ExpDamping,
    KernelCache,
    OrderLimitError,
    RadiiTriple,
    check_reality,
)
from .specfun import DEFAULT_POLICY, PrecisionPolicy, legendre_q_sequence

__all__ = ["RArguments", "r_arguments", "exp_base_case", "MAX_BASE_ELL_DEFAULT"]

MAX_BASE_ELL_DEFAULT = 22

_MINUS_I_POW = (1 + 0j, -1j, -1 + 0j, 1j)  # (-i)^k for k mod 4

# (overall sign, power of -i, line weight as function of (s2, s3))
_VARIANT_TABLE = {
    BaseCaseVariant.L00: (-1.0, 1, lambda s2, s3: float(s2 * s3)),
    BaseCaseVariant.Lm10: (-1.0, 0, lambda s2, s3: float(-s3)),
    BaseCaseVariant.Lm1m1: (+1.0, 1, lambda s2, s3: 1.0),
}

_SIGNS = ((-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass(frozen=True)
class RArguments:
    """The four Legendre-Q arguments; first sign on r2, second on r3."""

    rmm: complex
    rmp: complex
    rpm: complex
    rpp: complex

    def by_signs(self, s2: int, s3: int) -> complex:
        return {(-1, -1): self.rmm, (-1, 1): self.rmp,
                (1, -1): self.rpm, (1, 1): self.rpp}[(s2, s3)]


def r_arguments(radii: RadiiTriple, damping: ExpDamping) -> RArguments:
    """R_{s2 s3} = (-i p^2 + s2 r2 + s3 r3) / r1 for the four sign pairs."""
    r1, r2, r3 = radii.as_tuple()
    p2 = damping.p**2
    mk = lambda s2, s3: complex(s2 * r2 + s3 * r3, -p2) / r1
    return RArguments(rmm=mk(-1, -1), rmp=mk(-1, 1), rpm=mk(1, -1), rpp=mk(1, 1))


def _q_values(ell: int, radii, p: float, policy: PrecisionPolicy,
              cache: KernelCache | None, mp_dps: int | None):
    """Q_ell at the four R arguments; shared across variants via the cache."""
    r1, r2, r3 = radii
    vals = {}
    for s2, s3 in _SIGNS:
        if mp_dps is None:
            z = complex(s2 * r2 + s3 * r3, -(p * p)) / r1
            key = (z, ell, policy.rel_tol)
            if cache is not None:
                seq = cache.get_or_compute(
                    cache.q_sequences, key,
                    lambda z=z: legendre_q_sequence(ell, z, policy=policy))
            else:
                seq = legendre_q_sequence(ell, z, policy=policy)
            vals[(s2, s3)] = seq[ell]
        else:
            with mpmath.workdps(mp_dps):
                rr1, rr2, rr3 = mpmath.mpf(r1), mpmath.mpf(r2), mpmath.mpf(r3)
                z = (s2 * rr2 + s3 * rr3 - 1j * mpmath.mpf(p) ** 2) / rr1
                vals[(s2, s3)] = legendre_q_sequence(ell, z, policy=policy)[ell]
    return vals


def base_case_combination(ell: int, variant: BaseCaseVariant, radii, q_values):
    """Assemble the signed Q combination; generic over the value algebra."""
    overall, extra, weight = _VARIANT_TABLE[variant]
    r1, r2, r3 = radii
    pref = overall * _MINUS_I_POW[(ell + extra) % 4] / (4.0 * r1 * r2 * r3)
    total = None
    for s2, s3 in _SIGNS:
        term = weight(s2, s3) * q_values[(s2, s3)]
        total = term if total is None else total + term
    return pref * total


def exp_base_case(ell: int, variant: BaseCaseVariant, radii: RadiiTriple,
                  damping: ExpDamping, *,
                  policy: PrecisionPolicy = DEFAULT_POLICY,
                  cache: KernelCache | None = None,
                  max_ell: int = MAX_BASE_ELL_DEFAULT) -> EvalResult:
    """One exponential-damping base case as a real number with diagnostics.

    The result is provably real; the imaginary residual is kept as a
    diagnostic and checked against max(1e-12, 1e-10 |value|).  When the Q
    combination cancels by more than the policy threshold the evaluation is
    re-run at escalated precision.
    """
    if ell < 0 or int(ell) != ell:
        raise OrderLimitError("base-case order must be >= 0")
    if ell > max_ell:
        raise OrderLimitError(
            f"base-case order {ell} exceeds cap {max_ell}; raise max_ell to override")
    r = radii.as_tuple()
    p = damping.p
    diag = Diagnostics(base_case_count=1)

    qv = _q_values(ell, r, p, policy, cache, None)
    raw = base_case_combination(ell, variant, r, qv)
    max_term = max(abs(q) for q in qv.values()) / (4.0 * r[0] * r[1] * r[2])
    diag.max_abs_term = max_term

    ratio = max_term / max(abs(raw.real), 1e-300)
    im_bad = abs(raw.imag) > 0.25 * max(1e-12, 1e-10 * abs(raw.real))
    if ratio > policy.cancellation_threshold or im_bad:
        dps = min(300, int(16 + math.log10(max(ratio, 1.0)) + 12))
        for _ in range(3):
            qv_mp = _q_values(ell, r, p, policy, None, dps)
            with mpmath.workdps(dps):
                raw_mp = base_case_combination(ell, variant, r, qv_mp)
            ratio_mp = max_term / max(abs(complex(raw_mp).real), 1e-300)
            needed = int(16 + math.log10(max(ratio_mp, 1.0)) + 12)
            diag.precision_escalations += 1
            diag.working_dps = dps
            if needed <= dps or dps >= 300:
                raw = complex(raw_mp)
                if needed > dps:
                    diag.low_confidence = True
                    diag.notes.append("escalation cap reached")
                break
            dps = min(300, needed)

    if p * p / r[0] < 1e-4:
        diag.low_confidence = True
        diag.notes.append("p^2/r1 < 1e-4: arguments close to the Legendre cut")

    value, resid = check_reality(raw, f"exp_base_case(ell={ell}, {variant.name})")
    return EvalResult(value=value, method="exp-base-case", im_residual=resid,
                      diagnostics=diag)
