"""Higher k-powers by differentiating the closed forms in -p^2.

Each derivative in -p^2 raises the k-power by one (exponential damping) or
two (Gaussian damping).  The derivative is carried by forward-mode jet
arithmetic threaded through the base-case kernels with exact derivative
rules:

  * Legendre Q:   dQ_l/dz from (z^2-1) Q_l' = (l+1)(Q_{l+1} - z Q_l) and the
                  differentiated Legendre ODE for higher orders (the
                  arguments R are affine in s = p^2);
  * Phi family:   d/ds Phi_m(w; s) = Phi_{m+2}(w; s) / (4 s^2);
  * chi family:   d/ds chi_m(w; s) = chi_{m+2}(w; s) / (4 s^2)
                  + i w^{m+2} / (2 sqrt(pi) (m+2) s^{3/2}).

An independent central finite-difference path (Richardson-extrapolated) is
provided as a cross-check.
"""

from __future__ import annotations

import math

import mpmath

from .core import (
    Diagnostics,
    DomainError,
    EvalResult,
    ExpDamping,
    GaussDamping,
    KernelCache,
    RadiiTriple,
    UnsupportedPowerError,
    WeightedIntegralSpec,
    check_reality,
)
from . import expdamp, gaussdamp, recursion
from .jets import Jet
from .specfun import (
    DEFAULT_POLICY,
    PrecisionPolicy,
    gaussian_moment_integral,
    legendre_q_derivative_table,
)

__all__ = ["evaluate_weighted", "finite_difference_weighted", "MAX_DERIVATIVE_ORDER"]

MAX_DERIVATIVE_ORDER = 6


def _derivative_order(spec: WeightedIntegralSpec) -> int:
    if spec.damping.kind == "exp":
        if spec.n < 2:
            raise UnsupportedPowerError(
                "exponential route requires n >= 2 (lower powers are out of scope)")
        return spec.n - 2
    if spec.n < 2 or spec.n % 2 != 0:
        raise UnsupportedPowerError(
            "Gaussian recursion route requires even n >= 2; odd/zero powers "
            "go through the direct nested-sum route (hankelbowman)")
    return (spec.n - 2) // 2


# ---------------------------------------------------------------------------
# Jet lifts of the base-case kernels
# ---------------------------------------------------------------------------

def _q_value_jets(ell, radii, s_jet: Jet, policy, mp_dps=None):
    """Jets of Q_ell(R_{s2 s3}(s)) for the four sign pairs; R affine in s."""
    r1, r2, r3 = radii
    d = s_jet.order
    out = {}
    for s2, s3 in ((-1, -1), (-1, 1), (1, -1), (1, 1)):
        a = -1j / r1                       # dR/ds
        if mp_dps is None:
            z0 = complex(s2 * r2 + s3 * r3, -s_jet.c[0].real
                         if isinstance(s_jet.c[0], complex) else -s_jet.c[0]) / r1
            table = legendre_q_derivative_table(ell, z0, d, policy=policy)
        else:
            with mpmath.workdps(mp_dps):
                s0v = s_jet.c[0]
                z0 = (s2 * mpmath.mpf(r2) + s3 * mpmath.mpf(r3)
                      - 1j * mpmath.re(s0v)) / mpmath.mpf(r1)
                table = legendre_q_derivative_table(ell, z0, d, policy=policy)
        # composition with the affine argument: c_j = Q^{(j)}(z0) a^j / j!
        coeffs = []
        fact = 1.0
        apow = 1.0 + 0.0j
        for j in range(d + 1):
            if j > 0:
                fact *= j
                apow *= a
            coeffs.append(table[j][ell] * apow / fact)
        out[(s2, s3)] = Jet(coeffs)
    return out


def _phi_jet(m: int, w: float, s_jet: Jet, policy, cache, mp_dps=None) -> Jet:
    """Jet of Phi_m(w; s) using the family-shift derivative rule."""
    d = s_jet.order
    s0 = s_jet.c[0]
    if mp_dps is None:
        p0 = math.sqrt(s0.real if isinstance(s0, complex) else s0)
        key = (m, abs(w), p0, 0)
        if cache is not None:
            mag = cache.get_or_compute(
                cache.phi, key,
                lambda: gaussian_moment_integral(m, abs(w), p0, policy=policy))
        else:
            mag = gaussian_moment_integral(m, abs(w), p0, policy=policy)
    else:
        with mpmath.workdps(mp_dps):
            p0 = mpmath.sqrt(mpmath.mpf(float(getattr(s0, 'real', s0))))
            key = (m, abs(w), float(p0), mp_dps)
            if cache is not None:
                mag = cache.get_or_compute(
                    cache.phi, key,
                    lambda: gaussian_moment_integral(m, mpmath.mpf(abs(w)), p0,
                                                     policy=policy))
            else:
                mag = gaussian_moment_integral(m, mpmath.mpf(abs(w)), p0,
                                               policy=policy)
    value0 = mag if (w >= 0 or m % 2 == 1) else -mag
    if d == 0:
        return Jet([value0])
    shrunk = Jet(s_jet.c[:-1])
    dphi = _phi_jet(m + 2, w, shrunk, policy, cache, mp_dps) / (4.0 * shrunk * shrunk)
    return Jet.from_derivative(value0, dphi)


def _chi_jet(m: int, w: float, s_jet: Jet, policy, cache, chi0_fn, mp_dps=None) -> Jet:
    """Jet of chi_m(w; s); chi0_fn(m, w) supplies the point value."""
    d = s_jet.order
    value0 = chi0_fn(m, w)
    if d == 0:
        return Jet([value0])
    shrunk = Jet(s_jet.c[:-1])
    rec = _chi_jet(m + 2, w, shrunk, policy, cache, chi0_fn, mp_dps) \
        / (4.0 * shrunk * shrunk)
    s32 = shrunk * shrunk.sqrt()
    extra = (1j * w ** (m + 2) / (2.0 * math.sqrt(math.pi) * (m + 2))) / s32
    return Jet.from_derivative(value0, rec + extra)


# ---------------------------------------------------------------------------
# Weighted evaluation
# ---------------------------------------------------------------------------

def evaluate_weighted(spec: WeightedIntegralSpec, *,
                      policy: PrecisionPolicy = DEFAULT_POLICY,
                      cache: KernelCache | None = None,
                      max_order: int = recursion.MAX_ORDER_DEFAULT,
                      max_base_ell: int = recursion.MAX_BASE_ELL_DEFAULT) -> EvalResult:
    """k^n-weighted integral via d-fold differentiation of the n=2 result.

    d = n-2 (exponential) or (n-2)/2 (Gaussian, even n).  d = 0 falls
    through to recursion.evaluate unchanged.
    """
    d = _derivative_order(spec)
    if d > MAX_DERIVATIVE_ORDER:
        raise DomainError(
            f"derivative order {d} exceeds cap {MAX_DERIVATIVE_ORDER}; "
            "use the quadrature oracle for such powers")
    base_spec = WeightedIntegralSpec(spec.orders, spec.radii, spec.damping, 2)
    if d == 0:
        res = recursion.evaluate(base_spec, policy=policy, cache=cache,
                                 max_order=max_order, max_base_ell=max_base_ell)
        res.method = f"paramdiff-{spec.damping.kind}"
        return res

    # escalation decision comes from the n=2 evaluation
    probe = recursion.evaluate(base_spec, policy=policy, cache=cache,
                               max_order=max_order, max_base_ell=max_base_ell)
    mp_dps = None
    if probe.diagnostics.precision_escalations:
        mp_dps = max(40, probe.diagnostics.working_dps + 10 * d)
        mp_dps = 20 * ((mp_dps + 19) // 20)

    diag = Diagnostics()
    diag.merge(probe.diagnostics)
    p = spec.damping.p
    s0 = p * p
    kind = spec.damping.kind

    def leaf(ell, variant, r):
        s_jet = Jet.variable(s0 + 0.0j, d) if mp_dps is None else \
            Jet.variable(mpmath.mpc(s0), d)
        if kind == "exp":
            qj = _q_value_jets(ell, r, s_jet, policy, mp_dps)
            return expdamp.base_case_combination(ell, variant, r, qj)
        damping = GaussDamping(p)

        if mp_dps is None:
            def chi0(m, w):
                key = (m, abs(w), p, 0)
                if cache is not None:
                    mag = cache.get_or_compute(
                        cache.chi, key,
                        lambda m=m, w=w: gaussdamp.chi_factor(m, abs(w), damping,
                                                              policy=policy))
                else:
                    mag = gaussdamp.chi_factor(m, abs(w), damping, policy=policy)
                return mag if (w >= 0 or m % 2 == 0) else -mag
        else:
            def chi0(m, w):
                key = (m, abs(w), p, mp_dps)
                if cache is not None:
                    mag = cache.get_or_compute(
                        cache.chi, key,
                        lambda m=m, w=w: gaussdamp._chi_mp(
                            m, abs(w), mpmath.mpf(p), mp_dps))
                else:
                    mag = gaussdamp._chi_mp(m, abs(w), mpmath.mpf(p), mp_dps)
                return mag if (w >= 0 or m % 2 == 0) else -mag

        phi = lambda m, w: _phi_jet(m, w, s_jet, policy, cache, mp_dps)
        chi = lambda m, w: _chi_jet(m, w, s_jet, policy, cache, chi0, mp_dps)
        terms = gaussdamp._base_case_sum(ell, variant, r, phi, chi)
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        # the 1/p = s^{-1/2} prefactor is itself s-dependent
        overall, extra, _ = gaussdamp._VARIANT_TABLE[variant]
        const = overall * gaussdamp._MINUS_I_POW[(ell + extra) % 4] \
            * math.sqrt(math.pi) / (16.0 * r[1] * r[2]) / (2.0**ell)
        return total * const * s_jet.sqrt().reciprocal()

    ctx = mpmath.workdps(mp_dps) if mp_dps else None
    if ctx:
        ctx.__enter__()
    try:
        root, _ = recursion.evaluate_generic(spec.orders, spec.radii.as_tuple(),
                                             leaf, max_base_ell=max_base_ell)
        coeff = root.c[d]
        raw = complex(coeff) * math.factorial(d) * (-1.0) ** d
    finally:
        if ctx:
            ctx.__exit__(None, None, None)
    if mp_dps:
        diag.precision_escalations += 1
        diag.working_dps = max(diag.working_dps, mp_dps)

    value, resid = check_reality(raw, f"paramdiff({spec.orders}, n={spec.n})",
                                 bound_abs=1e-10, bound_rel=1e-8)
    return EvalResult(value=value, method=f"paramdiff-{kind}",
                      im_residual=resid, diagnostics=diag)


# ---------------------------------------------------------------------------
# Finite-difference cross-check path
# ---------------------------------------------------------------------------

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def finite_difference_weighted(spec: WeightedIntegralSpec, *,
                               policy: PrecisionPolicy = DEFAULT_POLICY,
                               cache: KernelCache | None = None) -> float:
    """Richardson-extrapolated central differences in s = p^2.

    Independent of the jet path: only recursion.evaluate at shifted damping
    values is used.  Supports derivative orders 1..4.
    """
    d = _derivative_order(spec)
    if d == 0:
        return recursion.evaluate(
            WeightedIntegralSpec(spec.orders, spec.radii, spec.damping, 2),
            policy=policy, cache=cache).value
    if d not in _STENCILS:
        raise DomainError("finite-difference check supports derivative order <= 4")
    p = spec.damping.p
    s0 = p * p
    make = ExpDamping if spec.damping.kind == "exp" else GaussDamping

    def g(s):
        dmp = make(math.sqrt(s))
        return recursion.evaluate(
            WeightedIntegralSpec(spec.orders, spec.radii, dmp, 2),
            policy=policy, cache=cache).value

    def stencil(h):
        tot = 0.0
        for off, w in _STENCILS[d]:
            tot += w * g(s0 + off * h)
        return tot / h**d

    h = max(1e-4, 1e-3 * s0)
    h = min(h, s0 / 4.0)
    d_h = stencil(h)
    d_h2 = stencil(h / 2.0)
    richardson = (4.0 * d_h2 - d_h) / 3.0
    return richardson * (-1.0) ** d
