"""Brute-force reference integration.

Two independent ground-truth paths:

* `quadrature_eval` integrates the damped triple-sBF integrand directly on
  [0, k_max] with oscillation-aligned panels and an embedded Gauss-Legendre
  pair, refining adaptively until the requested tolerance is met.
* `cubature_q` evaluates the defining triple q-integrals of the nested-sum
  method by tensor-product quadrature over [-1, 1]^3.

Both exist solely to validate the analytic routes; neither shares any code
with them (spherical Bessel and confluent-hypergeometric values come from
scipy here, never from the package's own kernels).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import hyp1f1, spherical_jn

from .core import (
    CostLimitError,
    DomainError,
    ExpDamping,
    GaussDamping,
    ToleranceUnreachableError,
    WeightedIntegralSpec,
)
from .specfun import gauss_legendre_nodes, minus_one_power

__all__ = ["QuadratureReport", "quadrature_eval", "cubature_q", "integrand"]


@dataclass(frozen=True)
class QuadratureReport:
    """Outcome of one adaptive quadrature run."""

    value: float
    error_estimate: float
    intervals_used: int
    truncation_point: float


# ---------------------------------------------------------------------------
# Integrand and tail bounds
# ---------------------------------------------------------------------------

def integrand(spec: WeightedIntegralSpec, k: np.ndarray) -> np.ndarray:
    """k^n * damping(k) * j_l1(k r1) j_l2(k r2) j_l3(k r3), vectorized."""
    k = np.asarray(k, dtype=float)
    r = spec.radii
    if isinstance(spec.damping, ExpDamping):
        damp = np.exp(-spec.damping.p**2 * k)
    else:
        damp = np.exp(-((spec.damping.p * k) ** 2))
    out = np.where(k == 0.0, 0.0 if spec.n > 0 else 1.0, k) ** spec.n * damp
    for ell, radius in zip(spec.orders, r.as_tuple()):
        out = out * spherical_jn(ell, k * radius)
    return out


def _tail_bound(spec: WeightedIntegralSpec, k_max: float) -> float:
    """Bound on |int_{k_max}^inf integrand| using |j_l(x)| <= min(1, 1.6/x)."""
    r = spec.radii.as_tuple()
    amp = 1.0
    decay = 0  # net power of k in the envelope beyond k_max
    for radius in r:
        if k_max * radius > 1.6:
            amp *= 1.6 / radius
            decay += 1
        # else: bounded by 1, no k decay from this factor
    m = spec.n - decay  # envelope ~ amp * k^m * damping
    p = spec.damping.p
    if isinstance(spec.damping, ExpDamping):
        a = p * p
        # int_K^inf k^m e^{-a k} dk  <=  K^m e^{-aK} / a * sum_{j} (m/(aK))^j ...
        # crude geometric bound valid once aK > 2 max(m, 1):
        x = a * k_max
        if x < 2 * max(m, 1):
            return math.inf
        log_term = m * math.log(k_max) - x if k_max > 0 else -x
        if log_term > 700:
            return math.inf
        return amp * math.exp(log_term) / a * 2.0
    # Gaussian: int_K^inf k^m e^{-(pk)^2} dk <= K^{m-1} e^{-(pK)^2}/(2 p^2) * 2
    x = (p * k_max) ** 2
    if x < max(m, 2):
        return math.inf
    log_term = (m - 1) * math.log(k_max) - x if k_max > 0 else -x
    if log_term > 700:
        return math.inf
    return amp * math.exp(log_term) / (2 * p * p) * 2.0


def _choose_k_max(spec: WeightedIntegralSpec, abs_tol: float) -> float:
    p = spec.damping.p
    if isinstance(spec.damping, ExpDamping):
        k_max = max(8.0, 45.0 / (p * p))
    else:
        k_max = max(8.0, 7.0 / p)
    while _tail_bound(spec, k_max) > abs_tol and k_max < 1e9:
        k_max *= 1.5
    return k_max


# ---------------------------------------------------------------------------
# Adaptive panel quadrature
# ---------------------------------------------------------------------------

def _panel_pair(spec, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(coarse, fine) Gauss-Legendre estimates for a batch of panels."""
    x24, w24 = gauss_legendre_nodes(24)
    x48, w48 = gauss_legendre_nodes(48)
    half = 0.5 * (hi - lo)[:, None]
    mid = 0.5 * (hi + lo)[:, None]
    f24 = integrand(spec, mid + half * x24[None, :])
    f48 = integrand(spec, mid + half * x48[None, :])
    coarse = (f24 * w24[None, :]).sum(axis=1) * half[:, 0]
    fine = (f48 * w48[None, :]).sum(axis=1) * half[:, 0]
    return coarse, fine


def quadrature_eval(spec: WeightedIntegralSpec, tol: float = 1e-10,
                    max_splits: int = 4000) -> QuadratureReport:
    """Adaptive oscillation-aligned quadrature of the damped triple-sBF integral.

    `tol` is interpreted relative to the integral's own scale (the damping
    tail cut and the refinement target both scale with the running estimate),
    so very small integrals are still resolved to ~tol relative.
    """
    if not (1e-12 <= tol <= 1e-4):
        raise DomainError("oracle tolerance must lie in [1e-12, 1e-4]")

    r = spec.radii.as_tuple()
    width = math.pi / max(r)

    # bootstrap scale estimate with a damping-only k_max
    k_max = _choose_k_max(spec, abs_tol=1e-300)
    # panels aligned to the sBF oscillation scale
    n_panels = int(math.ceil(k_max / width))
    if n_panels > 40000:
        n_panels = 40000
        width = k_max / n_panels
    edges = np.arange(n_panels + 1) * width
    edges[-1] = k_max

    lo, hi = edges[:-1], edges[1:]
    coarse, fine = _panel_pair(spec, lo, hi)
    scale = float(np.abs(fine).sum())
    value = math.fsum(fine.tolist())
    abs_tol = tol * max(abs(value), 1e-3 * scale, 1e-300)

    # extend k_max if the tail bound is not yet below tolerance
    while _tail_bound(spec, k_max) > 0.5 * abs_tol and k_max < 1e9:
        new_k_max = k_max * 1.5
        n_extra = int(math.ceil((new_k_max - k_max) / width))
        extra_edges = k_max + np.arange(1, n_extra + 1) * width
        lo2 = np.concatenate(([k_max], extra_edges[:-1]))
        hi2 = extra_edges
        c2, f2 = _panel_pair(spec, lo2, hi2)
        lo = np.concatenate([lo, lo2])
        hi = np.concatenate([hi, hi2])
        coarse = np.concatenate([coarse, c2])
        fine = np.concatenate([fine, f2])
        k_max = float(hi[-1])
        value = math.fsum(fine.tolist())
        abs_tol = tol * max(abs(value), 1e-3 * scale, 1e-300)

    # adaptive refinement on the embedded-pair error
    heap = [(-abs(c - f), i) for i, (c, f) in enumerate(zip(coarse, fine))]
    heapq.heapify(heap)
    panels: dict[int, tuple[float, float, float, float]] = {
        i: (lo[i], hi[i], float(fine[i]), abs(float(coarse[i] - fine[i])))
        for i in range(len(lo))
    }
    next_id = len(lo)
    splits = 0
    tail = _tail_bound(spec, k_max)
    while sum(p[3] for p in panels.values()) + tail > abs_tol and splits < max_splits:
        if not heap:
            break
        _, idx = heapq.heappop(heap)
        if idx not in panels:
            continue
        plo, phi, _, _ = panels.pop(idx)
        mid = 0.5 * (plo + phi)
        clo, flo = _panel_pair(spec, np.array([plo, mid]), np.array([mid, phi]))
        for j in range(2):
            pid = next_id
            next_id += 1
            seg = (plo, mid, float(flo[j]), abs(float(clo[j] - flo[j]))) if j == 0 else (
                mid, phi, float(flo[j]), abs(float(clo[j] - flo[j])))
            panels[pid] = seg
            heapq.heappush(heap, (-seg[3], pid))
        splits += 1
        value = math.fsum(p[2] for p in sorted(panels.values()))
        abs_tol = tol * max(abs(value), 1e-3 * scale, 1e-300)

    ordered = sorted(panels.values())
    value = math.fsum(p[2] for p in ordered)
    err = sum(p[3] for p in ordered) + tail
    if err > tol * max(abs(value), 1e-3 * scale, 1e-300) * 4.0:
        raise ToleranceUnreachableError(
            f"quadrature stalled at error {err:.3e} for target {abs_tol:.3e}",
            best_value=value, best_error=err,
        )
    return QuadratureReport(value=value, error_estimate=err,
                            intervals_used=len(ordered), truncation_point=k_max)


# ---------------------------------------------------------------------------
# Tensor-product cubature of the defining q-integrals
# ---------------------------------------------------------------------------

def _q_integrand_values(spec: WeightedIntegralSpec, which: str, zeta: int,
                        n_nodes: int) -> complex:
    l1, l2, l3 = spec.orders
    r1, r2, r3 = spec.radii.as_tuple()
    p = spec.damping.p
    n = spec.n
    big_l = l1 + l2 + l3
    alpha = n + big_l - zeta

    x, w = gauss_legendre_nodes(n_nodes)
    q1 = x[:, None, None]
    q2 = x[None, :, None]
    q3 = x[None, None, :]
    s123 = r1 * q1 + r2 * q2 + r3 * q3
    weight = ((1 - q1**2) ** l1) * ((1 - q2**2) ** l2) * ((1 - q3**2) ** l3)
    wgt3 = w[:, None, None] * w[None, :, None] * w[None, None, :]

    if which == "I_pl":
        vals = weight * np.exp(-((s123 / (2 * p)) ** 2)) * s123**zeta
        total = float((vals * wgt3).sum())
        return math.gamma((alpha + 1) / 2.0) * total
    if which == "I_hg":
        hyp = hyp1f1(1.0, (alpha + 3) / 2.0, -((s123 / (2 * p)) ** 2))
        vals = weight * s123 ** (n + big_l + 1) * hyp
        total = float((vals * wgt3).sum())
        # same resolved branch convention as the analytic route:
        # (-1)^{(alpha+1)/2} read as e^{-i pi (alpha+1)/2}
        pref = (2.0 / (alpha + 1)) * minus_one_power(-(alpha + 1) / 2.0) \
            * (2 * p) ** (-(alpha + 1))
        return pref * total
    raise DomainError(f"unknown q-integral selector {which!r}")


def cubature_q(spec: WeightedIntegralSpec, which: str, zeta: int,
               tol: float = 1e-9) -> complex:
    """Direct 3-D quadrature of the defining I_pl / I_hg q-integrals.

    Only intended for cross-checks at small orders (cost grows with the
    polynomial degree of the weights and the sharpness of the Gaussian).
    """
    if tol < 1e-9:
        raise DomainError("cubature tolerance must be >= 1e-9")
    if max(spec.orders) > 2:
        raise CostLimitError("cubature cross-check restricted to orders <= 2")
    if zeta < 0 or zeta > spec.n + sum(spec.orders):
        raise DomainError("zeta out of range")
    if not isinstance(spec.damping, GaussDamping):
        raise DomainError("q-integrals are defined for Gaussian damping")
    last = _q_integrand_values(spec, which, zeta, 48)
    for n_nodes in (64, 88, 120):
        cur = _q_integrand_values(spec, which, zeta, n_nodes)
        if abs(cur - last) <= tol * max(abs(cur), 1e-300):
            return cur
        last = cur
    raise ToleranceUnreachableError(
        f"cubature of {which} did not reach tol={tol}",
        best_value=abs(last), best_error=abs(cur - last),
    )
