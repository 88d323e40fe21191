"""Shared domain types for the triple spherical-Bessel integral engine.

The integrals evaluated by this package have the form

    f = int_0^inf k^n dk  w(k)  j_l1(k r1) j_l2(k r2) j_l3(k r3)

with damping weight w(k) = exp(-p^2 k) (exponential) or exp(-(p k)^2)
(Gaussian).  Everything downstream (base cases, order recursion, the direct
nested-sum method, grid batching, the quadrature oracle) speaks in terms of
the small value types defined here.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Union


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class TrisbfError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TrisbfError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ArgumentOnCutError(DomainError):
    """Legendre-Q argument on the branch cut [-1, 1]."""


class PoleError(DomainError):
    """A hypergeometric lower parameter is a non-positive integer."""


class NonConvergenceError(TrisbfError, RuntimeError):
    """A series or continued fraction failed to converge within budget."""


class OverflowEscapeError(TrisbfError, OverflowError):
    """An intermediate value exceeded the representable range."""


class RealityViolationError(TrisbfError, ArithmeticError):
    """A provably real result came back with too much imaginary content."""


class OrderLimitError(TrisbfError, ValueError):
    """A spherical-Bessel order exceeds the configured maximum."""


class CostLimitError(TrisbfError, ValueError):
    """A request exceeds the configured combinatorial cost caps."""


class ToleranceUnreachableError(TrisbfError, RuntimeError):
    """The quadrature oracle could not reach the requested tolerance."""

    def __init__(self, message: str, best_value: float, best_error: float):
        super().__init__(message)
        self.best_value = best_value
        self.best_error = best_error


class UnsupportedPowerError(TrisbfError, ValueError):
    """The requested k-power is not reachable on the chosen route."""


# ---------------------------------------------------------------------------
# Damping and radii
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpDamping:
    """Exponential damping weight exp(-p^2 k); p must be nonzero.

    Only p^2 enters the integrand, so the sign of p is irrelevant; it is
    canonicalized to positive.
    """

    p: float

    def __post_init__(self):
        if not (self.p != 0.0 and math.isfinite(self.p)):
            raise DomainError("exponential damping requires finite p != 0")
        object.__setattr__(self, "p", abs(float(self.p)))

    kind = "exp"


@dataclass(frozen=True)
class GaussDamping:
    """Gaussian damping weight exp(-(p k)^2); p must be nonzero."""

    p: float

    def __post_init__(self):
        if not (self.p != 0.0 and math.isfinite(self.p)):
            raise DomainError("Gaussian damping requires finite p != 0")
        object.__setattr__(self, "p", abs(float(self.p)))

    kind = "gauss"


Damping = Union[ExpDamping, GaussDamping]


@dataclass(frozen=True)
class RadiiTriple:
    """The three free sBF arguments.  All strictly positive.

    The closed forms permit r2, r3 of either sign, but every supported use
    case has positive radii, so negative values are rejected instead of
    relying on untested sign flows.
    """

    r1: float
    r2: float
    r3: float

    def __post_init__(self):
        for name in ("r1", "r2", "r3"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"radius {name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, float(v))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r1, self.r2, self.r3)


class BaseCaseVariant(enum.Enum):
    """The three anchor integrals the order recursion bottoms out on.

    L00    <->  orders (ell,  0,  0)
    Lm10   <->  orders (ell, -1,  0)
    Lm1m1  <->  orders (ell, -1, -1)
    """

    L00 = (0, 0)
    Lm10 = (-1, 0)
    Lm1m1 = (-1, -1)

    @property
    def tail_orders(self) -> tuple[int, int]:
        return self.value


OrderTriple = tuple[int, int, int]


def validate_public_orders(orders: OrderTriple) -> OrderTriple:
    """Check the public-boundary invariant: three integers, each >= 0."""
    if len(orders) != 3:
        raise DomainError("orders must be a triple")
    out = []
    for ell in orders:
        if int(ell) != ell or ell < 0:
            raise DomainError(f"public sBF orders must be integers >= 0, got {ell!r}")
        out.append(int(ell))
    return (out[0], out[1], out[2])


# ---------------------------------------------------------------------------
# Full problem statement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedIntegralSpec:
    """One integral: orders, radii, damping kind/parameter and k-power n.

    Route validity:
      * exponential recursion route: n >= 2
      * Gaussian recursion route:    n >= 2 and even
      * direct nested-sum route:     n >= 0 (Gaussian only)
    Validation of the n constraint happens at the route entry points, since
    the same spec object may be fed to different routes.
    """

    orders: OrderTriple
    radii: RadiiTriple
    damping: Damping
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "orders", validate_public_orders(self.orders))
        if not isinstance(self.radii, RadiiTriple):
            object.__setattr__(self, "radii", RadiiTriple(*self.radii))
        if int(self.n) != self.n or self.n < 0:
            raise DomainError("k-power n must be a non-negative integer")
        object.__setattr__(self, "n", int(self.n))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    """Evaluation bookkeeping carried alongside every result."""

    base_case_count: int = 0
    precision_escalations: int = 0
    working_dps: int = 16
    max_abs_term: float = 0.0
    conditioning_warning: bool = False
    low_confidence: bool = False
    notes: list[str] = field(default_factory=list)

    def merge(self, other: "Diagnostics") -> None:
        self.base_case_count += other.base_case_count
        self.precision_escalations += other.precision_escalations
        self.working_dps = max(self.working_dps, other.working_dps)
        self.max_abs_term = max(self.max_abs_term, other.max_abs_term)
        self.conditioning_warning |= other.conditioning_warning
        self.low_confidence |= other.low_confidence
        self.notes.extend(other.notes)


@dataclass
class EvalResult:
    """A real integral value plus method tag and quality diagnostics."""

    value: float
    method: str
    im_residual: float = 0.0
    error_estimate: Optional[float] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def reality_bound(value_abs: float) -> float:
    """Allowed imaginary residual for a provably real result."""
    return max(1e-12, 1e-10 * value_abs)


def check_reality(raw: complex, method: str, bound_abs: float = 1e-12,
                  bound_rel: float = 1e-10) -> tuple[float, float]:
    """Split a complex result into (real value, imaginary residual).

    Raises RealityViolationError when the residual exceeds
    max(bound_abs, bound_rel * |value|).
    """
    value = raw.real
    resid = abs(raw.imag)
    if resid > max(bound_abs, bound_rel * abs(value)):
        raise RealityViolationError(
            f"{method}: imaginary residual {resid:.3e} exceeds bound for value {value:.6e}"
        )
    return value, resid


# ---------------------------------------------------------------------------
# Shared kernel cache (grid evaluation, repeated-spec batches)
# ---------------------------------------------------------------------------

class KernelCache:
    """Optional cross-evaluation cache for special-function kernel values.

    Evaluations are pure, so sharing a cache never changes results; it only
    removes repeated kernel computations.  Inserts are idempotent and guarded
    by a lock so concurrent evaluation threads can share one instance.
    """

    def __init__(self):
        self.lock = threading.Lock()
        self.q_sequences: dict = {}      # (z, policy_key) -> list of Q_l values
        self.phi: dict = {}              # (a, w, p, dps) -> float
        self.chi: dict = {}              # (m, rs, p, dps) -> complex
        self.values: dict = {}           # canonical spec key -> EvalResult value

    def get_or_compute(self, table: dict, key, compute):
        with self.lock:
            if key in table:
                return table[key]
        val = compute()
        with self.lock:
            table.setdefault(key, val)
            return table[key]
