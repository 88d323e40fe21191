"""Order reduction of (l1, l2, l3) integrals to base cases.

The three-term sBF identity lifts to the integral recursion

    f_{a, b, c} = (r_A/r_B) (2b-1)/(2a+1) (f_{a-1,b-1,c} + f_{a+1,b-1,c})
                  - f_{a,b-2,c}

applied with the anchor A = slot of the largest order and B = the larger of
the remaining two, so every coefficient (2b-1)/(2a+1) stays <= 1.  Each
application strictly lowers the sum of the two smaller orders, so the walk
terminates on the three base-case variants.  Nodes are canonicalized
(orders sorted descending, radii co-permuted, ties broken by radius) and
memoized, making the evaluation invariant under input permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .core import (
    BaseCaseVariant,
    Diagnostics,
    DomainError,
    EvalResult,
    ExpDamping,
    GaussDamping,
    KernelCache,
    OrderLimitError,
    RadiiTriple,
    WeightedIntegralSpec,
    check_reality,
    validate_public_orders,
)
from . import expdamp, gaussdamp
from .specfun import DEFAULT_POLICY, PrecisionPolicy

__all__ = [
    "BaseCaseKey", "RecursionStep", "ReductionPlan",
    "canonicalize", "reduction_plan", "evaluate",
    "MAX_ORDER_DEFAULT", "MAX_BASE_ELL_DEFAULT",
]

MAX_ORDER_DEFAULT = 20
MAX_BASE_ELL_DEFAULT = 22


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------

def canonicalize(orders, radii: RadiiTriple):
    """Sort orders descending with radii co-permuted (radius breaks ties).

    Returns (orders, radii, perm) with perm such that new[i] = old[perm[i]].
    The integral is invariant under any joint permutation, so permuted
    inputs canonicalize to the identical computation.
    """
    orders = validate_public_orders(orders)
    r = radii.as_tuple()
    idx = sorted(range(3), key=lambda i: (-orders[i], r[i]))
    perm = tuple(idx)
    new_orders = tuple(orders[i] for i in idx)
    new_radii = RadiiTriple(*(r[i] for i in idx))
    return new_orders, new_radii, perm


# ---------------------------------------------------------------------------
# Structural reduction plan (radii-symbolic; slots carry original indices)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaseCaseKey:
    """A terminal node: anchor order, variant, and the slot permutation
    mapping the problem's radii onto (anchor, tail2, tail3)."""

    ell: int
    variant: BaseCaseVariant
    radii_permutation: tuple[int, int, int]


@dataclass(frozen=True)
class RecursionStep:
    """One application of the integral recursion.

    target = coeff * (sources[0] + sources[1]) - sources[2], with
    coeff = (r[slot_a]/r[slot_b]) * ratio.
    """

    target: tuple
    sources: tuple
    slot_a: int
    slot_b: int
    ratio: Fraction


@dataclass
class ReductionPlan:
    """Topologically ordered recursion steps over canonical nodes."""

    orders: tuple[int, int, int]
    root: tuple
    steps: list[RecursionStep] = field(default_factory=list)
    leaves: list[BaseCaseKey] = field(default_factory=list)


def _canon_node(orders, slots):
    idx = sorted(range(3), key=lambda i: (-orders[i], slots[i]))
    return (tuple(orders[i] for i in idx), tuple(slots[i] for i in idx))


def _leaf_key(orders, slots):
    """Map a terminal node to its BaseCaseKey, or None if not terminal."""
    a, b, c = orders
    if b > 0:
        return None
    # orders sorted descending; terminal when the two tail orders are 0/-1
    tail = sorted((b, c))
    if tail == [0, 0]:
        return BaseCaseKey(a, BaseCaseVariant.L00, (slots[0], slots[1], slots[2]))
    if tail == [-1, 0]:
        minus_slot = slots[1] if b == -1 else slots[2]
        zero_slot = slots[2] if b == -1 else slots[1]
        return BaseCaseKey(a, BaseCaseVariant.Lm10, (slots[0], minus_slot, zero_slot))
    if tail == [-1, -1]:
        return BaseCaseKey(a, BaseCaseVariant.Lm1m1, (slots[0], slots[1], slots[2]))
    return None


def _expand(orders, slots):
    """One recursion application on a canonical non-terminal node."""
    a, b, c = orders
    s1 = _canon_node((a - 1, b - 1, c), slots)
    s2 = _canon_node((a + 1, b - 1, c), slots)
    s3 = _canon_node((a, b - 2, c), slots)
    ratio = Fraction(2 * b - 1, 2 * a + 1)
    return (s1, s2, s3), slots[0], slots[1], ratio


def reduction_plan(orders, *, max_order: int = MAX_ORDER_DEFAULT,
                   max_base_ell: int = MAX_BASE_ELL_DEFAULT) -> ReductionPlan:
    """The full DAG of recursion applications for an order triple.

    Radii enter only as slot labels; the same plan serves any radii.  Leaves
    are deduplicated BaseCaseKeys; steps are emitted sources-first.
    """
    orders = validate_public_orders(orders)
    if max(orders) > max_order:
        raise OrderLimitError(f"orders {orders} exceed the cap {max_order}")
    root = _canon_node(orders, (0, 1, 2))
    plan = ReductionPlan(orders=orders, root=root)
    seen: set = set()
    leaves: dict = {}

    def visit(node):
        if node in seen:
            return
        seen.add(node)
        nd_orders, nd_slots = node
        key = _leaf_key(nd_orders, nd_slots)
        if key is not None:
            if key.ell > max_base_ell:
                raise OrderLimitError(
                    f"plan requires base case at ell={key.ell} beyond cap "
                    f"{max_base_ell}; raise max_base_ell to override")
            leaves.setdefault(key, None)
            return
        sources, slot_a, slot_b, ratio = _expand(nd_orders, nd_slots)
        for s in sources:
            visit(s)
        plan.steps.append(RecursionStep(target=node, sources=sources,
                                        slot_a=slot_a, slot_b=slot_b, ratio=ratio))

    visit(root)
    plan.leaves = list(leaves)
    return plan


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _leaf_variant(orders):
    tail = sorted(orders[1:])
    if tail == [0, 0]:
        return BaseCaseVariant.L00
    if tail == [-1, 0]:
        return BaseCaseVariant.Lm10
    return BaseCaseVariant.Lm1m1


def _canon_value_node(orders, radii):
    idx = sorted(range(3), key=lambda i: (-orders[i], radii[i]))
    return tuple(orders[i] for i in idx), tuple(radii[i] for i in idx)


def evaluate_generic(orders, radii, leaf_fn, *, max_base_ell, stats=None):
    """Run the recursion over arbitrary value algebra (floats, mp, jets).

    leaf_fn(ell, variant, radii_triple) -> value.  Returns (value, memo)
    where memo maps canonical (orders, radii) nodes to values.
    """
    memo: dict = {}

    def node_value(orders, radii):
        orders, radii = _canon_value_node(orders, radii)
        key = (orders, radii)
        if key in memo:
            return memo[key]
        a, b, c = orders
        if b <= 0:
            variant = _leaf_variant(orders)
            if variant is BaseCaseVariant.Lm10 and b == 0:
                # put the -1 order in slot 2
                r = (radii[0], radii[2], radii[1])
            else:
                r = radii
            if a > max_base_ell:
                raise OrderLimitError(
                    f"recursion needs base case ell={a} beyond cap {max_base_ell}")
            val = leaf_fn(a, variant, r)
            if stats is not None:
                stats.setdefault("leaves", set()).add((a, variant, r))
        else:
            coeff = (radii[0] / radii[1]) * (2 * b - 1) / (2 * a + 1)
            va = node_value((a - 1, b - 1, c), radii)
            vb = node_value((a + 1, b - 1, c), radii)
            vc = node_value((a, b - 2, c), radii)
            val = coeff * (va + vb) - vc
        memo[key] = val
        return val

    root = node_value(tuple(orders), tuple(radii))
    return root, memo


def _leaf_eval_float(damping, policy, cache, max_base_ell, diag_sink):
    def leaf(ell, variant, r):
        radii = RadiiTriple(*r)
        if damping.kind == "exp":
            res = expdamp.exp_base_case(ell, variant, radii, damping,
                                        policy=policy, cache=cache,
                                        max_ell=max_base_ell)
        else:
            res = gaussdamp.gauss_base_case(ell, variant, radii, damping,
                                            policy=policy, cache=cache,
                                            max_ell=max_base_ell)
        diag_sink.merge(res.diagnostics)
        return res.value
    return leaf


def evaluate(spec: WeightedIntegralSpec, *,
             policy: PrecisionPolicy = DEFAULT_POLICY,
             cache: KernelCache | None = None,
             max_order: int = MAX_ORDER_DEFAULT,
             max_base_ell: int = MAX_BASE_ELL_DEFAULT,
             collect_trace: bool = False) -> EvalResult:
    """Evaluate a k^2-weighted damped triple-sBF integral by order reduction.

    Deterministic: the canonical memoized walk is independent of caller
    threading and cache hit patterns.  When interior cancellation exceeds
    the policy threshold the whole tree is re-evaluated at escalated
    precision (leaves included).
    """
    if spec.n != 2:
        raise DomainError("the recursion route evaluates n = 2; use "
                          "paramdiff.evaluate_weighted for higher powers")
    orders = validate_public_orders(spec.orders)
    if max(orders) > max_order:
        raise OrderLimitError(f"orders {orders} exceed the cap {max_order}")
    kind = spec.damping.kind
    diag = Diagnostics()
    stats: dict = {}

    leaf = _leaf_eval_float(spec.damping, policy, cache, max_base_ell, diag)
    root, memo = evaluate_generic(orders, spec.radii.as_tuple(), leaf,
                                  max_base_ell=max_base_ell, stats=stats)
    diag.base_case_count = len(stats.get("leaves", ()))

    max_node = max((abs(v) for v in memo.values()), default=0.0)
    diag.max_abs_term = max(diag.max_abs_term, max_node)
    ratio = diag.max_abs_term / max(abs(root), 1e-300)

    # amplification audit: warn when coefficient products could exceed 1e6
    amp = _amplification(orders)
    if amp > 1e6:
        diag.conditioning_warning = True
        diag.notes.append(f"coefficient amplification estimate {amp:.2e}")

    if ratio > policy.cancellation_threshold:
        import mpmath

        dps = 20 * ((int(16 + math.log10(max(ratio, 1.0)) + 12) + 19) // 20)
        for _ in range(3):
            dps = min(300, dps)
            mp_policy = policy

            def leaf_mp(ell, variant, r, _dps=dps):
                radii = RadiiTriple(*r)
                with mpmath.workdps(_dps):
                    if kind == "exp":
                        qv = expdamp._q_values(ell, r, spec.damping.p, mp_policy,
                                               None, _dps)
                        raw = expdamp.base_case_combination(ell, variant, r, qv)
                    else:
                        raw = _gauss_leaf_mp(ell, variant, r, spec.damping.p,
                                             mp_policy, cache, _dps)
                return raw

            with mpmath.workdps(dps):
                root_mp, memo_mp = evaluate_generic(
                    orders, spec.radii.as_tuple(), leaf_mp,
                    max_base_ell=max_base_ell)
                root_c = complex(root_mp)
            diag.precision_escalations += 1
            diag.working_dps = dps
            ratio_mp = diag.max_abs_term / max(abs(root_c.real), 1e-300)
            needed = int(16 + math.log10(max(ratio_mp, 1.0)) + 12)
            if needed <= dps or dps >= 300:
                root = root_c
                memo = {k: complex(v) for k, v in memo_mp.items()}
                if needed > dps:
                    diag.low_confidence = True
                    diag.notes.append("escalation cap reached")
                break
            dps = 20 * ((needed + 19) // 20)

    raw = complex(root)
    value, resid = check_reality(raw, f"recursion.evaluate({orders}, {kind})")
    result = EvalResult(value=value, method=f"recursion-{kind}",
                        im_residual=resid, diagnostics=diag)
    if collect_trace:
        result.trace = {k: (v.real if isinstance(v, complex) else float(v))
                        for k, v in memo.items()}
    if cache is not None:
        key = (orders, spec.radii.as_tuple(), kind, spec.damping.p, 2)
        with cache.lock:
            cache.values.setdefault(key, result)
    return result


def _gauss_leaf_mp(ell, variant, r, p, policy, cache, dps):
    import mpmath

    pm = mpmath.mpf(p)

    def phi_mp(m, w):
        key = (m, abs(w), p, dps)
        if cache is not None:
            mag = cache.get_or_compute(
                cache.phi, key,
                lambda m=m, w=w: gaussdamp.gaussian_moment_integral(
                    m, mpmath.mpf(abs(w)), pm, policy=policy))
        else:
            mag = gaussdamp.gaussian_moment_integral(m, mpmath.mpf(abs(w)), pm,
                                                     policy=policy)
        return mag if (w >= 0 or m % 2 == 1) else -mag

    def chi_mp(m, w):
        key = (m, abs(w), p, dps)
        if cache is not None:
            mag = cache.get_or_compute(
                cache.chi, key,
                lambda m=m, w=w: gaussdamp._chi_mp(m, abs(w), pm, dps))
        else:
            mag = gaussdamp._chi_mp(m, abs(w), pm, dps)
        return mag if (w >= 0 or m % 2 == 0) else -mag

    terms = gaussdamp._base_case_sum(ell, variant,
                                     tuple(mpmath.mpf(x) for x in r),
                                     phi_mp, chi_mp)
    return gaussdamp._assemble(ell, variant, r, p, terms)


def _amplification(orders) -> float:
    """Worst-case product of recursion coefficients reaching any leaf.

    Coefficients are (r_a/r_b)(2b-1)/(2a+1) <= r_a/r_b after
    canonicalization; this bounds the growth structurally by the number of
    applications times the worst radius ratio, which the caller cannot know
    here, so only the step count enters (radius ratios are reported by the
    caller when extreme).
    """
    a, b, c = sorted(orders, reverse=True)
    return float(2 ** (b + c + 2))
