"""Direct (non-recursive) evaluation of Gaussian-damped integrals, any n >= 0.

Writing each sBF through the contour-integral representation turns the
integral into a triple q-integral of a damped power of
s = r1 q1 + r2 q2 + r3 q3.  Carrying out the three q-integrals exactly
reduces everything to iterated antiderivatives evaluated at the eight
signed corners r_sigma = +-r1 +- r2 +- r3:

    pl route:  g(s) = s^zeta exp(-(s/2p)^2)        ->  Phi family
               (incomplete-Gamma antiderivatives)
    hg route:  g(s) = s^{n+L+1} 1F1(1; nu; -(s/2p)^2)  ->  Psi family
               (2F2-type antiderivatives, evaluated by stable quadrature
               over the hypergeometric kernel)

with three nesting levels

    G1_c(w) = int_0^w s^c g(s) ds
    G2_{j,c}(v) = int_0^v w^j G1_c(w) dw
              = [v^{j+1} G1-family - family(+j+1)] / (j+1)
    G3_{K,j,c}(u) = analogous double-bracket form.

The binomial bookkeeping of the three expansions is aggregated into integer
weights per (c, j, K) triple, so each evaluation is a few thousand corner-
function combinations regardless of how many raw index tuples exist.  The
index algebra of the flattened form (the HBIndexState exponents and the
Z/Y corner terms) is exposed for inspection and testing; the Z/Y formulas
coincide with the G3 brackets on non-negative corners, while the corner
forms stay valid when a corner r_sigma is negative.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .core import (
    CostLimitError,
    Diagnostics,
    DomainError,
    EvalResult,
    GaussDamping,
    KernelCache,
    WeightedIntegralSpec,
    check_reality,
    validate_public_orders,
)
from .specfun import (
    DEFAULT_POLICY,
    PrecisionPolicy,
    gauss_legendre_nodes,
    gaussian_moment_integral,
    hyp1f1_one,
    minus_one_power,
    upper_incomplete_gamma,
)

__all__ = ["HBIndexState", "HBCoefficients", "hb_coefficients", "z_y_terms",
           "i_pl", "i_hg", "evaluate_hb", "MAX_HB_ELL", "MAX_HB_N"]

MAX_HB_ELL = 6
MAX_HB_N = 6


# ---------------------------------------------------------------------------
# Index algebra of the flattened nested-sum form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HBIndexState:
    """One summation-index tuple with its derived exponents.

    Ranges: zeta in [0, n+L]; b in [0, l3]; c in [0, 2b]; d in [0, l2];
    g in [0, 2d]; h in [0, c]; m in [0, l1]; t in [0, 2m]; u in [0, g];
    v in [0, g-u].  All denominator exponents are provably positive; a
    violation indicates a transcription bug and raises immediately.
    """

    orders: tuple[int, int, int]
    n: int
    zeta: int
    b: int
    c: int
    d: int
    g: int
    h: int
    m: int
    t: int
    u: int
    v: int

    def __post_init__(self):
        l1, l2, l3 = self.orders
        checks = [
            0 <= self.zeta <= self.n + self.big_l,
            0 <= self.b <= l3, 0 <= self.c <= 2 * self.b,
            0 <= self.d <= l2, 0 <= self.g <= 2 * self.d,
            0 <= self.h <= self.c,
            0 <= self.m <= l1, 0 <= self.t <= 2 * self.m,
            0 <= self.u <= self.g, 0 <= self.v <= self.g - self.u,
        ]
        if not all(checks):
            raise DomainError(f"index tuple out of range: {self}")
        for name, val in (("eps", self.eps), ("eta", self.eta),
                          ("kappa", self.kappa), ("lam", self.lam),
                          ("rho", self.rho)):
            if not val + 1 > 0:
                raise AssertionError(
                    f"denominator exponent {name}+1 <= 0 in {self}")
        assert self.eta == self.phi

    @property
    def big_l(self) -> int:
        return sum(self.orders)

    @property
    def alpha(self) -> int:
        return self.n + self.big_l - self.zeta

    @property
    def beta(self) -> float:
        return (self.zeta + 2 * self.b - self.c - 1) / 2.0

    @property
    def eps(self) -> float:
        return (self.c + 2 * self.d - self.g - self.h - 1) / 2.0

    @property
    def eta(self) -> float:
        return (self.g + 2 * self.m - self.t - self.u - self.v - 1) / 2.0

    @property
    def kappa(self) -> float:
        return (self.n + self.big_l + 2 * self.b - self.c) / 2.0

    @property
    def lam(self) -> float:
        return self.kappa + 1 + self.eps

    @property
    def phi(self) -> float:
        return self.eta

    @property
    def rho(self) -> float:
        return self.lam + 1 + self.phi

    @property
    def omega_exp(self) -> int:
        return self.b + self.c + self.d + self.g + self.m - self.u

    @property
    def sigma_exp(self) -> int:
        return 2 * self.b + 2 * self.d + 2 * self.m \
            - self.h - self.t - self.u - self.v

    @property
    def tau_exp(self) -> int:
        return self.n + self.big_l + self.c + 2 * self.d + 2 * self.m \
            - self.h - self.t - self.u - self.v


@dataclass(frozen=True)
class HBCoefficients:
    """The two scalar prefactors of the flattened summand."""

    omega: complex
    psi: complex


def hb_coefficients(state: HBIndexState) -> HBCoefficients:
    """omega and psi for one index state (principal-branch phases)."""
    omega = math.gamma((state.alpha + 1) / 2.0) \
        * minus_one_power(-state.beta) * (1j ** ((state.zeta + 1) % 4)) \
        / (state.eps + 1)
    psi = 2.0 * (1j ** (state.tau_exp % 4)) \
        * minus_one_power(state.rho + 1 + (state.alpha + 1) / 2.0) \
        / ((state.alpha + 1) * (state.kappa + 1) * (state.lam + 1) * (state.rho + 1))
    for val in (omega, psi):
        if not (math.isfinite(val.real) and math.isfinite(val.imag)):
            raise DomainError(f"non-finite coefficient for {state}")
    return HBCoefficients(omega=omega, psi=psi)


def z_y_terms(state: HBIndexState, rs, p: float, *,
              policy: PrecisionPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    """The Z/Y corner terms of the flattened power-law route.

    Z = [y^{2(eta+eps+2)} Gamma(beta+1, y^2) - Gamma(beta+eta+eps+3, y^2)]
        / (eta+eps+2),  y = rs/2p; Y analogous with exponent 2(eta+1) and
    Gamma(beta+eps+2, .).  Exponents 2(eta+eps+2) and 2(eta+1) are integers,
    so signed rs is safe.
    """
    v = rs.value if hasattr(rs, "value") else float(rs)
    y = v / (2.0 * p)
    x = y * y
    beta, eps, eta = state.beta, state.eps, state.eta
    a_z = eta + eps + 2
    pz = int(round(2 * a_z))
    g1 = upper_incomplete_gamma(beta + 1, x, policy=policy)
    g3 = upper_incomplete_gamma(beta + eta + eps + 3, x, policy=policy)
    z = (y**pz * g1 - g3) / a_z
    a_y = eta + 1
    py = int(round(2 * a_y))
    g2 = upper_incomplete_gamma(beta + eps + 2, x, policy=policy)
    yv = (y**py * g2 - g3) / a_y
    return z, yv


# ---------------------------------------------------------------------------
# Radii-independent aggregation tables
# ---------------------------------------------------------------------------

_TABLE_CACHE: dict = {}
_TABLE_LOCK = threading.Lock()


def _row_table(l1: int, l2: int, l3: int):
    """Integer index rows of the triple expansion, with aggregation keys.

    Columns per row: b3,c3,h,b2,c2,u,b1,c1 plus derived j=c2+h, K=c1+u and
    the combinatorial weight with its alternating sign.  Radii- and
    n-independent, cached per order triple.
    """
    key = (l1, l2, l3)
    with _TABLE_LOCK:
        if key in _TABLE_CACHE:
            return _TABLE_CACHE[key]
    rows = []
    for b3 in range(l3 + 1):
        cb3 = math.comb(l3, b3)
        for c3 in range(2 * b3 + 1):
            cc3 = cb3 * math.comb(2 * b3, c3)
            for h in range(2 * b3 - c3 + 1):
                ch = cc3 * math.comb(2 * b3 - c3, h)
                for b2 in range(l2 + 1):
                    cb2 = ch * math.comb(l2, b2)
                    for c2 in range(2 * b2 + 1):
                        cc2 = cb2 * math.comb(2 * b2, c2)
                        for u in range(2 * b2 - c2 + 1):
                            cu = cc2 * math.comb(2 * b2 - c2, u)
                            for b1 in range(l1 + 1):
                                cb1 = cu * math.comb(l1, b1)
                                for c1 in range(2 * b1 + 1):
                                    w = cb1 * math.comb(2 * b1, c1)
                                    sign = (-1) ** (b1 + b2 + b3 + h + u + c1)
                                    rows.append((b3, c3, h, b2, c2, u, b1, c1,
                                                 sign * w))
    arr = np.asarray(rows, dtype=np.int64)
    cols = {name: arr[:, i] for i, name in enumerate(
        ("b3", "c3", "h", "b2", "c2", "u", "b1", "c1", "w"))}
    cols["j"] = cols["c2"] + cols["h"]
    cols["K"] = cols["c1"] + cols["u"]
    cols["e31"] = 2 * cols["b3"] - cols["c3"] - cols["h"]
    cols["e21"] = 2 * cols["b2"] - cols["c2"] - cols["u"]
    cols["e11"] = 2 * cols["b1"] - cols["c1"]
    jmax = int(cols["j"].max()) if len(arr) else 0
    kmax = int(cols["K"].max()) if len(arr) else 0
    c3max = int(cols["c3"].max()) if len(arr) else 0
    cols["key"] = (cols["c3"] * (jmax + 1) + cols["j"]) * (kmax + 1) + cols["K"]
    meta = {"jmax": jmax, "kmax": kmax, "c3max": c3max,
            "nkeys": (c3max + 1) * (jmax + 1) * (kmax + 1)}
    out = (cols, meta)
    with _TABLE_LOCK:
        _TABLE_CACHE.setdefault(key, out)
        return _TABLE_CACHE[key]


_LINES = ((1, 1), (1, -1), (-1, 1), (-1, -1))  # (e2, e3)


def _aggregate_weights(cols, meta, radii):
    """Per-line aggregated weights over (c3, j, K) keys, and a size gauge.

    weight(row, line) = w * r1^{-2 b1} r2^{-2 b2} r3^{-2 b3}
                        * (e3 r3)^{e31} (e2 r2)^{e21} (e2 r2 + e3 r3)^{e11}
    """
    r1, r2, r3 = radii
    base = (cols["w"].astype(float)
            * r1 ** (-2.0 * cols["b1"])
            * r2 ** (-2.0 * cols["b2"])
            * r3 ** (-2.0 * cols["b3"]))
    nkeys = meta["nkeys"]
    weights = []
    abs_sums = []
    for e2, e3 in _LINES:
        wr = base * (e3 * r3) ** cols["e31"] * (e2 * r2) ** cols["e21"] \
            * (e2 * r2 + e3 * r3) ** cols["e11"]
        weights.append(np.bincount(cols["key"], weights=wr, minlength=nkeys))
        abs_sums.append(np.bincount(cols["key"], weights=np.abs(wr),
                                    minlength=nkeys))
    return weights, abs_sums


# ---------------------------------------------------------------------------
# Corner antiderivative families
# ---------------------------------------------------------------------------

def _phi_family_table(a_max: int, abs_corners, p: float, policy) -> np.ndarray:
    """Phi_a(|w|) for a = 0..a_max at each |corner|, shape (a_max+1, n_c)."""
    out = np.empty((a_max + 1, len(abs_corners)))
    for ci, w in enumerate(abs_corners):
        for a in range(a_max + 1):
            out[a, ci] = gaussian_moment_integral(a, w, p, policy=policy)
    return out


def _psi_family_table(a_max: int, nu: float, abs_corners, p: float,
                      policy) -> np.ndarray:
    """Psi_a(|w|) = int_0^|w| s^a 1F1(1; nu; -(s/2p)^2) ds, tabulated.

    Composite Gauss-Legendre over the stable confluent evaluator; the
    integrand is positive, smooth and monotone, so fixed panels of width
    ~2p resolve it to machine precision.
    """
    nodes, wts = gauss_legendre_nodes(48)
    out = np.empty((a_max + 1, len(abs_corners)))
    for ci, w in enumerate(abs_corners):
        if w == 0.0:
            out[:, ci] = 0.0
            continue
        n_panels = max(2, min(24, int(math.ceil(w / max(p, w / 24.0)))))
        edges = np.linspace(0.0, w, n_panels + 1)
        s_all = []
        w_all = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            s_all.append(0.5 * (hi + lo) + half * nodes)
            w_all.append(half * wts)
        s = np.concatenate(s_all)
        ww = np.concatenate(w_all)
        mvals = np.array([hyp1f1_one(nu, (si / (2 * p)) ** 2, policy=policy)
                          for si in s])
        powers = s[None, :] ** np.arange(a_max + 1)[:, None]
        out[:, ci] = powers @ (ww * mvals)
    return out


def _g3_corner(table: np.ndarray, a, j, K, w_signed: float, ci: int):
    """G3_{K,j,.}(w) from a family table column; vectorized over rows.

    Parity: family_a(-|w|) = (-1)^{a+1} family_a(|w|).
    """
    aw = abs(w_signed)
    sgn = 1.0 if w_signed >= 0 else -1.0

    def fam(idx):
        vals = table[idx, ci]
        if sgn > 0:
            return vals
        return vals * np.where(idx % 2 == 1, 1.0, -1.0)

    f_a = fam(a)
    f_aj = fam(a + j + 1)
    f_top = fam(a + K + j + 2)
    # integer exponents keep negative bases exact
    p_hi = np.power(w_signed, np.asarray(K + j + 2, dtype=np.int64))
    p_lo = np.power(w_signed, np.asarray(K + 1, dtype=np.int64))
    return ((p_hi * f_a - f_top) / (K + j + 2.0)
            - (p_lo * f_aj - f_top) / (K + 1.0)) / (j + 1.0)


def _corner_values(radii):
    """(abs_corners, per-line (w_plus, w_minus, column indices))."""
    r1, r2, r3 = radii
    corners = {}
    per_line = []
    for e2, e3 in _LINES:
        wp = r1 + e2 * r2 + e3 * r3
        wm = -r1 + e2 * r2 + e3 * r3
        per_line.append((wp, wm))
        corners.setdefault(abs(wp), None)
        corners.setdefault(abs(wm), None)
    abs_corners = sorted(corners)
    index = {w: i for i, w in enumerate(abs_corners)}
    cols = [(index[abs(wp)], index[abs(wm)]) for wp, wm in per_line]
    return abs_corners, per_line, cols


def _assemble_route(cols, meta, radii, p, table, base_power: int,
                    weights, abs_sums):
    """Sum aggregated weights against G3 corner differences.

    Returns (value, magnitude) where magnitude bounds the cancellation.
    """
    nk = meta["nkeys"]
    jmax, kmax, c3max = meta["jmax"], meta["kmax"], meta["c3max"]
    keys = np.arange(nk)
    kk = keys % (kmax + 1)
    jj = (keys // (kmax + 1)) % (jmax + 1)
    cc3 = keys // ((kmax + 1) * (jmax + 1))
    a_idx = cc3 + base_power
    abs_corners, per_line, colidx = _corner_values(radii)

    total = 0.0
    mag = 0.0
    for li, (e2, e3) in enumerate(_LINES):
        w_agg = weights[li]
        live = w_agg != 0.0
        if not live.any():
            continue
        wp, wm = per_line[li]
        cp, cm = colidx[li]
        g3p = _g3_corner(table, a_idx[live], jj[live], kk[live], wp, cp)
        g3m = _g3_corner(table, a_idx[live], jj[live], kk[live], wm, cm)
        contrib = (e2 * e3) * w_agg[live] * (g3p - g3m)
        total += float(np.sum(contrib))
        mag = max(mag, float(np.max(np.abs(contrib))) if contrib.size else 0.0,
                  float(np.max(abs_sums[li][live]
                               * np.maximum(np.abs(g3p), np.abs(g3m))))
                  if contrib.size else 0.0)
    r1, r2, r3 = radii
    return total / (r1 * r2 * r3), mag / (r1 * r2 * r3)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _hb_prechecks(spec: WeightedIntegralSpec, max_ell, max_n, override_caps):
    if not isinstance(spec.damping, GaussDamping):
        raise DomainError("the nested-sum route is defined for Gaussian damping")
    orders = validate_public_orders(spec.orders)
    if not override_caps and (max(orders) > max_ell or spec.n > max_n):
        raise CostLimitError(
            f"orders {orders} / n={spec.n} beyond suggested caps "
            f"(ell <= {max_ell}, n <= {max_n}); pass override_caps=True")
    return orders


def _sorted_for_cost(orders, radii):
    """Permute so the cubic-cost slot gets the smallest order (value-invariant)."""
    pairs = sorted(zip(orders, radii.as_tuple()), key=lambda t: (-t[0], t[1]))
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def i_pl(spec: WeightedIntegralSpec, zeta: int, *,
         policy: PrecisionPolicy = DEFAULT_POLICY) -> complex:
    """The power-law q-integral of the split, as a (real) complex value."""
    orders = _hb_prechecks(spec, MAX_HB_ELL, MAX_HB_N, override_caps=True)
    l, r = _sorted_for_cost(orders, spec.radii)
    big_l = sum(l)
    if zeta < 0 or zeta > spec.n + big_l:
        raise DomainError("zeta out of range")
    alpha = spec.n + big_l - zeta
    if zeta % 2 == 1:
        return 0.0 + 0.0j  # odd power of s integrates to zero by parity
    p = spec.damping.p
    cols, meta = _row_table(*l)
    weights, abs_sums = _aggregate_weights(cols, meta, r)
    a_max = meta["c3max"] + zeta + meta["jmax"] + meta["kmax"] + 3
    abs_corners, _, _ = _corner_values(r)
    table = _phi_family_table(a_max, abs_corners, p, policy)
    val, _ = _assemble_route(cols, meta, r, p, table, zeta, weights, abs_sums)
    return complex(math.gamma((alpha + 1) / 2.0) * val)


def i_hg(spec: WeightedIntegralSpec, zeta: int, *,
         policy: PrecisionPolicy = DEFAULT_POLICY) -> complex:
    """The hypergeometric q-integral of the split."""
    orders = _hb_prechecks(spec, MAX_HB_ELL, MAX_HB_N, override_caps=True)
    l, r = _sorted_for_cost(orders, spec.radii)
    big_l = sum(l)
    if zeta < 0 or zeta > spec.n + big_l:
        raise DomainError("zeta out of range")
    alpha = spec.n + big_l - zeta
    if (spec.n + big_l) % 2 == 0:
        return 0.0 + 0.0j  # odd integrand power: vanishes by parity
    p = spec.damping.p
    nu = (alpha + 3) / 2.0
    cols, meta = _row_table(*l)
    weights, abs_sums = _aggregate_weights(cols, meta, r)
    base = spec.n + big_l + 1
    a_max = meta["c3max"] + base + meta["jmax"] + meta["kmax"] + 3
    abs_corners, _, _ = _corner_values(r)
    table = _psi_family_table(a_max, nu, abs_corners, p, policy)
    val, _ = _assemble_route(cols, meta, r, p, table, base, weights, abs_sums)
    # branch of (-1)^{(alpha+1)/2}: e^{-i pi (alpha+1)/2}, fixed by oracle
    # agreement at zero orders with n in {0,1,2} (only even alpha is affected)
    pref = (2.0 / (alpha + 1)) * minus_one_power(-(alpha + 1) / 2.0) \
        * (2.0 * p) ** (-(alpha + 1))
    return pref * val


def evaluate_hb(spec: WeightedIntegralSpec, *,
                policy: PrecisionPolicy = DEFAULT_POLICY,
                cache: KernelCache | None = None,
                max_ell: int = MAX_HB_ELL, max_n: int = MAX_HB_N,
                override_caps: bool = False) -> EvalResult:
    """Gaussian-damped triple-sBF integral with weight k^n, n >= 0.

    Assembles the zeta-sum of binom(n+L, zeta) (i/2p^2)^zeta p^-(alpha+1)
    (I_pl - I_hg) with the overall prefactor.  All surviving terms are real
    by parity, so the imaginary residual measures only the assembly noise.
    """
    orders = _hb_prechecks(spec, max_ell, max_n, override_caps)
    l, r = _sorted_for_cost(orders, spec.radii)
    l1, l2, l3 = l
    big_l = sum(l)
    n = spec.n
    p = spec.damping.p
    diag = Diagnostics()

    cols, meta = _row_table(l1, l2, l3)
    weights, abs_sums = _aggregate_weights(cols, meta, r)
    abs_corners, _, _ = _corner_values(r)

    a_max_pl = meta["c3max"] + (n + big_l) + meta["jmax"] + meta["kmax"] + 3
    phi_table = _phi_family_table(a_max_pl, abs_corners, p, policy)

    pref = 2.0 ** (-big_l - 4) * r[0] ** l1 * r[1] ** l2 * r[2] ** l3 \
        / (math.gamma(l1 + 1) * math.gamma(l2 + 1) * math.gamma(l3 + 1))

    total = 0.0 + 0.0j
    max_mag = 0.0
    hg_alive = (n + big_l) % 2 == 1
    base_hg = n + big_l + 1
    for zeta in range(n + big_l + 1):
        alpha = n + big_l - zeta
        cz = math.comb(n + big_l, zeta) * (1j / (2 * p * p)) ** zeta \
            * p ** (-(alpha + 1.0))
        if zeta % 2 == 0:
            val, mag = _assemble_route(cols, meta, r, p, phi_table, zeta,
                                       weights, abs_sums)
            ipl = math.gamma((alpha + 1) / 2.0) * val
            total += cz * ipl
            max_mag = max(max_mag, abs(cz) * math.gamma((alpha + 1) / 2.0) * mag)
        if hg_alive:
            nu = (alpha + 3) / 2.0
            a_max = meta["c3max"] + base_hg + meta["jmax"] + meta["kmax"] + 3
            psi_table = _psi_family_table(a_max, nu, abs_corners, p, policy)
            val, mag = _assemble_route(cols, meta, r, p, psi_table, base_hg,
                                       weights, abs_sums)
            chg = (2.0 / (alpha + 1)) * minus_one_power(-(alpha + 1) / 2.0) \
                * (2.0 * p) ** (-(alpha + 1.0))
            ihg = chg * val
            total -= cz * ihg
            max_mag = max(max_mag, abs(cz * chg) * mag)

    raw = pref * total
    diag.max_abs_term = pref * max_mag
    ratio = diag.max_abs_term / max(abs(raw.real), 1e-300)
    if ratio > policy.cancellation_threshold:
        raw = _evaluate_hb_dd(l, r, p, n, policy)
        diag.precision_escalations += 1
        diag.working_dps = 32
        ratio_dd = diag.max_abs_term / max(abs(raw.real), 1e-300)
        if ratio_dd > 1e24:
            diag.low_confidence = True
            diag.notes.append(
                f"nested-sum cancellation ratio {ratio_dd:.2e} beyond "
                "double-double reach")

    value, resid = check_reality(raw, f"evaluate_hb({orders}, n={n})",
                                 bound_abs=1e-10, bound_rel=1e-8)
    return EvalResult(value=value, method="hankel-bowman", im_residual=resid,
                      diagnostics=diag)


# ---------------------------------------------------------------------------
# Escalated (double-double) path
# ---------------------------------------------------------------------------

from . import ddarith as dd  # noqa: E402  (kept local to the escalated path)


def _corner_dd(radii, e1, e2, e3):
    h, l = dd.two_sum(np.float64(e1 * radii[0]), np.float64(e2 * radii[1]))
    sh, sl = dd.two_sum(h, np.float64(e3 * radii[2]))
    return dd.quick_two_sum(sh, sl + l)


_WEIGHTS_DD_CACHE: dict = {}


def _weights_dd(cols, meta, radii):
    """Per-line aggregated dd weights over keys (exact segment fsum).

    Independent of the damping parameter, so cached per (orders, radii);
    the absolute-magnitude prefactors are shared across the four sign
    lines and only the X2 = e2 r2 + e3 r3 power differs.
    """
    import math as _math

    cache_key = (id(cols), radii)
    with _TABLE_LOCK:
        if cache_key in _WEIGHTS_DD_CACHE:
            return _WEIGHTS_DD_CACHE[cache_key]

    r1, r2, r3 = radii
    nkeys = meta["nkeys"]
    order = np.argsort(cols["key"], kind="stable")
    key_sorted = cols["key"][order]
    boundaries = np.flatnonzero(np.diff(key_sorted)) + 1
    segs = np.split(np.arange(len(key_sorted)), boundaries)
    seg_keys = [int(key_sorted[s[0]]) for s in segs]

    def inv_pow(rv, n_max):
        ih, il = dd.dd_div_float(np.float64(1.0), np.float64(0.0), rv)
        return dd.dd_pow_int_table(float(ih), float(il), n_max)

    p1h, p1l = inv_pow(r1, 2 * int(cols["b1"].max(initial=0)))
    p2h, p2l = inv_pow(r2, 2 * int(cols["b2"].max(initial=0)))
    p3h, p3l = inv_pow(r3, 2 * int(cols["b3"].max(initial=0)))
    e31max = int(cols["e31"].max(initial=0))
    e21max = int(cols["e21"].max(initial=0))
    e11max = int(cols["e11"].max(initial=0))
    q3h, q3l = dd.dd_pow_int_table(r3, 0.0, e31max)
    q2h, q2l = dd.dd_pow_int_table(r2, 0.0, e21max)
    sh_, sl_ = dd.two_sum(np.float64(r2), np.float64(r3))
    xs_h, xs_l = dd.dd_pow_int_table(float(sh_), float(sl_), e11max)  # r2+r3
    dh_, dl_ = dd.two_sum(np.float64(r2), np.float64(-r3))
    xd_h, xd_l = dd.dd_pow_int_table(float(dh_), float(dl_), e11max)  # r2-r3

    base_h = cols["w"].astype(np.float64)
    base_l = np.zeros_like(base_h)
    for th, tl, idx in ((p1h, p1l, 2 * cols["b1"]),
                        (p2h, p2l, 2 * cols["b2"]),
                        (p3h, p3l, 2 * cols["b3"]),
                        (q3h, q3l, cols["e31"]),
                        (q2h, q2l, cols["e21"])):
        base_h, base_l = dd.dd_mul(base_h, base_l, th[idx], tl[idx])

    out_w = []
    out_abs = []
    for e2, e3 in _LINES:
        # X2 = e2 r2 + e3 r3: magnitude from one of the two tables, sign exact
        if e2 == e3:
            qx_h, qx_l = xs_h[cols["e11"]], xs_l[cols["e11"]]
            x2_sign = np.float64(e2) ** cols["e11"]
        else:
            qx_h, qx_l = xd_h[cols["e11"]], xd_l[cols["e11"]]
            x2_sign = np.float64(e2) ** cols["e11"]
        sgn = x2_sign * np.float64(e3) ** cols["e31"] * np.float64(e2) ** cols["e21"]
        wh, wl = dd.dd_mul(base_h * sgn, base_l * sgn, qx_h, qx_l)
        w_hi = np.zeros(nkeys)
        w_lo = np.zeros(nkeys)
        w_abs = np.zeros(nkeys)
        sh = wh[order]
        sl = wl[order]
        for seg, k in zip(segs, seg_keys):
            parts = sh[seg].tolist() + sl[seg].tolist()
            tot = _math.fsum(parts)
            w_hi[k] = tot
            w_lo[k] = _math.fsum(parts + [-tot])
            w_abs[k] = float(np.sum(np.abs(sh[seg])))
        out_w.append((w_hi, w_lo))
        out_abs.append(w_abs)
    result = (out_w, out_abs)
    with _TABLE_LOCK:
        _WEIGHTS_DD_CACHE.setdefault(cache_key, result)
        if len(_WEIGHTS_DD_CACHE) > 256:
            _WEIGHTS_DD_CACHE.pop(next(iter(_WEIGHTS_DD_CACHE)))
        return _WEIGHTS_DD_CACHE[cache_key]


def _phi_table_dd(a_max, abs_corners, p, dps=40):
    import mpmath

    hi = np.empty((a_max + 1, len(abs_corners)))
    lo = np.empty((a_max + 1, len(abs_corners)))
    with mpmath.workdps(dps):
        pm = mpmath.mpf(p)
        for ci, w in enumerate(abs_corners):
            if w == 0.0:
                hi[:, ci] = 0.0
                lo[:, ci] = 0.0
                continue
            x = (mpmath.mpf(w) / (2 * pm)) ** 2
            for a in range(a_max + 1):
                v = mpmath.mpf(2) ** a * pm ** (a + 1) \
                    * mpmath.gammainc(mpmath.mpf(a + 1) / 2, a=0, b=x)
                h = float(v)
                hi[a, ci] = h
                lo[a, ci] = float(v - mpmath.mpf(h))
    return hi, lo


class _PsiNodesDD:
    """Per-corner dd quadrature nodes with cached Kummer power terms."""

    def __init__(self, abs_corners, p, kmax_terms=2400):
        import mpmath

        self.corners = abs_corners
        self.p = p
        self.node_s = []     # (hi, lo)
        self.node_wq = []
        self.node_x = []
        self.node_emx = []
        self.node_u = []     # list over corners of (k_count, uhi, ulo) arrays
        xh0, xl0, wh0, wl0 = dd.dd_gauss_legendre(48)
        for w in abs_corners:
            if w == 0.0:
                self.node_s.append(None)
                self.node_wq.append(None)
                self.node_x.append(None)
                self.node_emx.append(None)
                self.node_u.append(None)
                continue
            n_panels = max(2, min(24, int(math.ceil(w / max(p, w / 24.0)))))
            s_h = []
            s_l = []
            q_h = []
            q_l = []
            for k in range(n_panels):
                lo_h, lo_l = dd.dd_mul_float(
                    *dd.dd_div_float(np.float64(w), np.float64(0.0), n_panels), k)
                hi_h, hi_l = dd.dd_mul_float(
                    *dd.dd_div_float(np.float64(w), np.float64(0.0), n_panels), k + 1)
                half_h, half_l = dd.dd_mul_float(
                    *dd.dd_sub(hi_h, hi_l, lo_h, lo_l), 0.5)
                mid_h, mid_l = dd.dd_mul_float(
                    *dd.dd_add(hi_h, hi_l, lo_h, lo_l), 0.5)
                sh, sl = dd.dd_add(mid_h * np.ones_like(xh0), mid_l * np.ones_like(xh0),
                                   *dd.dd_mul(xh0, xl0,
                                              half_h * np.ones_like(xh0),
                                              half_l * np.ones_like(xh0)))
                s_h.append(sh)
                s_l.append(sl)
                qh, ql = dd.dd_mul(wh0, wl0, half_h * np.ones_like(wh0),
                                   half_l * np.ones_like(wh0))
                q_h.append(qh)
                q_l.append(ql)
            sh = np.concatenate(s_h)
            sl = np.concatenate(s_l)
            qh = np.concatenate(q_h)
            ql = np.concatenate(q_l)
            yh, yl = dd.dd_div_float(sh, sl, 2.0 * p)
            xh, xl = dd.dd_mul(yh, yl, yh, yl)
            emxh, emxl = dd.dd_exp_mp(-xh, -xl)
            self.node_s.append((sh, sl))
            self.node_wq.append((qh, ql))
            self.node_x.append((xh, xl))
            self.node_emx.append((emxh, emxl))
            # Kummer power terms u_k = x^k / k! until negligible
            u_h = [np.ones_like(xh)]
            u_l = [np.zeros_like(xh)]
            xmax = float(xh.max())
            k = 0
            while True:
                k += 1
                nh, nl = dd.dd_mul(u_h[-1], u_l[-1], xh, xl)
                nh, nl = dd.dd_div_float(nh, nl, k)
                u_h.append(nh)
                u_l.append(nl)
                if (k > xmax and float(np.max(nh)) < 1e-45 * math.exp(min(700, xmax))) \
                        or k > kmax_terms:
                    break
            self.node_u.append((np.array(u_h), np.array(u_l)))

    def m_values(self, nu, ci):
        """dd M(nu, x_i) at corner ci via the positive Kummer sum."""
        uh, ul = self.node_u[ci]
        n_terms, n_nodes = uh.shape
        sh = np.zeros(n_nodes)
        sl = np.zeros(n_nodes)
        for k in range(n_terms):
            # factor (nu-1)/(nu-1+k), both halves exact floats
            th, tl = dd.dd_mul_float(uh[k], ul[k], nu - 1.0)
            th, tl = dd.dd_div_float(th, tl, nu - 1.0 + k)
            sh, sl = dd.dd_add(sh, sl, th, tl)
        emxh, emxl = self.node_emx[ci]
        return dd.dd_mul(sh, sl, emxh, emxl)

    def psi_table(self, a_max, nu):
        """dd Psi_a(|w|) table, shape (a_max+1, n_corners)."""
        hi = np.zeros((a_max + 1, len(self.corners)))
        lo = np.zeros((a_max + 1, len(self.corners)))
        for ci, w in enumerate(self.corners):
            if w == 0.0:
                continue
            mh, ml = self.m_values(nu, ci)
            qh, ql = self.node_wq[ci]
            fh, fl = dd.dd_mul(qh, ql, mh, ml)
            sh, sl = self.node_s[ci]
            ch, cl = np.ones_like(sh), np.zeros_like(sh)
            for a in range(a_max + 1):
                th, tl = dd.dd_mul(fh, fl, ch, cl)
                hi[a, ci] = math.fsum(th.tolist() + tl.tolist())
                lo[a, ci] = math.fsum(th.tolist() + tl.tolist() + [-hi[a, ci]])
                ch, cl = dd.dd_mul(ch, cl, sh, sl)
        return hi, lo


def _g3_corner_dd(tab_hi, tab_lo, a, j, K, w_dd, ci):
    wh, wl = w_dd
    sgn = 1.0 if wh >= 0 else -1.0
    emax = int(np.max(K + j + 2))
    ph, pl = dd.dd_pow_int_table(float(wh), float(wl), emax)

    def fam(idx):
        vh = tab_hi[idx, ci]
        vl = tab_lo[idx, ci]
        if sgn > 0:
            return vh, vl
        flip = np.where(idx % 2 == 1, 1.0, -1.0)
        return vh * flip, vl * flip

    fa_h, fa_l = fam(a)
    faj_h, faj_l = fam(a + j + 1)
    ft_h, ft_l = fam(a + K + j + 2)
    hi1, lo1 = dd.dd_mul(ph[K + j + 2], pl[K + j + 2], fa_h, fa_l)
    hi1, lo1 = dd.dd_sub(hi1, lo1, ft_h, ft_l)
    hi1, lo1 = dd.dd_div_float(hi1, lo1, K + j + 2.0)
    hi2, lo2 = dd.dd_mul(ph[K + 1], pl[K + 1], faj_h, faj_l)
    hi2, lo2 = dd.dd_sub(hi2, lo2, ft_h, ft_l)
    hi2, lo2 = dd.dd_div_float(hi2, lo2, K + 1.0)
    hi3, lo3 = dd.dd_sub(hi1, lo1, hi2, lo2)
    return dd.dd_div_float(hi3, lo3, j + 1.0)


def _assemble_route_dd(cols, meta, radii, p, tab, base_power, weights_dd):
    """dd analogue of _assemble_route; returns list of dd contribution pairs."""
    nk = meta["nkeys"]
    jmax, kmax = meta["jmax"], meta["kmax"]
    keys = np.arange(nk)
    kk = keys % (kmax + 1)
    jj = (keys // (kmax + 1)) % (jmax + 1)
    cc3 = keys // ((kmax + 1) * (jmax + 1))
    a_idx = cc3 + base_power
    parts_h = []
    parts_l = []
    for li, (e2, e3) in enumerate(_LINES):
        w_hi, w_lo = weights_dd[li]
        live = (w_hi != 0.0) | (w_lo != 0.0)
        if not live.any():
            continue
        wp = _corner_dd(radii, 1, e2, e3)
        wm = _corner_dd(radii, -1, e2, e3)
        ci_p = _corner_index(radii, wp[0])
        ci_m = _corner_index(radii, wm[0])
        g3p = _g3_corner_dd(tab[0], tab[1], a_idx[live], jj[live], kk[live], wp, ci_p)
        g3m = _g3_corner_dd(tab[0], tab[1], a_idx[live], jj[live], kk[live], wm, ci_m)
        dh, dl = dd.dd_sub(*g3p, *g3m)
        ch, cl = dd.dd_mul(w_hi[live], w_lo[live], dh, dl)
        sign = float(e2 * e3)
        parts_h.append(ch * sign)
        parts_l.append(cl * sign)
    return parts_h, parts_l


def _corner_index(radii, w_hi):
    abs_corners, _, _ = _corner_values(radii)
    target = abs(float(w_hi))
    best = min(range(len(abs_corners)), key=lambda i: abs(abs_corners[i] - target))
    return best


def _evaluate_hb_dd(orders, r, p, n, policy):
    """Full nested-sum evaluation in double-double precision."""
    l1, l2, l3 = orders
    big_l = sum(orders)
    cols, meta = _row_table(l1, l2, l3)
    weights_dd, abs_sums = _weights_dd(cols, meta, r)
    abs_corners, _, _ = _corner_values(r)

    a_max_pl = meta["c3max"] + (n + big_l) + meta["jmax"] + meta["kmax"] + 3
    phi_tab = _phi_table_dd(a_max_pl, abs_corners, p)
    hg_alive = (n + big_l) % 2 == 1
    base_hg = n + big_l + 1
    psi_nodes = None
    if hg_alive:
        psi_nodes = _PsiNodesDD(abs_corners, p)

    pool_re: list[float] = []
    pool_im: list[float] = []

    def _push(pool, h_arr, l_arr, coeff_h, coeff_l):
        # error-free scaling: each dd contribution times the dd coefficient
        sh, sl = dd.dd_mul(h_arr, l_arr,
                           np.float64(coeff_h), np.float64(coeff_l))
        pool.extend(sh.tolist())
        pool.extend(sl.tolist())

    import mpmath

    def _dd_coeff(*mp_factors):
        with mpmath.workdps(40):
            v = mpmath.mpf(1)
            for f in mp_factors:
                v = v * f
            h = float(v)
            return h, float(v - mpmath.mpf(h))

    with mpmath.workdps(40):
        inv1_mp = 1 / (mpmath.mpf(r[0]) * mpmath.mpf(r[1]) * mpmath.mpf(r[2]))
        pm = mpmath.mpf(p)
    for zeta in range(n + big_l + 1):
        alpha = n + big_l - zeta
        phase = 1j ** (zeta % 4)
        with mpmath.workdps(40):
            cz_mp = mpmath.binomial(n + big_l, zeta) * (2 * pm * pm) ** (-zeta) \
                * pm ** (-(alpha + 1))
        if zeta % 2 == 0:
            ph, pl = _assemble_route_dd(cols, meta, r, p, phi_tab, zeta, weights_dd)
            with mpmath.workdps(40):
                ch, cl = _dd_coeff(cz_mp, mpmath.gamma(mpmath.mpf(alpha + 1) / 2),
                                   inv1_mp)
            for h, l in zip(ph, pl):
                if phase.real:
                    _push(pool_re, h, l, ch * phase.real, cl * phase.real)
                if phase.imag:
                    _push(pool_im, h, l, ch * phase.imag, cl * phase.imag)
        if hg_alive:
            nu = (alpha + 3) / 2.0
            a_max = meta["c3max"] + base_hg + meta["jmax"] + meta["kmax"] + 3
            psi_tab = psi_nodes.psi_table(a_max, nu)
            ph, pl = _assemble_route_dd(cols, meta, r, p, psi_tab, base_hg,
                                        weights_dd)
            chg_phase = phase * minus_one_power(-(alpha + 1) / 2.0) * (-1.0)
            with mpmath.workdps(40):
                ch, cl = _dd_coeff(cz_mp, 2 / mpmath.mpf(alpha + 1),
                                   (2 * pm) ** (-(alpha + 1)), inv1_mp)
            for h, l in zip(ph, pl):
                if chg_phase.real:
                    _push(pool_re, h, l, ch * chg_phase.real, cl * chg_phase.real)
                if chg_phase.imag:
                    _push(pool_im, h, l, ch * chg_phase.imag, cl * chg_phase.imag)
    pref = 2.0 ** (-big_l - 4) * r[0] ** l1 * r[1] ** l2 * r[2] ** l3 \
        / (math.gamma(l1 + 1) * math.gamma(l2 + 1) * math.gamma(l3 + 1))
    re = math.fsum(pool_re) * pref
    im = math.fsum(pool_im) * pref
    return complex(re, im)
