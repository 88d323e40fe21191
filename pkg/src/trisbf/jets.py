"""Truncated univariate Taylor-series arithmetic (forward-mode jets).

A Jet holds coefficients c[j] = f^(j)(s0)/j! about an expansion point;
arithmetic propagates all derivatives up to the truncation order at once.
Coefficients may be float/complex or mpmath numbers; operations only use
+-*/ so the arithmetic follows the coefficient type.
"""

from __future__ import annotations

__all__ = ["Jet"]


class Jet:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = tuple(coeffs)

    @classmethod
    def variable(cls, value, order: int):
        """The identity function s -> s truncated at `order`."""
        c = [value * 0] * (order + 1)
        c[0] = value
        if order >= 1:
            c[1] = value * 0 + 1
        return cls(c)

    @classmethod
    def constant(cls, value, order: int):
        c = [value * 0] * (order + 1)
        c[0] = value
        return cls(c)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet([a + b for a, b in zip(self.c, other.c)])
        c = list(self.c)
        c[0] = c[0] + other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-a for a in self.c])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            n = len(self.c)
            out = [self.c[0] * 0] * n
            for i, a in enumerate(self.c):
                for j in range(n - i):
                    out[i + j] = out[i + j] + a * other.c[j]
            return Jet(out)
        return Jet([a * other for a in self.c])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet([a / other for a in self.c])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("Jet powers restricted to non-negative integers")
        out = Jet.constant(self.c[0] * 0 + 1, self.order)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- analytic helpers ---------------------------------------------------

    def reciprocal(self):
        a = self.c
        b = [a[0] * 0] * len(a)
        b[0] = 1.0 / a[0]
        for k in range(1, len(a)):
            acc = a[0] * 0
            for j in range(1, k + 1):
                acc = acc + a[j] * b[k - j]
            b[k] = -acc * b[0]
        return Jet(b)

    def sqrt(self):
        a = self.c
        b = [a[0] * 0] * len(a)
        b[0] = a[0] ** 0.5
        inv2b0 = 1.0 / (2.0 * b[0])
        for k in range(1, len(a)):
            acc = a[k]
            for j in range(1, k):
                acc = acc - b[j] * b[k - j]
            b[k] = acc * inv2b0
        return Jet(b)

    @staticmethod
    def from_derivative(value0, derivative: "Jet") -> "Jet":
        """Antiderivative in the jet variable: c[0]=value0, c[j]=d.c[j-1]/j.

        `derivative` must be the jet of df/ds (same variable, one order
        lower); the result has order derivative.order + 1.
        """
        c = [value0] + [derivative.c[j - 1] / j
                        for j in range(1, derivative.order + 2)]
        return Jet(c)

    def real_coeffs(self):
        return [getattr(x, "real", x) for x in self.c]

    def __repr__(self):
        return f"Jet({list(self.c)!r})"
