"""Taylor-series machinery for the Lanczos functions about s = 0.

Three layers:

* saddle-series inversion  xi(eps) = sum e_k (eps - c1)^k,
* the coupled binomial/Pochhammer recurrences solved order by order for the
  coefficients of alpha(s) = c1 + sum a_n s^{n+1}, beta^2(s) = sum b_n s^{n+1},
* exact partition-coefficient extraction: running the same solve over a
  symbolic cumulant ring and normalising by [(n+1)!]^2 c2^{3n+1} (A-type) or
  (n+1)! n! c2^{3n-1} (B-type) yields integer coefficients labelled by integer
  partitions.

The hierarchy route (l_p/m_p in the s-expansion of the L-function) is an
independent derivation of the same numbers and is used as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from ._series_ring import (
    FLOAT_RING,
    FRACTION_RING,
    LAURENT_RING,
    LaurentPoly,
    Ring,
    ring_for,
    ser_mul,
    ser_pow,
)
from .errors import ArityError, DegenerateModelError, InternalConsistencyError

PARTITION_ORDER_CAP = 6


@dataclass(frozen=True)
class InverseSaddleSeries:
    """Coefficients e_1..e_K of xi = sum_k e_k (eps - c1)^k."""

    e: tuple
    exact: bool

    def __getitem__(self, k: int):
        return self.e[k - 1]


@dataclass(frozen=True)
class SeriesCoefficients:
    """a_n, b_n with alpha(s) = c1 + sum a_n s^{n+1}, beta^2(s) = sum b_n s^{n+1}."""

    a: tuple
    b: tuple
    c1: object
    exact: bool

    def alpha(self, s: float) -> float:
        return float(self.c1) + sum(
            float(an) * s ** (n + 1) for n, an in enumerate(self.a)
        )

    def beta2(self, s: float) -> float:
        return sum(float(bn) * s ** (n + 1) for n, bn in enumerate(self.b))


@dataclass(frozen=True)
class PartitionTerm:
    """One monomial of the exact expansion: coefficient of prod c_{2+i}^{a_i}."""

    n: int
    which: str          # "A" or "B"
    lam: tuple          # partition of 2n+1 (A) or 2n (B), parts descending
    coeff: int

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "which": self.which,
            "lambda": list(self.lam),
            "coeff": self.coeff,
        }


def _poch_half(m: int) -> Fraction:
    out = Fraction(1)
    for i in range(m):
        out *= Fraction(1, 2) + i
    return out


def _invert_series(c, K: int, ring: Ring):
    """e_1..e_K for the inverse of eps - c1 = sum_{n>=1} c_{n+1} xi^n / n!.

    `c` maps order -> ring element for c_2..; c(2) must be a unit (c2 > 0)."""
    zero, one = ring.zero, ring.one
    e = [zero] * (K + 1)
    c2_inv = ring.inv_unit(c(2))
    e[1] = c2_inv
    for k in range(2, K + 1):
        xi = [zero] + e[1:k] + [zero] * (K - k + 1)
        xi = xi[: k + 1]
        acc = zero
        xin = xi[:]
        for n in range(2, k + 1):
            xin = ser_mul(xin, xi, k, zero)
            cn1 = c(n + 1)
            if cn1:
                acc = acc + cn1 * ring.from_frac(Fraction(1, math.factorial(n))) * xin[k]
        e[k] = acc * ring.from_frac(-1) * c2_inv
    return e


def invert_saddle_series(c, K: int) -> InverseSaddleSeries:
    """Invert the saddle relation for xi(eps); exact when the cumulants are."""
    if len(c) < K + 1:
        raise ArityError(f"need c_1..c_{K + 1}, got {len(c)} cumulants")
    if c[1] <= 0:
        raise DegenerateModelError("series inversion requires c2 > 0")
    ring = ring_for(c)
    conv = ring.from_frac

    def cum(i):
        return conv(c[i - 1]) if i - 1 < len(c) else ring.zero

    e = _invert_series(cum, K, ring)
    return InverseSaddleSeries(e=tuple(e[1:]), exact=ring is FRACTION_RING)


def _solve_recurrences(cum, n_max: int, ring: Ring):
    """Order-by-order solve of the two recurrences; returns (a, b) lists.

    At order s^{n+1} the unknowns enter linearly: e1*a_n + 2 e2*b_n from the
    supplementary equation and 2 e1*b_n from the normalisation, everything
    else is known from lower orders.
    """
    zero, one = ring.zero, ring.one
    J = n_max + 1
    Kmax = 2 * J
    e = _invert_series(cum, Kmax, ring)
    e1_inv = ring.inv_unit(e[1])
    two_e1_inv = ring.inv_unit(e[1] * ring.from_frac(2))
    a, b = [], []
    for n in range(n_max + 1):
        j = n + 1
        A = [zero] * (J + 1)
        W = [zero] * (J + 1)
        for i in range(len(a)):
            A[i + 1] = a[i]
            W[i + 1] = b[i] * ring.from_frac(4)
        p0 = zero
        q0 = zero
        for k in range(1, Kmax + 1):
            if not e[k]:
                continue
            for m in range(k // 2 + 1):
                if k - m > j:
                    continue
                term = ser_mul(
                    ser_pow(A, k - 2 * m, j, zero, one),
                    ser_pow(W, m, j, zero, one),
                    j,
                    zero,
                )
                if term[j]:
                    w = Fraction(math.comb(k, 2 * m)) * _poch_half(m) / math.factorial(m)
                    p0 = p0 + e[k] * term[j] * ring.from_frac(w)
            for m in range((k - 1) // 2 + 1):
                if k - m > j:
                    continue
                term = ser_mul(
                    ser_pow(A, k - 2 * m - 1, j, zero, one),
                    ser_pow(W, m + 1, j, zero, one),
                    j,
                    zero,
                )
                if term[j]:
                    w = (
                        Fraction(math.comb(k, 2 * m + 1))
                        * _poch_half(m + 1)
                        / math.factorial(m + 1)
                    )
                    q0 = q0 + e[k] * term[j] * ring.from_frac(w)
        rhs = ring.from_frac(2) if j == 1 else zero
        bn = (rhs - q0) * two_e1_inv
        an = (p0 + e[2] * bn * ring.from_frac(2)) * ring.from_frac(-1) * e1_inv
        a.append(an)
        b.append(bn)
    return a, b


def lanczos_taylor(c, n_max: int) -> SeriesCoefficients:
    """Taylor coefficients a_0..a_{n_max}, b_0..b_{n_max} from cumulants c_1.."""
    if len(c) < 2 * n_max + 2:
        raise ArityError(
            f"need {2 * n_max + 2} cumulants for n_max={n_max}, got {len(c)}"
        )
    if c[1] <= 0:
        raise DegenerateModelError("c2 must be positive")
    ring = ring_for(c)
    conv = ring.from_frac

    def cum(i):
        return conv(c[i - 1]) if i - 1 < len(c) else ring.zero

    a, b = _solve_recurrences(cum, n_max, ring)
    return SeriesCoefficients(
        a=tuple(a), b=tuple(b), c1=c[0], exact=ring is FRACTION_RING
    )


@lru_cache(maxsize=None)
def _symbolic_taylor(n_max: int):
    def cum(i):
        return LaurentPoly.cumulant(i)

    return _solve_recurrences(cum, n_max, LAURENT_RING)


def partition_coefficients(n: int, which: str):
    """Exact integer coefficients of the order-n Taylor coefficient, labelled by
    integer partitions; `which` = "A" (alpha series) or "B" (beta^2 series)."""
    if which not in ("A", "B"):
        raise ArityError("which must be 'A' or 'B'")
    if not 0 <= n <= PARTITION_ORDER_CAP:
        raise ArityError(f"order n={n} outside [0, {PARTITION_ORDER_CAP}]")
    a, b = _symbolic_taylor(n)
    poly = a[n] if which == "A" else b[n]
    if which == "A":
        norm = Fraction(math.factorial(n + 1)) ** 2
        shift = 3 * n + 1
        total = 2 * n + 1
    else:
        norm = Fraction(math.factorial(n + 1)) * math.factorial(n)
        shift = 3 * n - 1
        total = 2 * n
    scaled = poly.shift_c2(shift) * norm
    out = []
    for c2_exp, parts, coeff in scaled.monomials():
        weight = sum(i * m for i, m in parts.items())
        degree = c2_exp + sum(parts.values())
        if weight != total or degree != total or c2_exp < 0:
            raise InternalConsistencyError(
                f"partition constraint violated for n={n} {which}: "
                f"c2^{c2_exp} * {parts} (needs weight=degree={total})"
            )
        if coeff.denominator != 1:
            raise InternalConsistencyError(
                f"non-integer table coefficient {coeff} at n={n} {which}"
            )
        lam = tuple(
            sorted((i for i, m in parts.items() for _ in range(m)), reverse=True)
        )
        out.append(PartitionTerm(n=n, which=which, lam=lam, coeff=int(coeff)))
    out.sort(key=lambda term: (len(term.lam), term.lam), reverse=True)
    return out


def table_export(orders_a, orders_b) -> list[dict]:
    """JSON-ready list of every partition term in the requested blocks."""
    out = []
    for n in orders_a:
        out.extend(t.to_json() for t in partition_coefficients(n, "A"))
    for n in orders_b:
        out.extend(t.to_json() for t in partition_coefficients(n, "B"))
    return out


# -- hierarchy route ------------------------------------------------------------
#
# Jets are lists of Taylor coefficients [f, f'/1!, f''/2!, ...] around the base
# point; products/quotients are valid to the shorter operand's depth.

def _jet_mul(a, b):
    d = min(len(a), len(b)) - 1
    return [sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(d + 1)]


def _jet_div(a, b):
    d = min(len(a), len(b)) - 1
    out = []
    for k in range(d + 1):
        acc = a[k]
        for i in range(k):
            acc = acc - out[i] * b[k - i]
        out.append(acc / b[0])
    return out


def _jet_d1(a):
    return [(k + 1) * a[k + 1] for k in range(len(a) - 1)]


def _jet_d2(a):
    return [(k + 1) * (k + 2) * a[k + 2] for k in range(len(a) - 2)]


def hierarchy_taylor(model_or_c, p_max: int, t: float = 0.0):
    """l_1(t)..l_{p_max}(t) and m_1(t)..m_{p_max-1}(t) of the s-expansion of
    the L-function: L(s,t) = sum_p l_p(t) s^p, log(L/(s l_1)) = sum_p m_p s^p.

    l_1 = F'', l_2 = (F'' F'''' - F'''^2) / (2 F''^2), and upward
    l_{p+2} = m_p'' / ((p+2)(p+1)). Exact when the input is a rational cumulant
    list (base point then fixed at t = 0). At t = 0 the values reproduce the
    beta^2 series: b_p = l_{p+1}(0).
    """
    depth = 2 * p_max + 2
    if hasattr(model_or_c, "f_jet"):
        jet = model_or_c.f_jet(t, depth)
        taylor = [float(jet[k]) / math.factorial(k) for k in range(depth + 1)]
        one = 1.0
    else:
        c = list(model_or_c)
        if t != 0:
            raise ArityError("cumulant-list input fixes the base point t = 0")
        if len(c) < depth:
            raise ArityError(f"need {depth} cumulants for p_max={p_max}")
        exact = all(isinstance(v, (int, Fraction)) for v in c)
        conv = Fraction if exact else float
        one = Fraction(1) if exact else 1.0
        taylor = [one * 0] + [
            conv(c[k - 1]) / math.factorial(k) for k in range(1, depth + 1)
        ]
    f2 = _jet_d2(taylor)
    if not f2 or f2[0] == 0:
        raise DegenerateModelError("F'' vanishes at the base point")
    f3 = _jet_d1(f2)
    f4 = _jet_d1(f3)
    l = {1: f2}
    num = [u - v for u, v in zip(_jet_mul(f2, f4), _jet_mul(f3, f3))]
    l[2] = [v * (one / 2) for v in _jet_div(num, _jet_mul(f2, f2))]
    m = {}
    x = {}
    for p in range(1, p_max):
        x[p] = _jet_div(l[p + 1], f2)
        acc = list(x[p])
        for j in range(1, p):
            prod = _jet_mul(m[j], x[p - j])
            w = one * j / p
            acc = [u - w * v for u, v in zip(acc, prod)]
        m[p] = acc
        if p + 2 <= p_max:
            l[p + 2] = [v * (one / ((p + 2) * (p + 1))) for v in _jet_d2(m[p])]
    l_vals = [l[p][0] for p in range(1, p_max + 1)]
    m_vals = [m[p][0] for p in range(1, p_max)]
    return l_vals, m_vals


def hierarchy_b_coefficients(model_or_c, n_max: int, t: float = 0.0):
    """b_0..b_{n_max} via the hierarchy route: b_p = l_{p+1}(t=0)."""
    l_vals, _ = hierarchy_taylor(model_or_c, n_max + 1, t)
    return list(l_vals)
