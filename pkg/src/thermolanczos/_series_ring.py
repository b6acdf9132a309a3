"""Sparse Laurent polynomials in the cumulants and truncated power-series helpers.

Coefficient ring for the exact symbolic route: polynomials in c2..c_{NVARS+1}
with rational coefficients, where only the c2 exponent may go negative (the
saddle inversion and the coupled recurrences never divide by anything other
than a monomial in c2). Plain Fractions and floats run through the same series
helpers by duck typing.
"""

from __future__ import annotations

from fractions import Fraction

NVARS = 20  # symbolic cumulants c2 .. c21; slot 0 of the exponent tuple is c2

_ZKEY = (0,) * NVARS


class LaurentPoly:
    """Sparse multivariate Laurent polynomial, dict of exponent tuple -> Fraction."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = terms if terms is not None else {}

    @staticmethod
    def const(q) -> "LaurentPoly":
        q = Fraction(q)
        return LaurentPoly({_ZKEY: q}) if q else LaurentPoly()

    @staticmethod
    def cumulant(i: int, power: int = 1) -> "LaurentPoly":
        """The variable c_i (i >= 2), raised to `power`."""
        if not 2 <= i <= NVARS + 1:
            raise ValueError(f"cumulant index {i} outside symbolic range")
        key = [0] * NVARS
        key[i - 2] = power
        return LaurentPoly({tuple(key): Fraction(1)})

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        return isinstance(other, LaurentPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return LaurentPoly(out)

    def __sub__(self, other):
        return self + (other * -1)

    def __mul__(self, other):
        if isinstance(other, LaurentPoly):
            out = {}
            for k1, v1 in self.terms.items():
                for k2, v2 in other.terms.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    s = out.get(k, 0) + v1 * v2
                    if s:
                        out[k] = s
                    else:
                        out.pop(k, None)
            return LaurentPoly(out)
        q = Fraction(other)
        if not q:
            return LaurentPoly()
        return LaurentPoly({k: v * q for k, v in self.terms.items()})

    __rmul__ = __mul__

    def inv_monomial(self) -> "LaurentPoly":
        """Inverse, defined only when the polynomial is a single monomial."""
        if len(self.terms) != 1:
            raise ValueError("only monomials are invertible in this ring")
        (key, val), = self.terms.items()
        return LaurentPoly({tuple(-e for e in key): 1 / val})

    def shift_c2(self, power: int) -> "LaurentPoly":
        """Multiply by c2**power (exponent shift)."""
        return LaurentPoly(
            {(k[0] + power,) + k[1:]: v for k, v in self.terms.items()}
        )

    def monomials(self):
        """Yield (c2_exponent, {part: multiplicity for higher cumulants}, coeff)."""
        for key, val in self.terms.items():
            parts = {i: key[i] for i in range(1, NVARS) if key[i]}
            yield key[0], parts, val


class Ring:
    """Minimal coefficient-ring adapter shared by the series algorithms."""

    def __init__(self, zero, one, from_frac, inv_unit):
        self.zero = zero
        self.one = one
        self.from_frac = from_frac
        self.inv_unit = inv_unit


FRACTION_RING = Ring(Fraction(0), Fraction(1), Fraction, lambda u: 1 / u)
FLOAT_RING = Ring(0.0, 1.0, float, lambda u: 1.0 / u)
LAURENT_RING = Ring(
    LaurentPoly(),
    LaurentPoly.const(1),
    LaurentPoly.const,
    lambda u: u.inv_monomial(),
)


def ring_for(values) -> Ring:
    """Pick the exact ring when every value is rational, else floats."""
    if all(isinstance(v, (int, Fraction)) for v in values):
        return FRACTION_RING
    return FLOAT_RING


def ser_mul(a, b, nmax, zero):
    """Product of truncated series (lists of ring elements), kept to order nmax."""
    out = [zero] * (nmax + 1)
    for i, ai in enumerate(a):
        if i > nmax or not ai:
            continue
        jtop = min(len(b) - 1, nmax - i)
        for j in range(jtop + 1):
            if b[j]:
                out[i + j] = out[i + j] + ai * b[j]
    return out


def ser_pow(a, p, nmax, zero, one):
    out = [one] + [zero] * nmax
    for _ in range(p):
        out = ser_mul(out, a, nmax, zero)
    return out
