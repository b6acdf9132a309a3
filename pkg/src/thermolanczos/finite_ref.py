"""Exact finite-N reference: Hankel determinants, Jacobi coefficients from
moments, the 1/N hierarchy, and the identity checks (Sylvester, Turan,
L-recursion) used as oracles for every thermodynamic-limit formula.

Arithmetic is exact rational whenever the moment table is exact, otherwise
mpmath floats at >= 200 bits: Hankel determinants are factorially
ill-conditioned, double precision dies around n = 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .errors import (
    ArityError,
    DegenerateModelError,
    IndefiniteMomentError,
    InternalConsistencyError,
    InvalidModelError,
)

MP_PREC_BITS = 240  # >= 200 per the module contract, with headroom


@dataclass(frozen=True)
class MomentTable:
    """Moments mu_0..mu_K of the total Hamiltonian at system size N."""

    N: object                # positive real; Fraction/int when exact
    mu: tuple = ()
    exact: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(self.mu))
        if len(self.mu) == 0 or self.mu[0] != 1:
            raise InvalidModelError("moment table must start with mu_0 = 1")

    @property
    def order(self) -> int:
        return len(self.mu) - 1

    def to_json(self) -> dict:
        mu = [str(m) if self.exact else repr(float(m)) for m in self.mu]
        n = str(self.N) if self.exact else float(self.N)
        return {"N": n, "mu": mu, "exact": self.exact}

    @staticmethod
    def from_json(doc: dict) -> "MomentTable":
        exact = bool(doc["exact"])
        if exact:
            return MomentTable(
                N=Fraction(str(doc["N"])),
                mu=tuple(Fraction(str(m)) for m in doc["mu"]),
                exact=True,
            )
        return MomentTable(
            N=float(doc["N"]), mu=tuple(float(m) for m in doc["mu"]), exact=False
        )


@dataclass
class JacobiData:
    """Three-term recurrence data in total-H units.

    alpha[n] for n = 0..n_top; beta2[n] for n = 1..n_top with beta2[0] = 1 by
    convention; h[n] the normalisations; delta[n] the Hankel determinants.
    n_T is set when the recurrence terminated exactly (beta2 hit zero).
    """

    alpha: list
    beta2: list
    h: list
    delta: list
    exact: bool
    n_T: int | None = None

    @property
    def n_top(self) -> int:
        return len(self.alpha) - 1


def _det_fraction(m):
    """Determinant by fraction-free-ish Gaussian elimination on Fractions."""
    a = [row[:] for row in m]
    n = len(a)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] * inv
            if f:
                for cc in range(col, n):
                    a[r][cc] -= f * a[col][cc]
    return det


def _det_mp(m):
    with mpmath.workprec(MP_PREC_BITS):
        return mpmath.det(mpmath.matrix(m))


def hankel_determinants(m: MomentTable, n_max: int):
    """Delta_0..Delta_{n_max}, Delta_n = det (mu_{i+j})_{i,j=0..n}."""
    if 2 * n_max > m.order:
        raise ArityError(f"need mu up to {2 * n_max}, table has {m.order}")
    out = []
    for n in range(n_max + 1):
        mat = [[m.mu[i + j] for j in range(n + 1)] for i in range(n + 1)]
        if m.exact:
            d = _det_fraction(mat)
            positive = d > 0
        else:
            with mpmath.workprec(MP_PREC_BITS):
                d = _det_mp([[_to_mpf(x) for x in row] for row in mat])
                positive = d > 0
        if not positive:
            raise IndefiniteMomentError(
                f"Hankel determinant Delta_{n} = {d} is not positive"
            )
        out.append(d)
    return out


def jacobi_from_moments(m: MomentTable, n_max: int) -> JacobiData:
    """Chebyshev's moment-to-Jacobi algorithm with mixed moments
    sigma_{k,l} = <pi_k, x^l>; cross-validated against the Hankel ratio
    beta2_n = Delta_n Delta_{n-2} / Delta_{n-1}^2."""
    if 2 * n_max + 1 > m.order:
        raise ArityError(f"need mu up to {2 * n_max + 1}, table has {m.order}")
    if m.exact:
        mu = [Fraction(x) for x in m.mu]
        one = Fraction(1)
        tiny = None
    else:
        mu = [_to_mpf(x) for x in m.mu]
        one = mpmath.mpf(1)
        tiny = mpmath.mpf(2) ** (-(MP_PREC_BITS // 2))

    with mpmath.workprec(MP_PREC_BITS):
        K = m.order
        sig_prev = [one * 0] * (K + 1)
        sig = list(mu)
        alpha = [mu[1] / mu[0]]
        beta2 = [one]
        h = [mu[0]]
        n_T = None
        for k in range(1, n_max + 1):
            a_prev, b_prev = alpha[k - 1], beta2[k - 1]
            nxt = [one * 0] * (K + 1)
            for l in range(k, 2 * n_max - k + 2):
                nxt[l] = sig[l + 1] - a_prev * sig[l] - b_prev * sig_prev[l]
            hk = nxt[k]
            zero_h = (hk == 0) if m.exact else (abs(hk) <= tiny * abs(h[-1]))
            if zero_h:
                n_T = k
                break
            if hk < 0:
                raise IndefiniteMomentError(
                    f"beta^2_{k} = {hk / h[-1]} <= 0: moment table not positive definite"
                )
            alpha.append(nxt[k + 1] / nxt[k] - sig[k] / sig[k - 1])
            beta2.append(nxt[k] / sig[k - 1])
            h.append(hk)
            sig_prev, sig = sig, nxt

        delta = [h[0]]
        for hk in h[1:]:
            delta.append(delta[-1] * hk)

        # internal cross-check: Hankel ratio route for beta2
        for n in range(2, len(beta2)):
            ratio = delta[n] * delta[n - 2] / delta[n - 1] ** 2
            if m.exact:
                ok = ratio == beta2[n]
            else:
                ok = abs(ratio - beta2[n]) <= mpmath.mpf(2) ** (-80) * abs(beta2[n])
            if not ok:
                raise InternalConsistencyError(
                    f"Hankel-ratio cross-check failed at n={n}"
                )

    return JacobiData(
        alpha=alpha, beta2=beta2, h=h, delta=delta, exact=m.exact, n_T=n_T
    )


def density_scaled(j: JacobiData, N):
    """(alpha_n / N, beta2_n / N^2): the intensive coefficients that converge
    to the Lanczos functions alpha(s), beta^2(s) at fixed s = n/N."""
    if j.exact:
        NN = Fraction(N)
        return (
            [a / NN for a in j.alpha],
            [b / NN**2 for b in j.beta2],
        )
    with mpmath.workprec(MP_PREC_BITS):
        NN = mpmath.mpf(N)
        return ([a / NN for a in j.alpha], [b / NN**2 for b in j.beta2])


# -- printed large-N truncations ----------------------------------------------

def expansion_check(c, N, n: int):
    """The printed three-term truncations of alpha_n, beta^2_n (total units):

    alpha_n  = c1 N + n c3/c2 + (1/2) n(n-1) [ (3c3^3 - 4c2c3c4 + c2^2c5) / (2c2^4) ] / N
    beta^2_n = n c2 N + (1/2) n(n-1) (c2c4 - c3^2)/c2^2
             + (1/6) n(n-1)(n-2) [ (-12c3^4 + 21c2c3^2c4 - 4c2^2c4^2 - 6c2^2c3c5 + c2^3c6) / (2c2^5) ] / N
    """
    if len(c) < 6:
        raise ArityError("expansion_check needs c1..c6")
    exact = all(isinstance(v, (int, Fraction)) for v in c) and isinstance(
        N, (int, Fraction)
    )
    conv = Fraction if exact else float
    c1, c2, c3, c4, c5, c6 = (conv(v) for v in c[:6])
    if c2 <= 0:
        raise InvalidModelError("c2 must be positive")
    N = conv(N)
    xa = (3 * c3**3 - 4 * c2 * c3 * c4 + c2**2 * c5) / (2 * c2**4)
    xb = (
        -12 * c3**4
        + 21 * c2 * c3**2 * c4
        - 4 * c2**2 * c4**2
        - 6 * c2**2 * c3 * c5
        + c2**3 * c6
    ) / (2 * c2**5)
    half = Fraction(1, 2) if exact else 0.5
    sixth = Fraction(1, 6) if exact else 1.0 / 6.0
    alpha = c1 * N + n * c3 / c2 + half * n * (n - 1) * xa / N
    beta2 = (
        n * c2 * N
        + half * n * (n - 1) * (c2 * c4 - c3**2) / c2**2
        + sixth * n * (n - 1) * (n - 2) * xb / N
    )
    return alpha, beta2


# -- 1/N hierarchy ------------------------------------------------------------

_D2_STEP = 1e-3  # central differences, Richardson-extrapolated once


def _d2(f, t, h=_D2_STEP):
    c_h = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)
    hh = 0.5 * h
    c_h2 = (f(t + hh) - 2.0 * f(t) + f(t - hh)) / (hh * hh)
    return (4.0 * c_h2 - c_h) / 3.0


def hierarchy_l_np(model, n_max: int, p_max: int, t_grid):
    """Coefficients l_{np}(t) of the descending 1/N series of the L-function.

    l_{n1} = n F''(t); l_{n2} = sum_{j<n} j D_t^2 log l_{n-j,1};
    l_{np} = sum_{j<n} j m''_{n-j,p-2} for p >= 3, with the m's defined by the
    series log of 1 + sum_p (l_{n,p+1}/l_{n,1}) z^p. Returns an array of shape
    (n_max+1, p_max, len(t_grid)) indexed [n, p-1, i].
    """
    if p_max > 4:
        raise ArityError("p_max capped at 4")
    t_grid = [float(t) for t in np.atleast_1d(t_grid)]

    cache: dict = {}

    def f2(t):
        v = float(model.d2(np.array([t]))[0])
        if v == 0.0:
            raise DegenerateModelError(f"F''({t}) = 0")
        return v

    def l_np(n, p, t):
        key = ("l", n, p, round(t, 14))
        if key in cache:
            return cache[key]
        if n == 0:
            val = 0.0
        elif p == 1:
            val = n * f2(t)
        elif p == 2:
            val = sum(
                j * _d2(lambda tt, nn=n - j: math.log(l_np(nn, 1, tt)), t)
                for j in range(1, n)
            )
        else:
            val = sum(
                j * _d2(lambda tt, nn=n - j: m_np(nn, p - 2, tt), t)
                for j in range(1, n)
            )
        cache[key] = val
        return val

    def m_np(n, p, t):
        key = ("m", n, p, round(t, 14))
        if key in cache:
            return cache[key]
        l1 = l_np(n, 1, t)
        x = [l_np(n, q + 1, t) / l1 for q in range(1, p + 1)]  # x[q-1] = l_{n,q+1}/l_{n,1}
        mm = []
        for q in range(1, p + 1):
            acc = x[q - 1]
            for j in range(1, q):
                acc -= (j / q) * mm[j - 1] * x[q - j - 1]
            mm.append(acc)
        cache[key] = mm[p - 1]
        return mm[p - 1]

    out = np.zeros((n_max + 1, p_max, len(t_grid)))
    for n in range(n_max + 1):
        for p in range(1, p_max + 1):
            for i, t in enumerate(t_grid):
                out[n, p - 1, i] = l_np(n, p, t)
    return out


# -- Turan identity -------------------------------------------------------------

def turan_identity_check(j: JacobiData, epsilon, n: int) -> float:
    """|D_n - beta2_n D_{n-1} - (a_n - a_{n-1}) p_n p_{n-1}
        - (beta2_n - beta2_{n-1}) p_n p_{n-2}| with D_k = p_k^2 - p_{k+1} p_{k-1}.

    Exact rational when the data is exact and epsilon rational; complex
    epsilon goes through mpmath at extended precision.
    """
    if n + 1 > j.n_top:
        raise ArityError(f"need coefficients up to n+1 = {n + 1}")
    complex_eps = isinstance(epsilon, complex)
    if j.exact and not complex_eps:
        eps = Fraction(epsilon)
        alpha = [Fraction(a) for a in j.alpha]
        beta2 = [Fraction(b) for b in j.beta2]
        p = [Fraction(1), eps - alpha[0]]
        for k in range(1, n + 1):
            p.append((eps - alpha[k]) * p[k] - beta2[k] * p[k - 1])
        d_n = p[n] ** 2 - p[n + 1] * p[n - 1]
        d_nm1 = p[n - 1] ** 2 - p[n] * p[n - 2] if n >= 2 else (
            p[0] ** 2 - p[1] * 0
        )
        rhs = (
            beta2[n] * d_nm1
            + (alpha[n] - alpha[n - 1]) * p[n] * p[n - 1]
            + (beta2[n] - beta2[n - 1]) * p[n] * (p[n - 2] if n >= 2 else 0)
        )
        return float(abs(d_n - rhs))
    with mpmath.workprec(MP_PREC_BITS):
        eps = mpmath.mpc(epsilon)
        alpha = [_to_mpf(a) for a in j.alpha]
        beta2 = [_to_mpf(b) for b in j.beta2]
        p = [mpmath.mpc(1), eps - alpha[0]]
        for k in range(1, n + 1):
            p.append((eps - alpha[k]) * p[k] - beta2[k] * p[k - 1])
        d_n = p[n] ** 2 - p[n + 1] * p[n - 1]
        d_nm1 = p[n - 1] ** 2 - p[n] * (p[n - 2] if n >= 2 else 0)
        rhs = (
            beta2[n] * d_nm1
            + (alpha[n] - alpha[n - 1]) * p[n] * p[n - 1]
            + (beta2[n] - beta2[n - 1]) * p[n] * (p[n - 2] if n >= 2 else 0)
        )
        return float(abs(d_n - rhs))


# -- t-evolved Hankel identities -------------------------------------------------

def _to_mpf(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    if isinstance(x, int):
        return mpmath.mpf(x)
    return mpmath.mpf(float(x)) if not isinstance(x, mpmath.mpf) else x


def mgf_jet(model, N, t, order: int):
    """M(t), M'(t), ..., M^(order)(t) for M = exp(N F), as mpf at extended
    precision; these are the moments <H^k e^{tH}>, so d/dt is the moment index
    shift. Restricted to the closed-form rational kinds so the F-jet is exact."""
    tq = Fraction(t)
    if model.kind == "gaussian":
        c1, c2 = Fraction(model.params[0]), Fraction(model.params[1])
        fj = [c1 * tq + c2 * tq * tq / 2, c1 + c2 * tq, c2]
        fj += [Fraction(0)] * max(0, order - 1)
    elif model.kind == "polynomial":
        fj = [model._poly_deriv(tq, k) for k in range(order + 1)]
    else:
        raise InvalidModelError(
            "t-evolved Hankel checks need a gaussian or polynomial model"
        )
    nq = Fraction(N)
    out = [mpmath.exp(_to_mpf(nq * fj[0]))]
    for k in range(order):
        acc = mpmath.mpf(0)
        for jj in range(k + 1):
            acc += math.comb(k, jj) * _to_mpf(nq * fj[jj + 1]) * out[k - jj]
        out.append(acc)
    return out


def _hankel_from_mgf(model, N, t, n: int):
    if n < 0:
        return mpmath.mpf(1)
    mj = mgf_jet(model, N, t, 2 * n)
    return _det_mp([[mj[i + jj] for jj in range(n + 1)] for i in range(n + 1)])


def sylvester_residual(model, N, n: int, t=0, h=Fraction(1, 1000)) -> float:
    """Relative residual of Delta_{n+1} Delta_{n-1} = Delta_n Delta_n'' - (Delta_n')^2
    with the t-derivatives from a 5-point stencil (the identity itself is exact;
    the residual is stencil-limited)."""
    t, h = Fraction(t), Fraction(h)
    with mpmath.workprec(MP_PREC_BITS):
        hh = _to_mpf(h)
        dn = [
            _hankel_from_mgf(model, N, t + s * h, n) for s in (-2, -1, 0, 1, 2)
        ]
        dnp = _hankel_from_mgf(model, N, t, n + 1)
        dnm = _hankel_from_mgf(model, N, t, n - 1)
        d1 = (dn[0] - 8 * dn[1] + 8 * dn[3] - dn[4]) / (12 * hh)
        d2 = (-dn[0] + 16 * dn[1] - 30 * dn[2] + 16 * dn[3] - dn[4]) / (12 * hh**2)
        lhs = dnp * dnm
        rhs = dn[2] * d2 - d1 * d1
        scale = max(abs(lhs), abs(rhs))
        return float(abs(lhs - rhs) / scale)


def l_recursion_residual(model, N, n: int, h=Fraction(1, 1000)) -> float:
    """Residual of the finite-N L-function equation of motion at t = 0:
    L_n = (1/N^2) sum_{j=1}^{n-1} j D_t^2 log L_{n-j} + (n/N) F''(0),
    with N^2 L_k = Delta_k Delta_{k-2} / Delta_{k-1}^2 and log L_0 = N F."""
    h = Fraction(h)
    with mpmath.workprec(MP_PREC_BITS):
        NN = _to_mpf(Fraction(N))
        hh = _to_mpf(h)

        def l_k(k, t):
            dk = _hankel_from_mgf(model, N, t, k)
            dk1 = _hankel_from_mgf(model, N, t, k - 1)
            dk2 = _hankel_from_mgf(model, N, t, k - 2)
            return dk * dk2 / dk1**2 / NN**2

        def d2log(k):
            vals = [mpmath.log(l_k(k, s * h)) for s in (-2, -1, 0, 1, 2)]
            return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (
                12 * hh**2
            )

        lhs = l_k(n, 0)
        rhs = (n / NN) * _to_mpf(model.f(0.0, 2))
        for j in range(1, n):
            rhs += j * d2log(n - j) / NN**2
        return float(abs(lhs - rhs) / abs(lhs))
