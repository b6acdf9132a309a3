"""Cumulant-generating-function models and the saddle-point inverse.

A model is the per-site CGF F(t) of an extensive system, F(0) = 0 and
F''(t) > 0 on its validity domain. Built-in kinds:

* ``gaussian(c1, c2)``      -- F(t) = c1 t + c2 t^2 / 2
* ``xy_isotropic()``        -- F(t) = (1/pi) int_0^{pi/2} log cosh(t cos q) dq
* ``itf(x)``                -- transverse-field Ising chain with the disordered
                               trial state; quasiparticle energies
                               e_q = sqrt(1 + x^2 + 2 x cos q)
* ``polynomial(c, radius)`` -- truncated cumulant series, trusted on |t| <= radius

The q-integrals use Gauss-Legendre nodes (256 default, doubled until stable).
Derivatives of the integral models are exact: the t-shift of the integrand is
rewritten with hyperbolic addition and a truncated series log, so F^(k)(t) is a
single quadrature of analytically known coefficients rather than a finite
difference.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import (
    ArityError,
    DomainError,
    InvalidModelError,
    OutOfSpectrumError,
    ConvergenceError,
    QuadratureError,
    UnsupportedOrderError,
)
from .finite_ref import MomentTable

DERIVATIVE_CAP = 24        # highest F^(k) served by cgf_eval / cumulants
QUAD_NODES_DEFAULT = 256
QUAD_NODES_MAX = 1 << 17
QUAD_RTOL = 1e-13          # first-/second-derivative arrays
QUAD_RTOL_JET = 1e-12      # high-order jets (rounding grows with the order)

_LN2 = math.log(2.0)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int, lo: float, hi: float):
    from scipy.special import roots_legendre

    x, w = roots_legendre(n)
    half = 0.5 * (hi - lo)
    return half * (x + 1.0) + lo, half * w


@lru_cache(maxsize=None)
def _tanh_sinh(n: int):
    """Double-exponential nodes on (-1, 1): (1-x, 1+x, w).

    The q-integrands develop boundary layers of width exp(-O(|t|)) at the
    interval ends; tanh-sinh nodes approach the endpoints double-exponentially
    (distances down to ~1e-37 at umax = 4), so any such layer stays resolved.
    The endpoint distances are returned explicitly because x itself rounds to
    +-1 long before the layer scale is reached.
    """
    umax = 4.0
    u = np.linspace(-umax, umax, n)
    h = u[1] - u[0]
    s = 0.5 * math.pi * np.sinh(u)
    em = 2.0 / (1.0 + np.exp(2.0 * s))    # 1 - x
    ep = 2.0 / (1.0 + np.exp(-2.0 * s))   # 1 + x
    w = h * 0.5 * math.pi * np.cosh(u) / np.cosh(s) ** 2
    return em, ep, w


def _log_cosh(z):
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - _LN2


def _series_log_from_hyperbolic(scale, w0, order):
    """Taylor coefficients in u of log[cosh(scale*u) + w0*sinh(scale*u)].

    `scale`, `w0` are arrays over quadrature nodes; returns array of shape
    (order+1, nnodes) with the u^k coefficients (the k=0 row is zero).
    Requires |w0| <= 1, which holds for tanh-type ratios.
    """
    n = len(scale)
    d = np.zeros((order + 1, n))
    d[0] = 1.0
    pk = np.ones(n)
    for k in range(1, order + 1):
        pk = pk * scale / k                      # scale^k / k!
        d[k] = pk * w0 if k % 2 else pk
    ell = np.zeros_like(d)
    for k in range(1, order + 1):
        acc = d[k].copy()
        for j in range(1, k):
            acc -= (j / k) * ell[j] * d[k - j]
        ell[k] = acc
    return ell


@lru_cache(maxsize=None)
def _xy_nodes(n: int):
    """(weights, scale) for (1/pi) int_0^{pi/2} ... dq; scale = cos q built
    from the stable distance to the q = pi/2 endpoint."""
    em, ep, w = _tanh_sinh(n)
    half = math.pi / 4
    d_hi = half * em                      # pi/2 - q
    scale = np.sin(d_hi)                  # cos q
    return w * half / math.pi, scale


@lru_cache(maxsize=None)
def _itf_nodes(n: int, x: float):
    """(weights, 2 eps_q, 1 - a, 1 + a) for (1/2pi) int_0^pi ... dq with
    eps_q^2 = 1 + x^2 + 2 x cos q and a = (x + cos q)/eps_q, all endpoint-stable
    (cancellations near q = 0, pi are rewritten through sin(d/2) forms)."""
    em, ep, w = _tanh_sinh(n)
    half = math.pi / 2
    d_lo = half * ep                      # q
    d_hi = half * em                      # pi - q
    lower = d_lo <= half                  # q <= pi/2
    # cos q and sin^2 q from whichever endpoint distance is small
    cq = np.where(lower, np.cos(d_lo), -np.cos(d_hi))
    s2 = np.where(lower, np.sin(d_lo), np.sin(d_hi)) ** 2
    # eps^2 = (1+x)^2 - 4x sin^2(q/2) = (1-x)^2 + 4x sin^2((pi-q)/2)
    eps = np.sqrt(
        np.where(
            lower,
            (1.0 + x) ** 2 - 4.0 * x * np.sin(d_lo / 2) ** 2,
            (1.0 - x) ** 2 + 4.0 * x * np.sin(d_hi / 2) ** 2,
        )
    )
    b = np.where(lower, x + np.cos(d_lo), (x - 1.0) + 2.0 * np.sin(d_hi / 2) ** 2)
    splus = np.where(b >= 0, eps + b, s2 / (eps - b))   # eps + b without cancellation
    am1 = s2 / (eps * splus)                            # 1 - a
    ap1 = splus / eps                                   # 1 + a
    return w * half / (2 * math.pi), 2.0 * eps, am1, ap1


@dataclass(frozen=True)
class CumulantModel:
    """Immutable CGF model; all evaluation methods are pure."""

    kind: str
    params: tuple = ()
    trust_radius: float = math.inf
    critical: bool = False  # itf at x = 1: permitted, flagged

    # -- construction ------------------------------------------------------

    def __post_init__(self):
        if self.kind == "gaussian":
            c1, c2 = self.params
            if c2 <= 0:
                raise InvalidModelError("gaussian model needs c2 > 0")
        elif self.kind == "itf":
            (x,) = self.params
            if x < 0:
                raise InvalidModelError("itf coupling x must be >= 0")
        elif self.kind == "polynomial":
            c = self.params
            if len(c) < 2 or c[1] <= 0:
                raise InvalidModelError("polynomial model needs c2 > 0")
            if not math.isfinite(self.trust_radius) or self.trust_radius <= 0:
                raise InvalidModelError("polynomial model needs a finite trust radius")
            ts = np.linspace(-self.trust_radius, self.trust_radius, 129)
            f2 = np.array([float(self._poly_deriv(t, 2)) for t in ts])
            if np.any(f2 <= 0):
                raise InvalidModelError(
                    "F'' must stay positive on the trust interval"
                )
        elif self.kind != "xy_isotropic":
            raise InvalidModelError(f"unknown model kind {self.kind!r}")

    @property
    def eval_domain(self) -> tuple[float, float]:
        if self.kind == "polynomial":
            return (-self.trust_radius, self.trust_radius)
        return (-math.inf, math.inf)

    def _check_domain(self, t):
        lo, hi = self.eval_domain
        if np.any(np.asarray(t) < lo) or np.any(np.asarray(t) > hi):
            raise DomainError(f"t={t} outside eval domain [{lo}, {hi}]")

    # -- closed-form kinds -------------------------------------------------

    def _poly_deriv(self, t, order):
        """F^(order)(t) = sum_{k>=order} c_k t^(k-order) / (k-order)! for the
        truncated-series kind; exact when t and the cumulants are rational."""
        c = self.params
        exact = isinstance(t, (int, Fraction)) and all(
            isinstance(x, (int, Fraction)) for x in c
        )
        tt = t if exact else float(t)
        acc = Fraction(0) if exact else 0.0
        for k in range(max(order, 1), len(c) + 1):
            m = k - order
            coeff = Fraction(c[k - 1]) if exact else float(c[k - 1])
            acc = acc + coeff * tt**m / math.factorial(m)
        return acc

    # -- quadrature kinds ----------------------------------------------------

    def _node_data(self, n):
        """Per-node (weights, scale, stable 1 -/+ a pieces) for the hyperbolic
        forms; weights include the 1/pi prefactors."""
        if self.kind == "xy_isotropic":
            w, scale = _xy_nodes(n)
            return w, scale, None, None
        (x,) = self.params
        w, scale, am1, ap1 = _itf_nodes(n, float(x))
        return w, scale, am1, ap1

    def _quad_f0_w0(self, t, n):
        """(weights, log integrand at t, tanh-type ratio w0, scale) at n nodes."""
        w, scale, am1, ap1 = self._node_data(n)
        z = float(t) * scale
        if self.kind == "xy_isotropic":
            ln_t = _log_cosh(z)
            w0 = np.tanh(z)
        else:
            az = np.abs(z)
            # log[cosh z - a sinh z] = |z| - ln2 + log(m(|z|)) with the stable m below
            m = np.where(z >= 0, am1 + ap1 * np.exp(-2 * az), ap1 + am1 * np.exp(-2 * az))
            ln_t = az + np.log(m) - _LN2
            v = 0.5 * (np.log(ap1) - np.log(am1))  # artanh(a)
            w0 = np.tanh(z - v)
        return w, ln_t, w0, scale

    def _quad_jet(self, t, order):
        """F, F', .., F^(order) at scalar t for the integral kinds."""
        n = QUAD_NODES_DEFAULT
        prev = None
        while n <= QUAD_NODES_MAX:
            w, ln_t, w0, scale = self._quad_f0_w0(t, n)
            ell = _series_log_from_hyperbolic(scale, w0, order)
            ell[0] = ln_t
            jet = ell @ w
            jet *= np.array([math.factorial(k) for k in range(order + 1)])
            if prev is not None:
                tol = QUAD_RTOL_JET * np.maximum(1.0, np.abs(jet))
                if np.all(np.abs(jet - prev) <= tol):
                    return jet
            prev = jet
            n *= 2
        raise QuadratureError(
            f"q-integral did not stabilise below {QUAD_NODES_MAX} nodes (t={t})"
        )

    def _quad_d12(self, t_arr, order):
        """Vectorised F' (order=1) or F'' (order=2) over a t array."""
        n = QUAD_NODES_DEFAULT
        prev = None
        t_arr = np.atleast_1d(np.asarray(t_arr, dtype=float))
        while n <= QUAD_NODES_MAX:
            w, scale, am1, ap1 = self._node_data(n)
            z = np.multiply.outer(t_arr, scale)
            if self.kind == "itf":
                v = 0.5 * (np.log(ap1) - np.log(am1))
                th = np.tanh(z - v)
            else:
                th = np.tanh(z)
            if order == 1:
                vals = th @ (w * scale)
            else:
                vals = (1.0 - th * th) @ (w * scale * scale)
            if prev is not None and np.all(
                np.abs(vals - prev) <= QUAD_RTOL * np.maximum(1.0, np.abs(vals))
            ):
                return vals
            prev = vals
            n *= 2
        raise QuadratureError("q-integral derivative did not stabilise")

    # -- public evaluation ---------------------------------------------------

    def f_jet(self, t, order):
        """Array [F(t), F'(t), ..., F^(order)(t)]."""
        if order > DERIVATIVE_CAP:
            raise UnsupportedOrderError(
                f"order {order} above cap {DERIVATIVE_CAP}"
            )
        self._check_domain(t)
        if self.kind == "gaussian":
            c1, c2 = (float(v) for v in self.params)
            t = float(t)
            jet = [c1 * t + 0.5 * c2 * t * t, c1 + c2 * t, c2]
            return np.array(jet[: order + 1] + [0.0] * max(0, order - 2))
        if self.kind == "polynomial":
            return np.array(
                [float(self._poly_deriv(t, k)) for k in range(order + 1)]
            )
        return self._quad_jet(t, order)

    def f(self, t, order: int = 0):
        """F^(order)(t); the cgf_eval operation."""
        return float(self.f_jet(t, order)[order])

    def d1(self, t_arr):
        """F' on an array (vectorised)."""
        self._check_domain(t_arr)
        if self.kind == "gaussian":
            c1, c2 = (float(v) for v in self.params)
            return c1 + c2 * np.asarray(t_arr, dtype=float)
        if self.kind == "polynomial":
            return np.array([float(self._poly_deriv(t, 1)) for t in np.atleast_1d(t_arr)])
        return self._quad_d12(t_arr, 1)

    def d2(self, t_arr):
        """F'' on an array (vectorised)."""
        self._check_domain(t_arr)
        if self.kind == "gaussian":
            return np.full(np.shape(np.atleast_1d(t_arr)), float(self.params[1]))
        if self.kind == "polynomial":
            return np.array([float(self._poly_deriv(t, 2)) for t in np.atleast_1d(t_arr)])
        return self._quad_d12(t_arr, 2)

    # -- cumulants -----------------------------------------------------------

    def cumulants(self, K: int):
        """c_1..c_K as floats; c_n = F^(n)(0)."""
        if K > DERIVATIVE_CAP:
            raise UnsupportedOrderError(f"K={K} above cap {DERIVATIVE_CAP}")
        exact = self.exact_cumulants(K)
        if exact is not None:
            return [float(c) for c in exact]
        return [float(v) for v in self.f_jet(0.0, K)[1:]]

    def exact_cumulants(self, K: int):
        """c_1..c_K as Fractions when the model is exactly rational, else None."""
        if K > DERIVATIVE_CAP and self.kind != "polynomial":
            raise UnsupportedOrderError(f"K={K} above cap {DERIVATIVE_CAP}")
        if self.kind == "gaussian":
            c1, c2 = self.params
            if isinstance(c1, (int, Fraction)) and isinstance(c2, (int, Fraction)):
                return [Fraction(c1), Fraction(c2)] + [Fraction(0)] * (K - 2)
            return None
        if self.kind == "polynomial":
            c = self.params
            if all(isinstance(v, (int, Fraction)) for v in c):
                out = [Fraction(v) for v in c[:K]]
                return out + [Fraction(0)] * (K - len(out))
            return None
        if self.kind == "xy_isotropic":
            return _xy_exact_cumulants(K)
        return None  # itf cumulants are not rational

    # -- spectrum ------------------------------------------------------------

    def spectrum_bounds(self) -> tuple[float, float]:
        """(inf F', sup F') over the eval domain; +-inf when unbounded."""
        if self.kind == "gaussian":
            return (-math.inf, math.inf)
        if self.kind == "polynomial":
            r = self.trust_radius
            return (float(self._poly_deriv(-r, 1)), float(self._poly_deriv(r, 1)))
        if self.kind == "xy_isotropic":
            return (-1.0 / math.pi, 1.0 / math.pi)
        n = QUAD_NODES_DEFAULT
        prev = None
        while n <= QUAD_NODES_MAX:
            w, two_eps, _, _ = self._node_data(n)
            val = float(w @ two_eps)  # = (1/pi) int eps_q dq
            if prev is not None and abs(val - prev) < 1e-14 * max(1.0, abs(val)):
                break
            prev = val
            n *= 2
        return (-val, val)

    # -- serialisation ---------------------------------------------------

    def to_spec(self) -> dict:
        if self.kind == "gaussian":
            params = {"c1": _num_out(self.params[0]), "c2": _num_out(self.params[1])}
        elif self.kind == "itf":
            params = {"x": float(self.params[0])}
        elif self.kind == "polynomial":
            params = {
                "c": [_num_out(v) for v in self.params],
                "radius": self.trust_radius,
            }
        else:
            params = {}
        return {"kind": self.kind, "params": params}

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_spec(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _num_out(v):
    return str(v) if isinstance(v, (Fraction, int)) else float(v)


def _num_in(v):
    """JSON scalar or decimal/rational string -> Fraction (strings) or float."""
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


# -- constructors -------------------------------------------------------------

def gaussian(c1=0, c2=1) -> CumulantModel:
    return CumulantModel("gaussian", (_coerce(c1), _coerce(c2)))


def xy_isotropic() -> CumulantModel:
    return CumulantModel("xy_isotropic")


def itf(x) -> CumulantModel:
    x = float(x)
    return CumulantModel("itf", (x,), critical=(x == 1.0))


def polynomial(c, radius=1.0) -> CumulantModel:
    return CumulantModel("polynomial", tuple(_coerce(v) for v in c), float(radius))


def _coerce(v):
    return v if isinstance(v, (int, Fraction)) else float(v)


def from_spec(spec: dict) -> CumulantModel:
    """Build a model from its JSON document {"kind": ..., "params": {...}}."""
    kind = spec.get("kind")
    params = spec.get("params", {}) or {}
    if kind == "gaussian":
        return gaussian(_num_in(params.get("c1", 0)), _num_in(params.get("c2", 1)))
    if kind == "xy_isotropic":
        return xy_isotropic()
    if kind == "itf":
        return itf(float(params["x"]))
    if kind == "polynomial":
        c = [_num_in(v) for v in params["c"]]
        return polynomial(c, float(params.get("radius", 1.0)))
    raise InvalidModelError(f"unknown model kind {kind!r}")


# -- exact XY cumulants -------------------------------------------------------

@lru_cache(maxsize=None)
def _xy_exact_cumulants(K: int):
    """Rational XY cumulants: c_{2k} = (2k)! T_k C(2k,k) / (2 4^k), odd c vanish.

    T_k are the u^{2k} coefficients of log cosh u, obtained by a series log of
    cosh's even Taylor series.
    """
    kmax = K // 2
    ch = [Fraction(1, math.factorial(2 * j)) for j in range(kmax + 1)]  # in y = u^2
    lg = [Fraction(0)] * (kmax + 1)
    for k in range(1, kmax + 1):
        acc = ch[k]
        for j in range(1, k):
            acc -= Fraction(j, k) * lg[j] * ch[k - j]
        lg[k] = acc
    out = []
    for n in range(1, K + 1):
        if n % 2:
            out.append(Fraction(0))
        else:
            k = n // 2
            out.append(
                Fraction(math.factorial(n)) * lg[k] * math.comb(n, k) / (2 * 4**k)
            )
    return out


# -- moments ------------------------------------------------------------------

def moments_from_cumulants(c, N, K: int) -> MomentTable:
    """Moments mu_0..mu_K of the total H from cumulant densities via the
    complete Bell recurrence mu_{n+1} = sum_j C(n,j) nu_{j+1} mu_{n-j},
    nu_k = c_k N. Exact rational when c and N are."""
    if len(c) < K:
        raise ArityError(f"need {K} cumulants, got {len(c)}")
    exact = isinstance(N, (int, Fraction)) and all(
        isinstance(v, (int, Fraction)) for v in c
    )
    if exact:
        nu = [Fraction(v) * Fraction(N) for v in c]
        mu = [Fraction(1)]
    else:
        nu = [float(v) * float(N) for v in c]
        mu = [1.0]
    for n in range(K):
        acc = mu[0] * 0
        for j in range(min(n + 1, len(nu))):
            acc += math.comb(n, j) * nu[j] * mu[n - j]
        mu.append(acc)
    return MomentTable(N=N if exact else float(N), mu=mu, exact=exact)


# -- saddle inversion ---------------------------------------------------------

@dataclass(frozen=True)
class SaddleSolution:
    epsilon: float
    xi: float
    f2_at_xi: float


def saddle_xi(model: CumulantModel, epsilon: float, *, rtol: float = 1e-12) -> SaddleSolution:
    """Unique real xi with F'(xi) = epsilon (F'' > 0 makes F' monotone)."""
    lo_e, hi_e = model.spectrum_bounds()
    if not lo_e < epsilon < hi_e:
        bound = lo_e if epsilon <= lo_e else hi_e
        raise OutOfSpectrumError(
            f"epsilon={epsilon} outside attainable range ({lo_e}, {hi_e})",
            attained_bound=bound,
        )
    xi = float(saddle_xi_many(model, np.array([epsilon]), rtol=rtol)[0])
    f2 = float(model.d2(np.array([xi]))[0])
    return SaddleSolution(epsilon=epsilon, xi=xi, f2_at_xi=f2)


def saddle_xi_many(model, eps, *, x0=None, rtol=1e-12, max_iter=200, stall_ok=False):
    """Vectorised safeguarded Newton for F'(xi) = eps (array input).

    With stall_ok the best machine-precision iterate is returned when Newton
    stagnates below the requested tolerance (used by the integral-equation
    solver, whose own tolerance budgets for it)."""
    eps = np.asarray(eps, dtype=float)
    dom_lo, dom_hi = model.eval_domain
    c = model.cumulants(2)
    x = np.full(eps.shape, 0.0) if x0 is None else np.array(x0, dtype=float)
    if x0 is None:
        x = (eps - c[0]) / c[1]
    big = 1e308
    lo = np.full(eps.shape, max(dom_lo, -big))
    hi = np.full(eps.shape, min(dom_hi, big))
    if math.isinf(dom_lo):
        # expand a bracket pair around the guess until F' straddles eps
        span = np.maximum(1.0, np.abs(x))
        lo = x - span
        hi = x + span
        for _ in range(200):
            flo = model.d1(lo) - eps
            fhi = model.d1(hi) - eps
            bad_lo = flo > 0
            bad_hi = fhi < 0
            if not (bad_lo.any() or bad_hi.any()):
                break
            lo = np.where(bad_lo, lo - 2 * (hi - lo), lo)
            hi = np.where(bad_hi, hi + 2 * (hi - lo), hi)
        else:
            raise ConvergenceError("saddle bracket expansion failed")
    x = np.clip(x, lo, hi)
    tol = rtol * np.maximum(1.0, np.abs(eps))
    stalled = 0
    for _ in range(max_iter):
        r = model.d1(x) - eps
        if np.all(np.abs(r) <= tol):
            return x
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        f2 = model.d2(x)
        step = np.where(f2 > 0, r / np.where(f2 > 0, f2, 1.0), 0.0)
        xn = x - step
        inside = (xn > lo) & (xn < hi)
        xn = np.where(inside, xn, 0.5 * (lo + hi))
        if np.all(np.abs(xn - x) <= 4e-16 * np.maximum(1.0, np.abs(x))):
            stalled += 1
            if stalled >= 2:
                x = xn
                break
        else:
            stalled = 0
        x = xn
    r = model.d1(x) - eps
    if stall_ok or np.all(np.abs(r) <= tol):
        return x
    raise ConvergenceError(
        f"saddle Newton stalled, worst residual {np.max(np.abs(r)):.3e}", best=x
    )
