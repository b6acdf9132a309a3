"""Thermodynamic-limit solver for the Lanczos functions alpha(s), beta^2(s).

The two defining integral equations,

    0 = int_{a-2b}^{a+2b} xi(e) / sqrt(4b^2 - (e-a)^2) de
    s = (1/2pi) int_{a-2b}^{a+2b} e xi(e) / sqrt(4b^2 - (e-a)^2) de,

become smooth theta-integrals over [0, pi] under e = alpha + 2 beta cos(theta)
and are solved by damped Newton with the analytic Jacobian
(xi'(e) = 1/F''(xi)). Curve continuation, ground-state bounds, the one-cut
equilibrium charge density, and the integro-differential Toda marching
cross-check live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import series as series_mod
from .errors import (
    BreakdownError,
    ConvergenceError,
    DomainError,
    InvalidIntervalError,
    SpectrumBoundError,
)
from .models import CumulantModel, saddle_xi_many

RESIDUAL_TOL = 1e-10
THETA_NODES_DEFAULT = 128
THETA_NODES_MAX = 1 << 17
NEWTON_MAX_ITER = 50
DAMPING_HALVINGS = 8


@dataclass(frozen=True)
class LanczosPoint:
    s: float
    alpha: float
    beta2: float
    residuals: tuple
    newton_iters: int


@dataclass
class LanczosCurve:
    points: list
    eps_minus: list
    eps_plus: list
    model_id: str
    diagnostics: list = field(default_factory=list)

    @property
    def s_values(self):
        return [p.s for p in self.points]

    def envelopes_monotone(self, tol: float = 1e-12) -> bool:
        em, ep = self.eps_minus, self.eps_plus
        down = all(b <= a + tol for a, b in zip(em, em[1:]))
        up = all(b >= a - tol for a, b in zip(ep, ep[1:]))
        return down and up


@dataclass(frozen=True)
class ChargeDensity:
    s: float
    support: tuple
    eps: np.ndarray
    values: np.ndarray
    mass: float
    force_balance_residual: float


@dataclass(frozen=True)
class GseBounds:
    eps0: float
    eps0_sampled: float
    eps_inf: float | None
    eps_inf_sampled: float
    eps0_converged: bool
    eps_inf_converged: bool
    fit: dict


class _PointSystem:
    """Residuals and Jacobian of the two theta-form equations at node count m.

    The theta-integrals use tanh-sinh nodes: near the window ends the
    integrand develops layers of width sqrt(edge_distance / beta), and for
    gapped models the edge distance shrinks exponentially with s, far below
    what a uniform trapezoid can resolve. Energies are formed from the stable
    endpoint distances so the window edges stay meaningful at any scale.
    """

    def __init__(self, model, s, m):
        from .models import _tanh_sinh

        self.model = model
        self.s = s
        em, ep, w = _tanh_sinh(m + 1)
        self.w = w * (math.pi / 2)
        self.d0 = (math.pi / 2) * ep          # theta
        self.d1 = (math.pi / 2) * em          # pi - theta
        lower = self.d0 <= self.d1
        self.cos = np.where(lower, np.cos(self.d0), -np.cos(self.d1))
        # 1 -/+ cos(theta) without cancellation
        self.one_minus_cos = np.where(
            lower, 2 * np.sin(self.d0 / 2) ** 2, 2 * np.cos(self.d1 / 2) ** 2
        )
        self.one_plus_cos = np.where(
            lower, 2 * np.cos(self.d0 / 2) ** 2, 2 * np.sin(self.d1 / 2) ** 2
        )
        self.lo, self.hi = model.spectrum_bounds()
        self.xi = None

    def window_ok(self, alpha, beta):
        if beta <= 0:
            return False
        return (alpha - 2 * beta) > self.lo and (alpha + 2 * beta) < self.hi

    def _energies(self, alpha, beta):
        # eps = (alpha + 2 beta) - 2 beta (1 - cos) = (alpha - 2 beta) + 2 beta (1 + cos)
        upper = (alpha + 2 * beta) - 2 * beta * self.one_minus_cos
        lower = (alpha - 2 * beta) + 2 * beta * self.one_plus_cos
        return np.where(self.cos >= 0, upper, lower)

    def __call__(self, alpha, beta):
        eps = self._energies(alpha, beta)
        xi = saddle_xi_many(self.model, eps, x0=self.xi, rtol=1e-15, stall_ok=True)
        self.xi = xi
        f2 = self.model.d2(xi)
        xi_p = 1.0 / f2
        r1 = float(self.w @ xi)
        r2 = float(self.w @ (eps * xi)) / (2 * math.pi) - self.s
        j11 = float(self.w @ xi_p)
        j12 = float(self.w @ (2 * self.cos * xi_p))
        g = xi + eps * xi_p
        j21 = float(self.w @ g) / (2 * math.pi)
        j22 = float(self.w @ (2 * self.cos * g)) / (2 * math.pi)
        return np.array([r1, r2]), np.array([[j11, j12], [j21, j22]])


def _series_seed(model, s):
    c = model.cumulants(3)
    alpha = c[0] + s * c[2] / c[1]
    beta = math.sqrt(max(c[1] * s, 1e-300))
    lo, hi = model.spectrum_bounds()
    if math.isfinite(hi - lo):
        span = hi - lo
        alpha = min(max(alpha, lo + 0.05 * span), hi - 0.05 * span)
        beta = min(beta, 0.4 * min(alpha - lo, hi - alpha))
    return alpha, beta


def _newton_point(sys_, alpha, beta, tol):
    r, jac = sys_(alpha, beta)
    best = (np.max(np.abs(r)), alpha, beta, 0)
    for it in range(1, NEWTON_MAX_ITER + 1):
        if np.max(np.abs(r)) <= tol:
            return alpha, beta, r, it - 1
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in point solve", best=best)
        lam = 1.0
        for _ in range(DAMPING_HALVINGS + 1):
            a_try = alpha + lam * step[0]
            b_try = beta + lam * step[1]
            if sys_.window_ok(a_try, b_try):
                r_try, jac_try = sys_(a_try, b_try)
                if np.max(np.abs(r_try)) < np.max(np.abs(r)):
                    alpha, beta, r, jac = a_try, b_try, r_try, jac_try
                    break
            lam *= 0.5
        else:
            raise ConvergenceError(
                f"damping exhausted at s={sys_.s}", best=best
            )
        if np.max(np.abs(r)) < best[0]:
            best = (np.max(np.abs(r)), alpha, beta, it)
    if np.max(np.abs(r)) <= tol:
        return alpha, beta, r, NEWTON_MAX_ITER
    raise ConvergenceError(
        f"Newton did not reach {tol} at s={sys_.s}; best residual {best[0]:.3e}",
        best=best,
    )


def _solve_seeded(model, s, alpha, beta, tol, n_theta):
    """Newton at n_theta nodes, then node doubling until the solution is
    quadrature-converged."""
    lo, hi = model.spectrum_bounds()
    if not (lo < alpha < hi):
        raise SpectrumBoundError(f"seed alpha={alpha} outside spectrum ({lo}, {hi})")
    if math.isfinite(hi - lo):
        beta = min(beta, 0.499 * min(alpha - lo, hi - alpha))
    m = n_theta
    sys_ = _PointSystem(model, s, m)
    if not sys_.window_ok(alpha, beta):
        raise SpectrumBoundError(f"seed window for s={s} exceeds the range of F'")
    alpha, beta, r, iters = _newton_point(sys_, alpha, beta, tol)
    total_iters = iters
    while m < THETA_NODES_MAX:
        m *= 2
        sys2 = _PointSystem(model, s, m)
        a2, b2, r2, it2 = _newton_point(sys2, alpha, beta, tol)
        total_iters += it2
        scale = max(1.0, abs(alpha), beta * beta)
        done = (
            abs(a2 - alpha) <= 1e-12 * scale
            and abs(b2 * b2 - beta * beta) <= 1e-12 * scale
        )
        alpha, beta, r = a2, b2, r2
        if done:
            break
    else:
        raise ConvergenceError(
            f"theta quadrature not converged below {THETA_NODES_MAX} nodes at s={s}"
        )
    return LanczosPoint(
        s=float(s),
        alpha=float(alpha),
        beta2=float(beta * beta),
        residuals=(float(r[0]), float(r[1])),
        newton_iters=total_iters,
    )


def solve_point(
    model: CumulantModel,
    s: float,
    seed=None,
    *,
    tol: float = RESIDUAL_TOL,
    n_theta: int = THETA_NODES_DEFAULT,
) -> LanczosPoint:
    """Solve the two integral equations for (alpha, beta^2) at one s > 0.

    An explicit seed (alpha, beta2) is honoured as-is; otherwise a small-s
    series seed is tried and, if Newton rejects it, the point is reached by
    geometric continuation from smaller s. Final residuals are stored on the
    returned point.
    """
    if s <= 0:
        raise DomainError("solve_point needs s > 0")
    if seed is not None:
        alpha = float(seed[0])
        beta = math.sqrt(max(float(seed[1]), 1e-300))
        return _solve_seeded(model, s, alpha, beta, tol, n_theta)
    alpha, beta = _series_seed(model, s)
    try:
        return _solve_seeded(model, s, alpha, beta, tol, n_theta)
    except ConvergenceError:
        pass
    # continuation ladder: halve s until the series seed works, then walk up
    for k in range(1, 9):
        s0 = s / 2**k
        try:
            a0, b0 = _series_seed(model, s0)
            pt = _solve_seeded(model, s0, a0, b0, tol, n_theta)
        except ConvergenceError:
            continue
        try:
            while pt.s < s:
                s_next = min(2 * pt.s, s)
                pt = _solve_seeded(
                    model, s_next, pt.alpha, math.sqrt(pt.beta2), tol, n_theta
                )
            return pt
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"continuation toward s={s} failed at s~{pt.s}: {exc}"
            ) from exc
    raise ConvergenceError(f"no convergent seed found for s={s}")


def solve_curve(model: CumulantModel, s_grid, *, tol: float = RESIDUAL_TOL) -> LanczosCurve:
    """Continuation along an increasing s grid, seeded by the small-s series.

    The exact s = 0 point (alpha = c1, beta^2 = 0) is prepended. A monotone-
    envelope violation is recorded as a diagnostic, never silently dropped.
    """
    s_grid = [float(s) for s in s_grid]
    if any(s <= 0 for s in s_grid) or any(
        b <= a for a, b in zip(s_grid, s_grid[1:])
    ):
        raise DomainError("s_grid must be strictly increasing and positive")
    c = model.cumulants(2)
    points = [LanczosPoint(0.0, float(c[0]), 0.0, (0.0, 0.0), 0)]
    seed = None
    for s in s_grid:
        try:
            pt = solve_point(model, s, seed=seed, tol=tol)
        except ConvergenceError as exc:
            raise ConvergenceError(f"continuation failed at s={s}: {exc}") from exc
        points.append(pt)
        seed = (pt.alpha, pt.beta2)
    eps_minus = [p.alpha - 2 * math.sqrt(p.beta2) for p in points]
    eps_plus = [p.alpha + 2 * math.sqrt(p.beta2) for p in points]
    curve = LanczosCurve(
        points=points,
        eps_minus=eps_minus,
        eps_plus=eps_plus,
        model_id=model.spec_hash(),
    )
    if not curve.envelopes_monotone():
        curve.diagnostics.append("envelope monotonicity violated")
    return curve


def gse_bounds(curve: LanczosCurve) -> GseBounds:
    """Ground-state / spectrum-top estimates from the envelope curves, with a
    3-parameter power-law tail fit eps_-(s) ~ a + b s^-k over the last third."""
    s = np.array(curve.s_values)
    em = np.array(curve.eps_minus)
    ep = np.array(curve.eps_plus)
    eps0_sampled = float(em.min())
    epsinf_sampled = float(ep.max())

    def _tail_fit(vals, sign):
        # sign=-1 fits a decreasing tail, +1 an increasing one
        mask = s >= s[-1] * 2.0 / 3.0
        ss, vv = s[mask], vals[mask]
        if len(ss) < 4:
            return None
        best = None
        for k in np.geomspace(0.1, 8.0, 60):
            basis = np.column_stack([np.ones_like(ss), ss**-k])
            coef, res, *_ = np.linalg.lstsq(basis, vv, rcond=None)
            resid = float(np.sqrt(np.mean((basis @ coef - vv) ** 2)))
            if best is None or resid < best["resid"]:
                best = {"a": float(coef[0]), "b": float(coef[1]),
                        "k": float(k), "resid": resid}
        if best is None or sign * best["b"] > 0:
            return None
        return best

    span = max(1.0, abs(eps0_sampled), abs(epsinf_sampled))
    slope_m = (em[-1] - em[-2]) / (s[-1] - s[-2])
    slope_p = (ep[-1] - ep[-2]) / (s[-1] - s[-2])
    eps0_conv = abs(slope_m) * s[-1] < 1e-2 * span
    epsinf_conv = abs(slope_p) * s[-1] < 1e-2 * span

    fit_m = _tail_fit(em, sign=-1)
    fit_p = _tail_fit(ep, sign=+1)
    eps0 = eps0_sampled
    if eps0_conv and fit_m is not None and fit_m["resid"] < 1e-6 * span:
        eps0 = min(eps0_sampled, fit_m["a"])
    eps_inf = None
    if epsinf_conv:
        eps_inf = epsinf_sampled
        if fit_p is not None and fit_p["resid"] < 1e-6 * span:
            eps_inf = max(epsinf_sampled, fit_p["a"])
    return GseBounds(
        eps0=eps0,
        eps0_sampled=eps0_sampled,
        eps_inf=eps_inf,
        eps_inf_sampled=epsinf_sampled,
        eps0_converged=bool(eps0_conv),
        eps_inf_converged=bool(epsinf_conv),
        fit={"minus": fit_m, "plus": fit_p},
    )


def equilibrium_density(
    model: CumulantModel, point: LanczosPoint, node_count: int = 256
) -> ChargeDensity:
    """One-cut equilibrium charge density on (alpha - 2 beta, alpha + 2 beta).

    With e = alpha + 2 beta cos(theta) and the cosine expansion
    xi(theta) = sum_k xhat_k cos(k theta), the principal-value solution is
    sigma(theta) = (1/2pi) sum_{k>=1} xhat_k sin(k theta); its mass is
    beta xhat_1 / 2 = s when the point satisfies both equations.
    """
    import scipy.fft

    if point.beta2 <= 0:
        raise DomainError("equilibrium_density needs beta^2 > 0")
    alpha = point.alpha
    beta = math.sqrt(point.beta2)
    m = node_count
    theta = (np.arange(m) + 0.5) * math.pi / m
    eps = alpha + 2 * beta * np.cos(theta)
    xi = saddle_xi_many(model, eps)
    xhat = scipy.fft.dct(xi, type=2) / m  # xhat[k] = (2/M) sum xi_j cos(k theta_j)
    xhat[0] *= 0.5
    k = np.arange(m)
    sines = np.sin(np.outer(theta, k))
    sigma = sines @ (xhat * (k >= 1)) / (2 * math.pi)
    if np.min(sigma) < -1e-8:
        raise InvalidIntervalError(
            f"negative density {np.min(sigma):.3e}: wrong interval or multi-cut"
        )
    mass = float(beta * xhat[1] / 2.0)
    # independent force-balance check at offset angles (PV integral by midpoint
    # quadrature; the phi nodes interleave the theta nodes so no term is singular)
    phi = np.arange(1, m, 8) * math.pi / m
    eps_phi = alpha + 2 * beta * np.cos(phi)
    xi_phi = saddle_xi_many(model, eps_phi)
    kern = 1.0 / (np.cos(phi)[:, None] - np.cos(theta)[None, :])
    pv = (math.pi / m) * 2.0 * (kern @ (sigma * np.sin(theta)))
    resid = float(np.max(np.abs(pv - xi_phi)) / max(1.0, np.max(np.abs(xi_phi))))
    order = np.argsort(eps)
    return ChargeDensity(
        s=point.s,
        support=(alpha - 2 * beta, alpha + 2 * beta),
        eps=eps[order],
        values=sigma[order],
        mass=mass,
        force_balance_residual=resid,
    )


# -- Toda marching ---------------------------------------------------------------

@dataclass(frozen=True)
class TodaMarch:
    s: np.ndarray
    beta2: np.ndarray
    alpha: np.ndarray
    t_grid: np.ndarray


def _stencil_matrix(t, order):
    """Differentiation matrix using the 5 nearest nodes per row (centered in the
    interior, one-sided at the edges)."""
    n = len(t)
    width = 5
    mat = np.zeros((n, n))
    for i in range(n):
        j0 = min(max(i - 2, 0), n - width)
        idx = np.arange(j0, j0 + width)
        dx = t[idx] - t[i]
        vand = np.vander(dx, width, increasing=True).T  # row r: dx**r
        rhs = np.zeros(width)
        rhs[order] = math.factorial(order)
        mat[i, idx] = np.linalg.solve(vand, rhs)
    return mat


def toda_march(
    model: CumulantModel,
    s_max: float,
    ds: float = 1e-3,
    t_halfwidth: float = 0.1,
    nt: int = 9,
) -> TodaMarch:
    """March the integro-differential equation
    L(s,t) = int_0^s r D_t^2 log L(s-r, t) dr + s F''(t)
    by trapezoidal convolution; the r -> s end is regular because
    L ~ r F''(t) makes D_t^2 log L -> (log F'')'' there.

    Returns beta^2(s) = L(s, 0) and alpha(s) = F'(0) + int_0^s D_t log L(r,0) dr.
    """
    if nt < 5 or nt % 2 == 0:
        raise DomainError("nt must be odd and >= 5")
    t = np.linspace(-t_halfwidth, t_halfwidth, nt)
    center = nt // 2
    d1 = _stencil_matrix(t, 1)
    d2 = _stencil_matrix(t, 2)
    f2row = model.d2(t)
    if np.any(f2row <= 0):
        raise BreakdownError("F'' not positive on the t window")
    steps = int(round(s_max / ds))
    svals = np.arange(steps + 1) * ds
    big_l = np.zeros((steps + 1, nt))
    g = np.zeros((steps + 1, nt))
    dlog0 = np.zeros(steps + 1)
    logf2 = np.log(f2row)
    g[0] = d2 @ logf2
    dlog0[0] = (d1 @ logf2)[center]
    r = svals
    for k in range(1, steps + 1):
        w = np.full(k + 1, ds)
        w[0] *= 0.5
        w[-1] *= 0.5
        conv = (w * r[: k + 1]) @ g[k::-1]
        row = conv + svals[k] * f2row
        if np.any(row <= 0):
            raise BreakdownError(
                f"L <= 0 at s={svals[k]:.4f}: reduce ds or the t window"
            )
        big_l[k] = row
        logrow = np.log(row)
        g[k] = d2 @ logrow
        dlog0[k] = (d1 @ logrow)[center]
    alpha = np.zeros(steps + 1)
    f1 = model.f(0.0, 1)
    acc = 0.0
    for k in range(1, steps + 1):
        acc += 0.5 * ds * (dlog0[k - 1] + dlog0[k])
        alpha[k] = acc
    alpha += f1
    return TodaMarch(s=svals, beta2=big_l[:, center], alpha=alpha, t_grid=t)
