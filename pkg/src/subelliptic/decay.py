"""Decay of the solution operator along the escape curves.

For a start P and frequency xi the kernel integral is

    I(P, xi) = int_0^1 exp(xi * (phi(P) - phi(gamma(P, tau)))) d tau,

and M(xi) = max_P I(P, xi).  The curve family commutes with the
quasi-dilations, so starts close to the origin probe the regime where
M(xi) ~ xi^(-1/m); the decay grid therefore reaches far below the
certification radii.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from . import kernels
from .certify import grid_starts, phi_batch
from .distgeo import dressed_angle, point_at
from .errors import FitUnstable, QuadratureUnstable
from .escape import trace_plan
from .symbols import QhSymbol


@dataclass(frozen=True)
class DecayGrid:
    radial_points: int = 24
    angular_points: int = 256
    r_min_fraction: float = 1e-4     # smallest start radius, relative to omega
    panels: int = 8                   # geometric panels per curve piece
    order: int = 8                    # Gauss-Legendre nodes per panel

    def to_json(self):
        return dict(self.__dict__)


def graded_rule(panels: int, order: int):
    """Composite Gauss-Legendre rule on [0, 1], panels halving towards 0."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[0.0], 2.0 ** -np.arange(panels - 1, -1, -1)])
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append((hi - lo) / 2 * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _decay_starts(plans, grid: DecayGrid, ell):
    from .certify import GridSpec
    omega = min(p.omega_radius for p in plans)
    radii = omega * np.geomspace(grid.r_min_fraction, 1.0 - 1e-9, grid.radial_points)
    gs = GridSpec(radial_points=max(2, grid.radial_points), angular_points=grid.angular_points)
    return grid_starts(plans, gs, ell, omega, radii=radii)


def _piece_nodes(brk, rule):
    """Per-start quadrature nodes/weights covering each piece clipped to [0, 1]."""
    x, w = rule
    n, K = brk.shape
    edges = np.concatenate([brk, np.ones((n, 1))], axis=1)
    lo = np.clip(edges[:, :-1], 0.0, 1.0)
    hi = np.clip(edges[:, 1:], 0.0, 1.0)
    lo = np.where(np.isnan(lo), 1.0, lo)
    hi = np.where(np.isnan(hi), 1.0, hi)
    hi = np.maximum(hi, lo)
    # the last piece always runs to 1
    hi[:, -1] = 1.0
    width = hi - lo
    taus = (lo[:, :, None] + width[:, :, None] * x[None, None, :]).reshape(n, -1)
    wts = (width[:, :, None] * w[None, None, :]).reshape(n, -1)
    return taus, wts


@dataclass
class KernelData:
    """xi-independent part of the kernel integrals: increments and weights per start.

    ``starts`` holds (plan index, theta, radius) rows matching the rows of ``inc``.
    """
    inc: List[np.ndarray]
    logw: List[np.ndarray]
    starts: List[np.ndarray]
    sym: Optional[QhSymbol] = None
    plans: Optional[list] = None
    grid: Optional[DecayGrid] = None

    def integrals(self, xi: float) -> np.ndarray:
        out = []
        for inc, lw in zip(self.inc, self.logw):
            with np.errstate(over="ignore"):
                val = logsumexp(lw - xi * inc, axis=1)
            out.append(val)
        v = np.concatenate(out) if out else np.zeros(0)
        if not np.all(np.isfinite(v)):
            raise QuadratureUnstable(f"non-finite kernel integral at xi = {xi:g}")
        return np.exp(v)

    def norm(self, xi: float, polish: bool = True) -> float:
        """max over starts; with polish the radius of the best start is optimised."""
        vals = self.integrals(xi)
        i = int(vals.argmax())
        best = float(vals[i])
        if not polish or self.sym is None:
            return best
        k, th, r = np.concatenate(self.starts)[i]
        radii = np.unique(np.concatenate(self.starts)[:, 2])
        j = int(np.searchsorted(radii, r))
        lo = np.log(radii[max(j - 1, 0)])
        hi = np.log(radii[min(j + 1, len(radii) - 1)])
        if hi <= lo:
            return best
        plan = self.plans[int(k)]
        rule = graded_rule(self.grid.panels, self.grid.order)
        res = minimize_scalar(
            lambda lr: -start_integral(self.sym, plan, th, math.exp(lr), xi, rule),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
        return max(best, float(-res.fun))


def kernel_data(sym: QhSymbol, plans, grid: DecayGrid = DecayGrid()) -> KernelData:
    ell = sym.ell
    owner, theta, radius, t0, s0 = _decay_starts(plans, grid, ell)
    rule = graded_rule(grid.panels, grid.order)
    incs, lws, sts = [], [], []
    for k, plan in enumerate(plans):
        idx = np.nonzero(owner == k)[0]
        if len(idx) == 0:
            continue
        da, db, sg, ra, rb = plan.arrays()
        brk, _, _ = kernels.breakpoints(t0[idx], s0[idx], da, db, sg, ra, rb, ell)
        taus, wts = _piece_nodes(brk, rule)
        T, S, *_ = trace_plan(plan, t0[idx], s0[idx], taus, ell)
        inc = phi_batch(sym, T, S) - phi_batch(sym, t0[idx], s0[idx])[:, None]
        with np.errstate(divide="ignore"):
            lw = np.log(wts)
        incs.append(inc)
        lws.append(lw)
        sts.append(np.stack([np.full(len(idx), float(k)), theta[idx], radius[idx]], axis=1))
    return KernelData(incs, lws, sts, sym, list(plans), grid)


def start_integral(sym: QhSymbol, plan, theta: float, radius: float, xi: float, rule=None) -> float:
    """Kernel integral for a single start given in polar quasi-coordinates."""
    rule = graded_rule(8, 8) if rule is None else rule
    t0, s0 = point_at(np.array([theta]), np.array([radius]), sym.ell)
    t0, s0 = np.asarray(t0, dtype=float), np.asarray(s0, dtype=float)
    da, db, sg, ra, rb = plan.arrays()
    brk, _, _ = kernels.breakpoints(t0, s0, da, db, sg, ra, rb, sym.ell)
    taus, wts = _piece_nodes(brk, rule)
    T, S, *_ = trace_plan(plan, t0, s0, taus, sym.ell)
    inc = phi_batch(sym, T, S) - phi_batch(sym, t0, s0)[:, None]
    return float(np.sum(wts * np.exp(-xi * inc)))


def kernel_norm(sym: QhSymbol, plans, xi: float, grid: DecayGrid = DecayGrid()) -> float:
    if xi <= 0:
        raise ValueError("xi must be positive")
    return kernel_data(sym, plans, grid).norm(xi)


def bound_integral(xi: float, a: float, C3: float, n: int = 10 ** 6) -> float:
    """int_0^1 exp(-xi tau^a / C3) d tau by the composite midpoint rule."""
    tau = (np.arange(n) + 0.5) / n
    return float(np.exp(-xi * tau ** float(a) / C3).mean())


def watson_asymptote(xi: float, a: float, C3: float) -> float:
    a = float(a)
    return float(gamma_fn(1.0 + 1.0 / a) * (C3 / xi) ** (1.0 / a))


# ---------------------------------------------------------------- solution formula

def assign_plans(plans, t, s, ell):
    """Index of the plan whose sector contains each point (-1 on rays or origin)."""
    th = dressed_angle(np.asarray(t, dtype=float), np.asarray(s, dtype=float), ell)
    owner = np.full(np.shape(th), -1)
    for k, p in enumerate(plans):
        owner = np.where((owner < 0) & p.sector.contains_theta(th, 0.0), k, owner)
    return owner


def solve_u_hat_at(sym: QhSymbol, plans, f_hat: Callable, xi: float, t, s,
                   rule=None) -> np.ndarray:
    """u(P) = -int_0^1 exp(xi (phi(P) - phi(gamma))) f(gamma) . d gamma/d tau d tau.

    f_hat(T, S) returns the pair (F1, F2) of right-hand sides of the two
    transported equations.  Points outside every plan sector return NaN.
    """
    ell = sym.ell
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    # the right-hand side need not be analytic, so use a denser rule than the kernel sweep
    rule = graded_rule(4, 256) if rule is None else rule
    owner = assign_plans(plans, t, s, ell)
    out = np.full(t.shape, np.nan, dtype=complex)
    for k, plan in enumerate(plans):
        idx = np.nonzero(owner == k)[0]
        if len(idx) == 0:
            continue
        da, db, sg, ra, rb = plan.arrays()
        brk, _, _ = kernels.breakpoints(t[idx], s[idx], da, db, sg, ra, rb, ell)
        taus, wts = _piece_nodes(brk, rule)
        T, S, DT, DS, *_ = trace_plan(plan, t[idx], s[idx], taus, ell)
        F1, F2 = f_hat(T, S)
        expo = xi * (phi_batch(sym, t[idx], s[idx])[:, None] - phi_batch(sym, T, S))
        if np.any(expo > 700):
            raise QuadratureUnstable("kernel exponent overflows")
        integrand = np.exp(expo) * (np.asarray(F1) * DT + np.asarray(F2) * DS)
        out[idx] = -(wts * integrand).sum(axis=1)
    return out


def solve_u_hat(sym: QhSymbol, plans, f_hat: Callable, xi: float, grid=None):
    """Solution on the certification start grid; returns (t, s, u)."""
    from .certify import GridSpec
    grid = GridSpec(radial_points=16, angular_points=128) if grid is None else grid
    omega = min(p.omega_radius for p in plans)
    _, _, _, t0, s0 = grid_starts(plans, grid, sym.ell, omega)
    return t0, s0, solve_u_hat_at(sym, plans, f_hat, xi, t0, s0)


def phi_gradient(sym: QhSymbol, T, S, h: float = 1e-6):
    """(d phi/dt, d phi/ds); exact for polynomials, central differences otherwise."""
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    if sym.is_polynomial:
        gt = np.zeros_like(T)
        gs = np.zeros_like(T)
        for j, k, c in sym.monomials:
            if j:
                gt = gt + c * j * T ** (j - 1) * S ** k
            if k:
                gs = gs + c * k * T ** j * S ** (k - 1)
        return gt, gs
    gt = (phi_batch(sym, T + h, S) - phi_batch(sym, T - h, S)) / (2 * h)
    gs = (phi_batch(sym, T, S + h) - phi_batch(sym, T, S - h)) / (2 * h)
    return gt, gs


def bump_problem(sym: QhSymbol, radius: float, xi: float):
    """Manufactured pair (u0, f) with u0 a bump supported in {rho < radius}.

    f = (du0/dt - xi phi_t u0, du0/ds - xi phi_s u0), the Fourier-side
    right-hand side whose solution vanishing outside the support is u0.
    """
    L = sym.ell

    def q_and_grad(T, S):
        at = np.abs(T)
        q = (at ** (2 * L) + S * S) / radius ** (2 * L)
        qt = 2 * L * at ** (2 * L - 1) * np.sign(T) / radius ** (2 * L)
        qs = 2 * S / radius ** (2 * L)
        return q, qt, qs

    def u0(T, S):
        q, _, _ = q_and_grad(np.asarray(T, float), np.asarray(S, float))
        inside = q < 1
        out = np.zeros_like(q)
        out[inside] = np.exp(-1.0 / (1.0 - q[inside]))
        return out

    def f_hat(T, S):
        T = np.asarray(T, float)
        S = np.asarray(S, float)
        q, qt, qs = q_and_grad(T, S)
        u = u0(T, S)
        inside = q < 1
        g = np.zeros_like(q)
        g[inside] = -1.0 / (1.0 - q[inside]) ** 2
        pt, ps = phi_gradient(sym, T, S)
        return u * (g * qt - xi * pt), u * (g * qs - xi * ps)

    return u0, f_hat


# ---------------------------------------------------------------- sweep

@dataclass
class DecayReport:
    xi_grid: np.ndarray
    kernel_norm: np.ndarray
    fitted_slope: float
    predicted_slope: float
    fit_residual: float
    fit_window: tuple
    operator_ratio: Optional[np.ndarray] = None
    grid: DecayGrid = field(default_factory=DecayGrid)

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_slope - self.predicted_slope) / abs(self.predicted_slope)

    def to_json(self):
        return {
            "xi": [float(x) for x in self.xi_grid],
            "kernel_norm": [float(x) for x in self.kernel_norm],
            "operator_ratio": None if self.operator_ratio is None else [float(x) for x in self.operator_ratio],
            "fitted_slope": self.fitted_slope, "predicted_slope": self.predicted_slope,
            "fit_residual": self.fit_residual, "fit_window": list(self.fit_window),
            "grid": self.grid.to_json(),
        }

    def csv_rows(self):
        rows = ["xi,M,operator_ratio"]
        for i, (x, m) in enumerate(zip(self.xi_grid, self.kernel_norm)):
            r = "" if self.operator_ratio is None else repr(float(self.operator_ratio[i]))
            rows.append(f"{float(x)!r},{float(m)!r},{r}")
        return "\n".join(rows) + "\n"


def fit_slope(xi, M, window_decades=1.0):
    """Least-squares slope of log M against log xi over the top `window_decades`."""
    xi, M = np.asarray(xi, dtype=float), np.asarray(M, dtype=float)
    sel = xi >= xi.max() / 10 ** window_decades * (1 - 1e-12)
    if sel.sum() < 2:
        sel = np.ones_like(xi, dtype=bool)
    lx, ly = np.log(xi[sel]), np.log(M[sel])
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icpt)) ** 2)))
    return float(slope), resid, (float(xi[sel].min()), float(xi[sel].max()))


def sweep_and_fit(sym: QhSymbol, plans, xi_min: float, xi_max: float, n_points: int,
                  grid: DecayGrid = DecayGrid(), a=None, rhs=None) -> DecayReport:
    """Kernel norms over a geometric xi grid and the fitted decay slope.

    rhs, if given, maps xi to a right-hand side f_hat; the discrete operator
    ratio is then recorded alongside M(xi).
    """
    if not (xi_min > 0 and xi_max / xi_min >= 100):
        raise ValueError("need xi_max / xi_min >= 100")
    if n_points < 8:
        raise ValueError("need at least 8 sweep points")
    a = sym.m if a is None else float(a)
    xs = np.geomspace(xi_min, xi_max, n_points)
    data = kernel_data(sym, plans, grid)
    M = np.array([data.norm(x) for x in xs])
    ratio = None
    if rhs is not None:
        ratio = np.array([operator_ratio(sym, plans, rhs(x), x) for x in xs])
    slope, resid, window = fit_slope(xs, M)
    rep = DecayReport(xs, M, slope, -1.0 / a, resid, window, ratio, grid)
    if resid > 0.2:
        raise FitUnstable(f"log-log fit residual {resid:.3g} > 0.2", report=rep)
    return rep


def operator_ratio(sym: QhSymbol, plans, f_hat: Callable, xi: float, grid=None) -> float:
    """Discrete ||u|| / ||f|| over the start grid (f measured as a 2-vector)."""
    t0, s0, u = solve_u_hat(sym, plans, f_hat, xi, grid)
    F1, F2 = f_hat(t0, s0)
    fn = np.sqrt(np.sum(np.abs(F1) ** 2 + np.abs(F2) ** 2))
    return float(np.sqrt(np.sum(np.abs(u) ** 2)) / fn) if fn > 0 else 0.0
