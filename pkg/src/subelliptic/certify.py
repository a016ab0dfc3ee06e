"""Grid verification of the escape-curve criterion and certificate assembly.

A certificate is a grid-verified claim: every minimum and maximum below is
taken over the discrete start x tau grid described by its GridSpec.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np

from . import kernels
from .circle import DEFAULT_SAMPLES, H2Verdict, check_H2
from .distgeo import TWO_PI, point_at, rho
from .errors import (CertificateRefused, ConditionFailure, EscapeFailure,
                     GrowthViolation, JacobianMismatch, PlanInfeasible)
from .escape import (SectorPlan, fd_jacobian, jacobian_closed_form,
                     plan_sectors, trace_plan)
from .symbols import QhSymbol, evaluate, negate

FD_RTOL = 1e-4
FD_EDGE = 1e-3      # finite-difference stencils stay this far (dressed radians) from the rays
CHUNK = 2048


@dataclass(frozen=True)
class GridSpec:
    radial_points: int = 48
    angular_points: int = 512
    tau_points: int = 256
    boundary_margin: float = 1e-9
    fd_fraction: float = 0.05
    inner_fraction: float = 0.125     # starts satisfy rho >= inner_fraction * omega

    def __post_init__(self):
        if min(self.radial_points, self.angular_points, self.tau_points) < 2:
            raise ValueError("grid sizes must be at least 2")
        if self.boundary_margin < 1e-9:
            raise ValueError("boundary_margin must be >= 1e-9")

    def refined(self, factor=2):
        return GridSpec(self.radial_points * factor, self.angular_points * factor,
                        self.tau_points * factor, self.boundary_margin, self.fd_fraction,
                        self.inner_fraction)

    def to_json(self):
        return asdict(self)


@dataclass
class Certificate:
    symbol_digest: str
    symbol: dict
    direction: str
    plans: List[SectorPlan]
    a: Fraction
    s_order: Fraction
    C1: float
    C2: float
    C3: float
    C_phi: float
    omega_radius: float
    grid: GridSpec
    conditions: Dict[str, bool]
    witnesses: Dict[str, object] = field(default_factory=dict)
    seed: int = 0
    n_starts: int = 0

    @property
    def ok(self) -> bool:
        finite = all(math.isfinite(c) and c > 0 for c in (self.C1, self.C2, self.C3))
        return finite and all(self.conditions.values())

    def to_json(self):
        return {
            "symbol": self.symbol, "symbol_digest": self.symbol_digest,
            "direction": self.direction, "pass": self.ok,
            "a": str(self.a), "s_order": str(self.s_order),
            "C1": _num(self.C1), "C2": _num(self.C2), "C3": _num(self.C3), "C_phi": _num(self.C_phi),
            "omega_radius": self.omega_radius, "grid": self.grid.to_json(),
            "conditions": dict(self.conditions), "witnesses": self.witnesses,
            "seed": self.seed, "n_starts": self.n_starts,
            "plans": [p.to_json() for p in self.plans],
        }


def _num(x):
    return x if math.isfinite(x) else str(x)


def growth_exponent(sym: QhSymbol, verdict: H2Verdict) -> Fraction:
    m = sym.weights.m
    return max(m, verdict.p_global) if verdict.p_global is not None else Fraction(m)


def phi_batch(sym: QhSymbol, T, S):
    if sym.is_polynomial:
        js, ks, cs = zip(*sym.monomials)
        return kernels.poly_eval(T, S, js, ks, cs)
    return np.asarray(evaluate(sym, T, S), dtype=float)


def _cheb(n):
    """n Chebyshev-Lobatto nodes on [0, 1] (both ends included)."""
    return 0.5 * (1.0 - np.cos(math.pi * np.arange(n) / (n - 1)))


def grid_starts(plans, grid: GridSpec, ell, omega, radii=None):
    """(plan index, theta, radius, t, s) arrays for the start grid.

    Each plan sector receives a share of angular_points proportional to its
    width, placed at Chebyshev nodes so that starts accumulate near the rays,
    where the curves change fastest.  Angles within boundary_margin of a ray
    form the excluded set E; the outermost nodes sit exactly on its edge.
    Radii are Chebyshev nodes on [inner_fraction * omega, omega).
    """
    total = sum(p.sector.width for p in plans)
    if abs(total - TWO_PI) > 1e-6:
        raise PlanInfeasible(f"plan sectors cover {total:.9f} rad instead of 2 pi")
    if radii is None:
        lo = grid.inner_fraction * omega
        radii = lo + (omega * (1 - 1e-9) - lo) * _cheb(grid.radial_points)
    radii = np.asarray(radii, dtype=float)
    owner, theta = [], []
    mg = grid.boundary_margin
    for k, p in enumerate(plans):
        w = p.sector.width
        n = max(4, int(round(grid.angular_points * w / TWO_PI)))
        th = p.sector.start.theta + mg + (w - 2 * mg) * _cheb(n)
        theta.append(np.mod(th, TWO_PI))
        owner.append(np.full(n, k))
    theta, owner = np.concatenate(theta), np.concatenate(owner)
    R, TH = np.meshgrid(radii, theta)
    OW = np.broadcast_to(owner[:, None], R.shape)
    t0, s0 = point_at(TH.ravel(), R.ravel(), ell)
    return OW.ravel(), TH.ravel(), R.ravel(), np.asarray(t0, dtype=float), np.asarray(s0, dtype=float)


def _knot_speeds(plan, t0, s0, ell):
    """|d gamma/d tau| at tau = 0+ and at both one-sided limits of each knot with tau <= 1.

    Returns (speeds, taus), each (n, 2 * pieces); unused slots hold 0 and NaN.
    """
    da, db, sg, ra, rb = plan.arrays()
    brk, bt, _ = kernels.breakpoints(t0, s0, da, db, sg, ra, rb, float(ell))
    n, K = brk.shape
    out = np.zeros((n, 2 * K))
    when = np.full((n, 2 * K), np.nan)
    ell = float(ell)
    for k in range(K):
        a, b, sgn = da[k], db[k], sg[k]
        ends = [(bt[:, k], brk[:, k])]
        if k + 1 < K:
            ends.append((bt[:, k + 1], brk[:, k + 1]))
        for e, (tk, tau_k) in enumerate(ends):
            ok = np.isfinite(tau_k) & (tau_k <= 1.0)
            if a != 0.0:
                ds = b * abs(a) ** (1.0 - ell) * ell * np.abs(np.where(ok, tk, 0.0)) ** (ell - 1.0)
                v = np.hypot(a, ds)
            else:
                v = np.full(n, abs(b))
            out[:, 2 * k + e] = np.where(ok, v, 0.0)
            when[:, 2 * k + e] = np.where(ok, tau_k, np.nan)
    return out, when


def certify(sym: QhSymbol, verdict: H2Verdict, plans=None, grid: GridSpec = GridSpec(),
            seed: int = 0, direction: str = "xi_positive", strict: bool = False) -> Certificate:
    """Check escape, tau-derivative, Jacobian and growth conditions on the grid."""
    if not verdict.ok:
        raise CertificateRefused(f"H2 fails at items {verdict.failed_items()}", verdict)
    ell = sym.ell
    if plans is None:
        plans = plan_sectors(verdict, ell)
    a = growth_exponent(sym, verdict)
    af = float(a)
    omega = min(p.omega_radius for p in plans)
    owner, theta, radius, t0, s0 = grid_starts(plans, grid, ell, omega)
    taus = np.arange(1, grid.tau_points + 1) / grid.tau_points
    rng = np.random.default_rng(seed)
    fd_pick = rng.random(len(t0)) < grid.fd_fraction
    for k, p in enumerate(plans):
        sel = owner == k
        edge = np.minimum(np.mod(theta[sel] - p.sector.start.theta, TWO_PI),
                          np.mod(p.sector.end.theta - theta[sel], TWO_PI))
        fd_pick[np.nonzero(sel)[0][edge < FD_EDGE]] = False

    C2, c2_arg = 0.0, None
    ratio_min, ratio_arg = math.inf, None
    c_phi = 0.0
    esc_fail = None
    grow_fail = None
    jac_min = math.inf
    fd_fail = None
    fd_worst = 0.0
    active = set()
    for k, plan in enumerate(plans):
        idx_all = np.nonzero(owner == k)[0]
        jac = [jacobian_closed_form(plan, i + 1, ell) for i in range(plan.pieces)]
        for c0 in range(0, len(idx_all), CHUNK):
            idx = idx_all[c0:c0 + CHUNK]
            T, S, DT, DS, piece, brk = trace_plan(plan, t0[idx], s0[idx], taus, ell)
            if np.isnan(brk).any():
                bad = idx[np.isnan(brk).any(axis=1)][0]
                raise EscapeFailure(f"{plan.label}: a ray is never reached",
                                    witness={"start": [t0[bad], s0[bad]]})
            speed = np.hypot(DT, DS)
            ks, ktau = _knot_speeds(plan, t0[idx], s0[idx], ell)
            if max(speed.max(), ks.max()) > C2:
                if ks.max() >= speed.max():
                    i = int(np.argmax(ks.max(axis=1)))
                    C2, tau_w = float(ks.max()), float(ktau.ravel()[np.argmax(ks)])
                else:
                    i, j = np.unravel_index(np.argmax(speed), speed.shape)
                    C2, tau_w = float(speed[i, j]), float(taus[j])
                c2_arg = {"plan": plan.label, "start": [float(t0[idx[i]]), float(s0[idx[i]])],
                          "tau": tau_w}
            for pc in np.unique(piece):
                active.add((k, int(pc)))
                jac_min = min(jac_min, abs(jac[int(pc)]))
            phi0 = phi_batch(sym, t0[idx], s0[idx])
            inc = phi_batch(sym, T, S) - phi0[:, None]
            if (inc <= 0).any() and grow_fail is None:
                i, j = np.argwhere(inc <= 0)[0]
                grow_fail = {"plan": plan.label, "start": [float(t0[idx[i]]), float(s0[idx[i]])],
                             "tau": float(taus[j]), "increment": float(inc[i, j])}
            ratio = inc / taus[None, :] ** af
            j = np.unravel_index(np.argmin(ratio), ratio.shape)
            if ratio[j] < ratio_min:
                ratio_min = float(ratio[j])
                ratio_arg = {"plan": plan.label, "start": [float(t0[idx[j[0]]]), float(s0[idx[j[0]]])],
                             "tau": float(taus[j[1]])}
            rho_t = rho(T, S, ell)
            c_phi = max(c_phi, float((taus[None, :] / rho_t).max()))
            out = rho_t[:, -1] > omega
            if not out.all() and esc_fail is None:
                i = int(np.argmin(out))
                esc_fail = {"plan": plan.label, "start": [float(t0[idx[i]]), float(s0[idx[i]])],
                            "rho_end": float(rho_t[i, -1])}
            # finite-difference cross-check of the closed-form Jacobians
            for i in np.nonzero(fd_pick[idx])[0]:
                st = (float(t0[idx[i]]), float(s0[idx[i]]))
                knots = list(brk[i]) + [1.0]
                for pc in range(plan.pieces):
                    lo, hi = knots[pc], min(knots[pc + 1], 1.0)
                    if lo >= 1.0 or hi <= lo:
                        continue
                    tm = 0.5 * (lo + hi)
                    fd = fd_jacobian(plan, st, tm, ell, dps=None if plan.pieces == 1 else 30)
                    err = abs(fd - jac[pc]) / abs(jac[pc])
                    fd_worst = max(fd_worst, err)
                    if err > FD_RTOL and fd_fail is None:
                        fd_fail = {"plan": plan.label, "start": list(st), "piece": pc + 1,
                                   "closed_form": jac[pc], "finite_difference": fd}

    C1 = 1.0 / jac_min if jac_min > 0 else math.inf
    C3 = 1.0 / ratio_min if ratio_min > 0 else math.inf
    conditions = {
        "escape": esc_fail is None,
        "dtau_bound": math.isfinite(C2),
        "jacobian_bound": math.isfinite(C1) and fd_fail is None,
        "growth_bound": grow_fail is None and ratio_min > 0,
    }
    witnesses = {"growth_min": ratio_arg, "speed_max": c2_arg, "fd_worst_rel": fd_worst}
    if esc_fail:
        witnesses["escape"] = esc_fail
    if grow_fail:
        witnesses["growth"] = grow_fail
    if fd_fail:
        witnesses["jacobian"] = fd_fail
    cert = Certificate(sym.digest(), sym.to_json(), direction, list(plans), a, 1 / a,
                       C1, C2, C3, c_phi, omega, grid, conditions, witnesses, seed, len(t0))
    if strict and not cert.ok:
        if grow_fail:
            raise GrowthViolation("nonpositive increment of phi along a curve", witness=grow_fail)
        if esc_fail:
            raise EscapeFailure("curve stays inside D(omega) at tau = 1", witness=esc_fail)
        if fd_fail:
            raise JacobianMismatch("closed-form and finite-difference Jacobians disagree", witness=fd_fail)
        raise ConditionFailure("certificate conditions fail", witness=conditions)
    return cert


def run_pipeline(sym: QhSymbol, grid: GridSpec = GridSpec(), seed: int = 0,
                 n_samples: int = DEFAULT_SAMPLES, direction: str = "xi_positive", strict=False):
    """check_H2 -> plan_sectors -> certify.  Returns (verdict, certificate)."""
    verdict = check_H2(sym, n_samples)
    cert = certify(sym, verdict, None, grid, seed, direction, strict)
    return verdict, cert


def certify_negative_direction(sym: QhSymbol, grid: GridSpec = GridSpec(), seed: int = 0,
                               n_samples: int = DEFAULT_SAMPLES, strict=False) -> Certificate:
    """Certificate for xi < 0, obtained from -phi in the positive direction."""
    return run_pipeline(negate(sym), grid, seed, n_samples, "xi_negative", strict)[1]
