"""Escape curves: single disto-lines on positive arcs, broken ingoing lines on
negative arcs.

A plan owns a sub-sector of the unit disto-disk and a sequence of directions.
Piece i of a curve follows a disto-line parallel to dirs[i] with sign
signs[i] (-1 ingoing, +1 escaping) until it meets rays[i]; the last piece
has no ray and runs up to tau = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .circle import HALF_LIMIT, H2Verdict, SignComponent
from .distgeo import (TWO_PI, CirclePoint, DistoPoint, Sector, ddet,
                      dressed_angle, f_ell, f_ell_inv, line_step,
                      line_velocity, rho)
from .errors import (BreakpointDerivative, DegeneratePlan, NotReached,
                     PlanInfeasible, PreconditionViolation)

OFFSET_FRACTION = 1.0 / 64     # direction offset, as a fraction of the sub-sector width
VERTICAL_PERTURB = 1.0 / 256   # dressed-angle shift applied to directions with a == 0
BOUNDARY_MARGIN = 1e-9
DET_TOL = 1e-12
MAX_SEGMENTS = 4


@dataclass(frozen=True)
class SectorPlan:
    sector: Sector
    kind: str                          # positive | negative-main | negative-general
    dirs: Tuple[CirclePoint, ...]
    rays: Tuple[CirclePoint, ...]      # rays[i] ends piece i; len(rays) == len(dirs) - 1
    signs: Tuple[int, ...]
    N: int
    omega_radius: float
    label: str = ""

    @property
    def pieces(self) -> int:
        return len(self.dirs)

    def arrays(self):
        """Flat float arrays (dir_a, dir_b, signs, ray_a, ray_b) for the batch kernels."""
        return (np.array([d.a for d in self.dirs]), np.array([d.b for d in self.dirs]),
                np.array(self.signs, dtype=float),
                np.array([r.a for r in self.rays]), np.array([r.b for r in self.rays]))

    def to_json(self):
        return {
            "label": self.label, "kind": self.kind, "N": self.N,
            "omega_radius": self.omega_radius, "sector": self.sector.to_json(),
            "dirs": [d.theta for d in self.dirs], "rays": [r.theta for r in self.rays],
            "signs": list(self.signs),
        }


def omega_for(kind: str, N: int) -> float:
    return 0.25 if kind in ("positive", "negative-main") else 1.0 / (8 * N)


def _vertical(theta) -> bool:
    return abs(math.cos(theta)) < 1e-12


def _snap(theta, ell) -> CirclePoint:
    if _vertical(theta):
        theta = 0.5 * math.pi if math.sin(theta) > 0 else 1.5 * math.pi
    return CirclePoint.from_theta(theta, ell)


def subdivision_count(width: float, vertical: bool = False) -> int:
    """Smallest N with every sub-sector plus its direction offset strictly acute.

    ``vertical`` accounts for the extra shift of a direction with a == 0.
    Raises PlanInfeasible when N would exceed 4.
    """
    extra = VERTICAL_PERTURB if vertical else 0.0
    for n in range(1, MAX_SEGMENTS + 1):
        need = width / n * (1.0 + (OFFSET_FRACTION if n > 1 else 0.0)) + extra
        if need < HALF_LIMIT:
            return n
    raise PlanInfeasible(f"half-sector of dressed width {width:.6f} needs more than {MAX_SEGMENTS} segments")


# ---------------------------------------------------------------- planning

def _positive_plans(comp: SignComponent, ell, k):
    out = []
    for i, sub in enumerate(comp.subarcs):
        peak = _snap(sub.peak.theta, ell)
        out.append(SectorPlan(sub.arc, "positive", (peak,), (), (1,), 0, 0.25, f"c{k}.p{i}"))
    return out


def _escape_dir_at(theta_zero, positive_plans, ell):
    """Escape direction of the positive sub-arc having theta_zero as an endpoint."""
    best = None
    for p in positive_plans:
        for end in (p.sector.start.theta, p.sector.end.theta):
            d = abs((end - theta_zero + math.pi) % TWO_PI - math.pi)
            if best is None or d < best[0]:
                best = (d, p)
    if best is None or best[0] > 1e-9:
        raise PlanInfeasible(f"no positive sub-arc ends at the zero {theta_zero:.9f}")
    return best[1].dirs[0]


def _half_plans(C, end, orient, escape, ell, label):
    """Plans covering the half-sector swept from the minimum C to the zero `end`.

    orient = +1 sweeps anticlockwise, -1 clockwise.  Offsets point away from
    the half (towards the other half of the component).
    """
    width = (orient * (end - C)) % TWO_PI
    N = subdivision_count(width, _vertical(C))
    if N > 1 and any(_vertical(C + orient * i * width / N) for i in range(N)):
        N = subdivision_count(width, True)
    kind = "negative-main" if N == 1 else "negative-general"
    omega = omega_for(kind, N)
    hats = [C + orient * i * width / N for i in range(N + 1)]
    off = 0.0 if N == 1 else OFFSET_FRACTION * width / N
    dirs = []
    for j in range(1, N + 1):
        th = hats[j - 1] - orient * off
        if _vertical(th):
            th -= orient * VERTICAL_PERTURB
        dirs.append(CirclePoint.from_theta(th, ell))
    esc = escape
    if _vertical(esc.theta):
        # pull a vertical escape direction slightly towards the zero ray
        gap = (orient * (esc.theta - end)) % TWO_PI
        esc = CirclePoint.from_theta(esc.theta - orient * min(VERTICAL_PERTURB, gap / 2), ell)
    dirs.append(esc)
    rays = [CirclePoint.from_theta(h, ell) for h in hats]
    plans = []
    for j in range(1, N + 1):
        lo, hi = (hats[j - 1], hats[j]) if orient > 0 else (hats[j], hats[j - 1])
        sec = Sector(CirclePoint.from_theta(lo, ell), CirclePoint.from_theta(hi, ell))
        pd = tuple(dirs[j - 1:])
        pr = tuple(rays[j:])
        sg = tuple([-1] * (N - j + 1) + [1])
        plan = SectorPlan(sec, kind, pd, pr, sg, N, omega, f"{label}.s{j}")
        _check_hypsuit(plan, ell, rays, dirs, j, orient)
        plans.append(plan)
    return plans


def _check_hypsuit(plan, ell, rays, dirs, j, orient):
    for i, d in enumerate(plan.dirs[:-1]):
        if abs(d.a) < 1e-12:
            raise PlanInfeasible(f"{plan.label}: ingoing direction {i} has vanishing first coordinate")
    for i, r in enumerate(plan.rays):
        for d in (plan.dirs[i], plan.dirs[i + 1]):
            if abs(ddet(tuple(d), tuple(r), ell)) <= DET_TOL:
                raise PlanInfeasible(
                    f"{plan.label}: Delta(dir {d.theta:.6f}; ray {r.theta:.6f}) vanishes")
    # ingoing direction j lies in the previous sub-sector (just beyond the ray hat_{j-1})
    for jj in range(j, len(rays)):
        d, h = dirs[jj - 1].theta, rays[jj - 1].theta
        step = (orient * (h - d)) % TWO_PI
        if not (0.0 <= step < 0.5 * math.pi):
            raise PlanInfeasible(f"{plan.label}: direction {jj} is not adjacent to ray {jj - 1}")
    # acuteness of each ingoing direction with both rays of the sector it sweeps
    for jj in range(j, len(rays)):
        d = dirs[jj - 1]
        for h in (rays[jj - 1], rays[jj]):
            if f_ell(d.a, ell) * f_ell(h.a, ell) + d.b * h.b <= 0:
                raise PlanInfeasible(f"{plan.label}: direction {jj} not acute with ray at {h.theta:.6f}")


def plan_sectors(verdict: H2Verdict, ell) -> List[SectorPlan]:
    if not verdict.ok:
        raise PreconditionViolation(f"H2 verdict fails items {verdict.failed_items()}")
    ell = float(ell)
    pos = {}
    plans = []
    for k, comp in enumerate(verdict.components):
        if comp.kind == "positive":
            pos[k] = _positive_plans(comp, ell, k)
            plans += pos[k]
    all_pos = [p for ps in pos.values() for p in ps]
    for k, comp in enumerate(verdict.components):
        if comp.kind != "negative":
            continue
        if comp.arc.full:
            raise PlanInfeasible("negative component covers the whole circle")
        C = comp.extremum.theta
        A1, A2 = comp.arc.start.theta, comp.arc.end.theta
        plans += _half_plans(C, A1, -1, _escape_dir_at(A1, all_pos, ell), ell, f"c{k}.L")
        plans += _half_plans(C, A2, +1, _escape_dir_at(A2, all_pos, ell), ell, f"c{k}.R")
    return plans


# ---------------------------------------------------------------- dynamics

def tau_break(start, direction, ray, varrho_sign, ell) -> float:
    """Time at which the disto-line from `start` meets the ray (tau >= 0)."""
    t, s = start
    c, d = direction
    ra, rb = ray
    ell = float(ell)
    den = ddet((c, d), (ra, rb), ell)
    if abs(den) < 1e-300:
        raise NotReached("line is parallel to the ray")
    mu = ddet((c, d), (t, s), ell) / den
    if mu < -1e-14:
        raise NotReached(f"line meets the opposite ray (mu = {mu:.3g})")
    mu = max(mu, 0.0)
    if c != 0:
        t1 = f_ell_inv(mu * f_ell(ra, ell), ell)
        tau = (t1 - t) / (varrho_sign * c)
    else:
        tau = (mu * rb - s) / (varrho_sign * d)
    if tau < -1e-12:
        raise NotReached(f"ray lies behind the start (tau = {tau:.3g})")
    return max(tau, 0.0)


def jacobian_closed_form(plan: SectorPlan, i: int, ell) -> float:
    """Constant Jacobian determinant of (t, s) -> gamma(t, s, tau) on piece i (1-based)."""
    if i < 1 or i > plan.pieces:
        raise IndexError(i)
    if i == 1:
        return 1.0
    ell = float(ell)
    d0, di = plan.dirs[0], plan.dirs[i - 1]
    val = plan.signs[0] * plan.signs[i - 1] * abs(di.a) ** (1.0 - ell) * abs(d0.a) ** (ell - 1.0)
    for j in range(i - 1):
        r = tuple(plan.rays[j])
        den = ddet(tuple(plan.dirs[j]), r, ell)
        num = ddet(tuple(plan.dirs[j + 1]), r, ell)
        if abs(den) < DET_TOL or abs(num) < DET_TOL:
            raise DegeneratePlan(f"{plan.label}: Delta below {DET_TOL} at reflexion {j + 1}")
        val *= num / den
    return val


@dataclass(frozen=True)
class EscapeCurve:
    plan: SectorPlan
    start: DistoPoint
    breakpoints: Tuple[float, ...]          # tau_0 = 0, tau_1, ...
    knots: Tuple[DistoPoint, ...]           # curve point at each breakpoint
    jacobians: Tuple[float, ...]
    ell: float

    def piece_at(self, tau) -> int:
        k = 0
        while k + 1 < len(self.breakpoints) and self.breakpoints[k + 1] <= tau:
            k += 1
        return k


def build_curve(plan: SectorPlan, start, ell, check=True) -> EscapeCurve:
    t, s = start
    ell = float(ell)
    if check:
        if t == 0 and s == 0:
            raise PreconditionViolation("start at the origin")
        th = dressed_angle(t, s, ell)
        if not plan.sector.contains_theta(th, BOUNDARY_MARGIN):
            raise PreconditionViolation(f"start angle {th:.9f} not inside the plan sector (margin {BOUNDARY_MARGIN})")
        if rho(t, s, ell) >= plan.omega_radius:
            raise PreconditionViolation("start outside D(omega_radius)")
    brk, knots = [0.0 * t], [DistoPoint(t, s)]
    cur = (t, s)
    for i, ray in enumerate(plan.rays):
        d, sg = plan.dirs[i], plan.signs[i]
        dt = tau_break(cur, tuple(d), tuple(ray), sg, ell)
        nt, ns = line_step(cur, tuple(d), sg, dt, ell)
        # land exactly on the ray to avoid drift
        if d.a != 0:
            mu = ddet(tuple(d), cur, ell) / ddet(tuple(d), tuple(ray), ell)
            ns = max(mu, 0.0) * ray.b
        cur = (nt, ns)
        brk.append(brk[-1] + dt)
        knots.append(DistoPoint(*cur))
    jac = tuple(jacobian_closed_form(plan, i + 1, ell) for i in range(plan.pieces))
    return EscapeCurve(plan, DistoPoint(t, s), tuple(brk), tuple(knots), jac, ell)


def curve_eval(curve: EscapeCurve, tau):
    k = curve.piece_at(tau)
    d = curve.plan.dirs[k]
    return DistoPoint(*line_step(tuple(curve.knots[k]), tuple(d), curve.plan.signs[k],
                                 tau - curve.breakpoints[k], curve.ell))


def curve_dtau(curve: EscapeCurve, tau):
    if any(abs(tau - b) < 1e-12 for b in curve.breakpoints[1:]):
        raise BreakpointDerivative(f"tau = {tau} is a breakpoint")
    k = curve.piece_at(tau)
    p = curve_eval(curve, tau)
    dt, ds = line_velocity(float(p.t), tuple(curve.plan.dirs[k]), curve.plan.signs[k], curve.ell)
    return DistoPoint(float(dt), float(ds))


def trace_plan(plan: SectorPlan, t0, s0, taus, ell):
    """Batch evaluation through the selected kernel backend.

    taus is (q,) shared by all starts or (n, q).  Returns T, S, DT, DS, piece, brk.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    taus = np.asarray(taus, dtype=float)
    if taus.ndim == 1:
        taus = np.broadcast_to(taus, (len(t0), len(taus)))
    da, db, sg, ra, rb = plan.arrays()
    return kernels.trace(t0, s0, da, db, sg, ra, rb, float(ell), np.ascontiguousarray(taus))


def fd_jacobian(plan: SectorPlan, start, tau, ell, h=None, dps=None):
    """Central finite-difference Jacobian determinant of (t, s) -> gamma(t, s, tau).

    Steps follow the quasi-scaling: h*rho in t and h*rho^ell in s.  With
    ``dps`` set, the scalar curve code runs on mpmath numbers at that many
    digits; broken lines with several reflexions compress area by orders of
    magnitude and the determinant then cancels badly in double precision.
    """
    t, s = map(float, start)
    r = float(rho(t, s, ell))
    ell = float(ell)
    if dps is None:
        h = 1e-5 if h is None else h

        def g(tt, ss):
            T, S, *_ = trace_plan(plan, [tt], [ss], [tau], ell)
            return T[0, 0], S[0, 0]
        return _fd_det(g, t, s, h * r, h * r ** ell)
    import mpmath
    with mpmath.workdps(dps):
        h = mpmath.mpf(10) ** (-(dps // 3)) if h is None else mpmath.mpf(h)
        mt, ms, mtau = mpmath.mpf(t), mpmath.mpf(s), mpmath.mpf(tau)

        def g(tt, ss):
            p = curve_eval(build_curve(plan, (tt, ss), ell, check=False), mtau)
            return p.t, p.s
        return float(_fd_det(g, mt, ms, h * r, h * r ** ell))


def _fd_det(g, t, s, ht, hs):
    tp, sp = g(t + ht, s)
    tm, sm = g(t - ht, s)
    up, vp = g(t, s + hs)
    um, vm = g(t, s - hs)
    return ((tp - tm) * (vp - vm) - (sp - sm) * (up - um)) / (4 * ht * hs)
