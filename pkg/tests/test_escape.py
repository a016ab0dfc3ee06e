import math

import numpy as np
import pytest

from conftest import pipeline, random_half_plans
from subelliptic.circle import check_H2
from subelliptic.distgeo import (CirclePoint, Sector, angle_diff, ddet, dressed_angle, line_step,
                                 make_sector, point_at, rho)
from subelliptic.errors import (BreakpointDerivative, NotReached, PlanInfeasible,
                                PreconditionViolation)
from subelliptic.escape import (SectorPlan, build_curve, curve_dtau, curve_eval, fd_jacobian,
                                jacobian_closed_form, omega_for, plan_sectors, subdivision_count,
                                tau_break, trace_plan)
from subelliptic.symbols import builtin

H = math.sqrt(2) / 2


def test_subdivision_rule():
    assert subdivision_count(math.pi / 4) == 1
    assert subdivision_count(3 * math.pi / 2) == 4
    assert omega_for("negative-general", 4) == 1 / 32
    assert omega_for("negative-main", 1) == 0.25
    with pytest.raises(PlanInfeasible):
        subdivision_count(2 * math.pi - 0.01)


def test_plans_quasielliptic():
    v = check_H2(builtin("quasielliptic-l2-m4"))
    plans = plan_sectors(v, 2)
    assert all(p.kind == "positive" and p.N == 0 and p.pieces == 1 for p in plans)
    assert sum(p.sector.width for p in plans) == pytest.approx(2 * math.pi)


def test_plans_maire():
    v = check_H2(builtin("maire-l1"))
    plans = plan_sectors(v, 1)
    kinds = [p.kind for p in plans]
    assert kinds.count("positive") == 3
    # each negative arc (width pi/2) is split at its minimum into two halves
    neg = [p for p in plans if p.kind != "positive"]
    assert len(neg) == 6 and all(p.kind == "negative-main" and p.N == 1 for p in neg)
    assert all(p.omega_radius == 0.25 for p in plans)
    assert sum(p.sector.width for p in plans) == pytest.approx(2 * math.pi)


def test_plan_requires_passing_verdict():
    with pytest.raises(PreconditionViolation):
        plan_sectors(check_H2(builtin("negmax")), 1)


def test_tau_break_examples():
    # planar oracle: (0.2, 0.1) - tau (h, h) reaches t = 0 at tau = 0.2 / h, landing on (0, -0.1)
    tau = tau_break((0.2, 0.1), (H, H), (0.0, -1.0), -1, 1)
    assert tau == pytest.approx(0.2 * math.sqrt(2), rel=1e-14)
    # rays are one-sided: the upper half of the axis is never reached
    with pytest.raises(NotReached):
        tau_break((0.2, 0.1), (H, H), (0.0, 1.0), -1, 1)
    # start on the ray
    assert tau_break((0.0, 0.3), (H, H), (0.0, 1.0), -1, 1) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(NotReached):
        tau_break((0.2, 0.1), (H, H), (H, H), -1, 1)


@pytest.mark.parametrize("ell", [1.0, 1.5, 2.0, 3.0])
def test_tau_break_lands_on_ray(ell):
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(200):
        d = CirclePoint.from_theta(rng.uniform(0, 2 * np.pi), ell)
        r = CirclePoint.from_theta(rng.uniform(0, 2 * np.pi), ell)
        start = tuple(rng.uniform(-1, 1, 2))
        sign = int(rng.choice([-1, 1]))
        if abs(d.a) < 1e-3:
            continue
        try:
            tau = tau_break(start, (d.a, d.b), (r.a, r.b), sign, ell)
        except NotReached:
            continue
        p = line_step(start, (d.a, d.b), sign, tau, ell)
        assert ddet((r.a, r.b), p, ell) == pytest.approx(0.0, abs=1e-10)
        assert dressed_angle(*p, ell) == pytest.approx(r.theta, abs=1e-8) or rho(*p, ell) < 1e-8
        hits += 1
    assert hits > 20


def _textbook_plan():
    # ingoing along (1, -1)/sqrt 2 reversed until the negative t-axis, then straight up
    d1 = CirclePoint(7 * math.pi / 4, H, -H)
    d2 = CirclePoint(math.pi / 2, 0.0, 1.0)
    ray = CirclePoint(math.pi, -1.0, 0.0)
    return SectorPlan(make_sector(math.pi, 1.5 * math.pi, 1), "negative-main", (d1, d2), (ray,),
                      (-1, 1), 1, 0.25, "textbook")


def test_jacobian_textbook():
    plan = _textbook_plan()
    assert jacobian_closed_form(plan, 1, 1) == 1.0
    assert jacobian_closed_form(plan, 2, 1) == pytest.approx(math.sqrt(2), rel=1e-14)
    start = (-0.1, -0.05)
    c = build_curve(plan, start, 1)
    tau = 0.5 * (c.breakpoints[1] + 1)
    assert fd_jacobian(plan, start, tau, 1) == pytest.approx(math.sqrt(2), rel=1e-6)


@pytest.mark.parametrize("ell", [1.0, 2.0])
@pytest.mark.parametrize("N", [1, 2])
def test_jacobian_float_fd(ell, N):
    rng = np.random.default_rng(100 + N)
    for _ in range(5):
        p = random_half_plans(rng, N, ell)[0]
        th = p.sector.theta_at(rng.uniform(0.1, 0.9))
        start = tuple(map(float, point_at(th, rng.uniform(0.3, 0.9) * p.omega_radius, ell)))
        c = build_curve(p, start, ell)
        knots = list(c.breakpoints) + [1.0]
        for i in range(p.pieces):
            tau = 0.5 * (knots[i] + knots[i + 1])
            assert fd_jacobian(p, start, tau, ell) == pytest.approx(c.jacobians[i], rel=1e-5)


def test_jacobian_extended_precision_sample():
    rng = np.random.default_rng(9)
    p = random_half_plans(rng, 3, 2.0)[0]
    start = tuple(map(float, point_at(p.sector.theta_at(0.5), 0.5 * p.omega_radius, 2.0)))
    c = build_curve(p, start, 2.0)
    tau = 0.5 * (c.breakpoints[-1] + 1)
    assert fd_jacobian(p, start, tau, 2.0, dps=40) == pytest.approx(c.jacobians[-1], rel=1e-10)


def test_curve_eval_single_piece():
    sym, verdict, cert = pipeline("quasielliptic-l2-m4")
    start = (0.1, 0.05)
    th = dressed_angle(*start, 2)
    plan = next(p for p in cert.plans if p.sector.contains_theta(th, 1e-9))
    c = build_curve(plan, start, 2)
    d = plan.dirs[0]
    for tau in (0.0, 0.3, 1.0):
        assert tuple(curve_eval(c, tau)) == pytest.approx(line_step(start, (d.a, d.b), 1, tau, 2))
    assert rho(*curve_eval(c, 1.0), 2) > 0.25


def test_unit_speed_euclidean():
    plan = _textbook_plan()
    c = build_curve(plan, (-0.1, -0.05), 1)
    for tau in (0.01, 0.05, 0.5):
        v = curve_dtau(c, tau)
        assert math.hypot(v.t, v.s) == pytest.approx(1.0, rel=1e-12)
        h = 1e-7
        a, b = curve_eval(c, tau + h), curve_eval(c, tau - h)
        assert (v.t, v.s) == pytest.approx(((a.t - b.t) / (2 * h), (a.s - b.s) / (2 * h)), rel=1e-6)
    with pytest.raises(BreakpointDerivative):
        curve_dtau(c, c.breakpoints[1])


def test_continuity_at_breakpoint():
    plan = _textbook_plan()
    c = build_curve(plan, (-0.1, -0.05), 1)
    t1 = c.breakpoints[1]
    left = curve_eval(c, t1 - 1e-12)
    right = curve_eval(c, t1)
    assert (left.t, left.s) == pytest.approx((right.t, right.s), abs=1e-10)


def test_boundary_start_rejected():
    sym, verdict, cert = pipeline("maire-l1")
    p = cert.plans[0]
    t, s = point_at(p.sector.start.theta, 0.1, 1)
    with pytest.raises(PreconditionViolation):
        build_curve(p, (float(t), float(s)), 1)
    with pytest.raises(PreconditionViolation):
        build_curve(p, (0.0, 0.0), 1)


def test_maire_negative_radius_profile():
    sym, verdict, cert = pipeline("maire-l1")
    plan = next(p for p in cert.plans if p.kind == "negative-main")
    # start near the minimum ray
    th = plan.sector.theta_at(0.02 if plan.rays[0].theta != plan.sector.start.theta else 0.98)
    start = tuple(map(float, point_at(th, 0.2, 1)))
    c = build_curve(plan, start, 1)
    assert len(c.breakpoints) == 2
    taus = np.linspace(0, 1, 401)
    r = np.array([rho(*curve_eval(c, t), 1) for t in taus])
    t1 = c.breakpoints[1]
    before, after = r[taus < t1], r[taus > t1]
    assert np.all(np.diff(before) <= 1e-12)
    assert np.all(np.diff(after) >= -1e-12)


def _builtin_curves(name, count=60, seed=0):
    sym, verdict, cert = pipeline(name)
    rng = np.random.default_rng(seed)
    for _ in range(count):
        p = cert.plans[rng.integers(len(cert.plans))]
        th = p.sector.theta_at(rng.uniform(0.01, 0.99))
        r = rng.uniform(0.125, 0.99) * p.omega_radius
        start = tuple(map(float, point_at(th, r, sym.ell)))
        yield sym, p, build_curve(p, start, sym.ell)


@pytest.mark.parametrize("name", ["maire-l1", "maire-l2", "maire-l3", "jt-q8"])
def test_curve_invariants(name):
    for sym, p, c in _builtin_curves(name):
        ell = sym.ell
        knots = list(c.breakpoints) + [1.0]
        for i in range(p.pieces):
            d = p.dirs[i]
            taus = np.linspace(knots[i], knots[i + 1], 9)[1:-1]
            pts = [curve_eval(c, t) for t in taus]
            # Delta(dir; gamma) constant on a piece
            vals = [ddet((d.a, d.b), (q.t, q.s), ell) for q in pts]
            assert np.allclose(vals, vals[0], rtol=1e-9, atol=1e-14)
            if i < p.pieces - 1:
                r0, r1 = rho(*c.knots[i], ell), rho(*c.knots[i + 1], ell)
                # ingoing pieces shrink the radius and are short
                assert r1 <= r0 * (1 + 1e-12)
                assert knots[i + 1] - knots[i] <= 2 * r0 + 1e-12
                # and stay between their start angle and their ray
                a0 = dressed_angle(*c.knots[i], ell)
                span = angle_diff(p.rays[i].theta, a0)
                span = span if span <= math.pi else span - 2 * math.pi
                for q in pts:
                    off = angle_diff(dressed_angle(q.t, q.s, ell), a0)
                    off = off if off <= math.pi else off - 2 * math.pi
                    assert min(0, span) - 1e-9 <= off <= max(0, span) + 1e-9
        # escaping piece grows at least like ((tau - tau_N) / 2)^m
        tN = c.breakpoints[-1]
        rN = rho(*c.knots[-1], ell)
        for tau in np.linspace(tN, 1, 12)[1:]:
            q = curve_eval(c, tau)
            assert rho(q.t, q.s, ell) ** sym.m - rN ** sym.m >= ((tau - tN) / 2) ** sym.m - 1e-14
        assert rho(*curve_eval(c, 1.0), ell) > p.omega_radius
        assert c.breakpoints[-1] <= 0.5
        assert c.jacobians[0] == 1.0 and all(j != 0 for j in c.jacobians)


def test_trace_matches_scalar_curve():
    sym, verdict, cert = pipeline("jt-q8")
    rng = np.random.default_rng(4)
    for p in cert.plans:
        ths = p.sector.theta_at(rng.uniform(0.05, 0.95, 8))
        t0, s0 = point_at(ths, 0.5 * p.omega_radius, 2.0)
        taus = np.linspace(0, 1, 33)
        T, S, DT, DS, piece, brk = trace_plan(p, t0, s0, taus, 2.0)
        for k in range(len(ths)):
            c = build_curve(p, (float(t0[k]), float(s0[k])), 2.0)
            for j, tau in enumerate(taus):
                q = curve_eval(c, tau)
                assert (T[k, j], S[k, j]) == pytest.approx((q.t, q.s), rel=1e-9, abs=1e-13)


def test_plans_serialize():
    sym, verdict, cert = pipeline("maire-l2")
    for p in cert.plans:
        d = p.to_json()
        assert len(d["dirs"]) == p.pieces and len(d["rays"]) == p.pieces - 1
        assert isinstance(p.sector, Sector)
