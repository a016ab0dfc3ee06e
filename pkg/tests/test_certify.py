import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import PASSING, pipeline
from subelliptic.certify import (FD_RTOL, GridSpec, certify, certify_negative_direction,
                                 grid_starts, run_pipeline)
from subelliptic.circle import check_H2
from subelliptic.distgeo import in_sector, rho
from subelliptic.errors import CertificateRefused, GrowthViolation
from subelliptic.escape import plan_sectors
from subelliptic.symbols import builtin, make_symbol, negate

SMALL = GridSpec(12, 96, 64)


@pytest.mark.parametrize("name", PASSING)
def test_builtins_pass(name):
    sym, verdict, cert = pipeline(name)
    assert cert.ok and all(cert.conditions.values())
    assert all(math.isfinite(c) and c > 0 for c in (cert.C1, cert.C2, cert.C3))
    p = verdict.p_global if verdict.p_global is not None else 0
    assert cert.a == max(sym.weights.m, p)
    assert cert.s_order == 1 / cert.a
    assert cert.witnesses["fd_worst_rel"] < FD_RTOL
    assert cert.direction == "xi_positive"


def test_quasielliptic_growth_constant():
    sym, verdict, cert = pipeline("quasielliptic-l2-m4")
    assert cert.a == 4
    # the escaping line gains at least (tau/2)^m in rho^m
    assert cert.C3 <= 2 ** 4
    assert cert.C1 == 1.0


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_maire_orders(ell):
    sym, verdict, cert = pipeline(f"maire-l{ell}")
    assert verdict.p_global == 1
    assert cert.a == 2 * ell + 1 and cert.s_order == Fraction(1, 2 * ell + 1)


def test_jt_order():
    sym, verdict, cert = pipeline("jt-q8")
    assert sym.ell == 2 and cert.s_order == Fraction(1, 8)


def test_refused_without_h2():
    for sym in (builtin("negmax"), negate(builtin("quasielliptic-l2-m4"))):
        v = check_H2(sym)
        with pytest.raises(CertificateRefused) as exc:
            certify(sym, v, grid=SMALL)
        assert exc.value.verdict is v and v.failed_items()


def test_negative_direction_quasielliptic():
    cert = certify_negative_direction(negate(builtin("quasielliptic-l2-m4")))
    ref = pipeline("quasielliptic-l2-m4")[2]
    assert cert.ok and cert.direction == "xi_negative"
    for c in ("C1", "C2", "C3"):
        assert getattr(cert, c) == pytest.approx(getattr(ref, c), rel=1e-12)


def test_negative_direction_maire():
    # (t, s) -> (-t, s) maps phi to -phi, so the constants agree
    cert = certify_negative_direction(builtin("maire-l1"))
    ref = pipeline("maire-l1")[2]
    assert cert.ok and len(cert.plans) == len(ref.plans)
    for c in ("C1", "C2", "C3"):
        assert getattr(cert, c) == pytest.approx(getattr(ref, c), rel=1e-3)


def test_negative_direction_refused():
    with pytest.raises(CertificateRefused):
        certify_negative_direction(builtin("quasielliptic-l2-m4"))


def test_grid_starts_geometry():
    sym, verdict, cert = pipeline("maire-l1")
    owner, theta, radius, t0, s0 = grid_starts(cert.plans, SMALL, 1, cert.omega_radius)
    # the angular budget is shared between sectors in proportion to their width
    assert len(t0) == pytest.approx(SMALL.radial_points * SMALL.angular_points, rel=0.1)
    assert set(owner) == set(range(len(cert.plans)))
    r = rho(t0, s0, 1)
    assert np.all(r <= cert.omega_radius * (1 + 1e-12))
    assert np.all(r >= SMALL.inner_fraction * cert.omega_radius * (1 - 1e-12))
    for k, p in enumerate(cert.plans):
        sel = np.nonzero(owner == k)[0][::37]
        assert all(in_sector((t0[i], s0[i]), p.sector, 1) for i in sel)


def test_strict_growth_violation():
    # certify a symbol with plans built for a different one: growth must fail
    good = builtin("maire-l1")
    plans = plan_sectors(check_H2(good), 1)
    bad = make_symbol(1, 1, 3, [(1, 2, -1.0), (3, 0, 1.0)])
    v = check_H2(good)
    cert = certify(bad, v, plans, SMALL)
    assert not cert.ok and not cert.conditions["growth_bound"]
    assert "growth" in cert.witnesses
    with pytest.raises(GrowthViolation) as exc:
        certify(bad, v, plans, SMALL, strict=True)
    assert exc.value.witness["increment"] <= 0


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(1, 10, 10)
    with pytest.raises(ValueError):
        GridSpec(boundary_margin=1e-12)
    assert GridSpec().refined().radial_points == 2 * GridSpec().radial_points


def test_refinement_stable_maire_l1():
    sym = builtin("maire-l1")
    _, a = run_pipeline(sym, SMALL)
    _, b = run_pipeline(sym, SMALL.refined())
    assert a.ok == b.ok
    for c in ("C1", "C2", "C3"):
        assert getattr(b, c) == pytest.approx(getattr(a, c), rel=0.05)


def test_seed_only_moves_fd_sample():
    sym = builtin("quasielliptic-l2-m4")
    _, a = run_pipeline(sym, SMALL, seed=1)
    _, b = run_pipeline(sym, SMALL, seed=2)
    assert (a.C1, a.C2, a.C3) == (b.C1, b.C2, b.C3)


def test_certificate_json():
    sym, verdict, cert = pipeline("jt-q8")
    d = json.loads(json.dumps(cert.to_json()))
    assert d["pass"] and d["a"] == "8" and d["s_order"] == "1/8"
    assert set(d["conditions"]) == {"escape", "dtau_bound", "jacobian_bound", "growth_bound"}
    assert d["symbol_digest"] == sym.digest() and len(d["plans"]) == len(cert.plans)
