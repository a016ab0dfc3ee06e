import math
from fractions import Fraction

import numpy as np
import pytest

from subelliptic.circle import (ZERO_TOL, chart_values, check_H1, check_H2, decompose, estimate_p,
                                find_zeros, phi_tilde, sample_profile)
from subelliptic.distgeo import TWO_PI
from subelliptic.errors import MissingPHint
from subelliptic.symbols import builtin, make_callback_symbol, make_symbol, negate

MAIRE = ["maire-l1", "maire-l2", "maire-l3"]


def test_profile_examples():
    q = sample_profile(builtin("quasielliptic-l2-m4"), 256)
    np.testing.assert_allclose(q.values, 1.0, atol=1e-14)
    assert float(phi_tilde(builtin("maire-l1"), 0.0)) == pytest.approx(-1.0)
    neg = builtin("negmax")
    assert float(phi_tilde(neg, math.pi / 2)) == pytest.approx(0.0, abs=1e-15)
    assert float(phi_tilde(neg, 0.0)) == -1.0
    assert q.h == pytest.approx(TWO_PI / 256)


def test_profile_rejects_tiny():
    with pytest.raises(ValueError):
        sample_profile(builtin("maire-l1"), 16)


def test_maire_zeros():
    zs = find_zeros(sample_profile(builtin("maire-l1"), 4096))
    # roots of cos(t) cos(2t)
    want = [k * math.pi / 4 for k in (1, 2, 3, 5, 6, 7)]
    assert len(zs) == 6
    np.testing.assert_allclose([z.theta for z in zs], want, atol=1e-9)


def test_zero_lists():
    assert find_zeros(sample_profile(builtin("quasielliptic-l2-m4"), 1024)) == []
    zs = find_zeros(sample_profile(builtin("negmax"), 1024))
    np.testing.assert_allclose([z.theta for z in zs], [math.pi / 2, 3 * math.pi / 2], atol=1e-9)


def test_maire_components_alternate():
    prof = sample_profile(builtin("maire-l1"), 4096)
    comps = decompose(prof, find_zeros(prof))
    kinds = [c.kind for c in comps]
    assert sorted(kinds) == ["negative"] * 3 + ["positive"] * 3
    assert all(a != b for a, b in zip(kinds, kinds[1:] + kinds[:1]))
    # analytic sign table of phi-tilde = -cos(t) cos(2t) at the arc midpoints
    for c in comps:
        mid = c.arc.theta_at(0.5)
        sign = np.sign(-math.cos(mid) * math.cos(2 * mid))
        assert sign == (1 if c.kind == "positive" else -1)


def test_components_tile_circle():
    for name in MAIRE + ["jt-q8", "negmax"]:
        v = check_H2(builtin(name))
        assert sum(c.arc.width for c in v.components) == pytest.approx(TWO_PI, abs=1e-9)


def test_quasielliptic_and_negmax_components():
    v = check_H2(builtin("quasielliptic-l2-m4"))
    assert len(v.components) == 1 and v.components[0].kind == "positive" and v.components[0].arc.full
    v = check_H2(builtin("negmax"))
    assert [c.kind for c in v.components] == ["negative", "negative"]


@pytest.mark.parametrize("name", MAIRE)
def test_maire_verdict(name):
    v = check_H2(builtin(name))
    assert v.ok and v.p_global == 1
    assert all(estimate_p(builtin(name), z) == 1 for z in v.zeros)


def test_double_zero_order():
    # t^2 s: cos^2 sin vanishes to second order at pi/2
    sym = make_symbol(1, 1, 3, [(2, 1, 1.0)])
    v = check_H2(sym)
    at = {round(z.theta, 6): estimate_p(sym, z) for z in v.zeros}
    assert at[round(math.pi / 2, 6)] == 2
    assert at[round(0.0, 6)] == 1
    # the zero at 3 pi / 2 is a local maximum
    assert v.failed_items() == [2]


def test_negative_controls():
    v = check_H2(builtin("negmax"))
    assert not v.ok and 2 in v.failed_items()
    assert v.items[2].witness
    v = check_H2(negate(builtin("quasielliptic-l2-m4")))
    assert not v.ok and 1 in v.failed_items()


def test_callback_needs_hint():
    cb = make_callback_symbol(lambda th: np.sin(th), 1, 2)
    v = check_H2(cb)
    assert v.failed_items() == [5]
    with pytest.raises(MissingPHint):
        estimate_p(cb, v.zeros[0])
    cb = make_callback_symbol(lambda th: np.sin(th), 1, 2, p_hint=Fraction(1))
    assert check_H2(cb).ok


def test_flat_zero_arcs():
    flat = make_callback_symbol(lambda th: np.maximum(np.sin(th), 0.0), 1, 2, p_hint=1)
    v = check_H2(flat)
    assert any(z.kind == "flat" for z in v.zeros)
    assert 5 in v.failed_items()
    # a flat arc next to negative values counts as a local maximum
    mixed = make_callback_symbol(
        lambda th: np.where((th > np.pi) & (th < 1.5 * np.pi), 0.0, np.sin(th)), 1, 2, p_hint=1)
    v = check_H2(mixed)
    assert 2 in v.failed_items() and v.notes


def test_non_unique_minimum():
    # two equal minima inside one negative arc
    cb = make_callback_symbol(lambda th: np.where(np.sin(th) < 0, -np.sin(2 * th) ** 2 - 1e-3 * np.abs(np.sin(th)), np.sin(th)),
                              1, 2, p_hint=1)
    v = check_H2(cb)
    assert 4 in v.failed_items()
    assert v.items[4].witness is not None


@pytest.mark.parametrize("name", MAIRE + ["jt-q8", "quasielliptic-l2-m4", "negmax"])
def test_verdict_stable_under_refinement(name):
    a, b = check_H2(builtin(name), 4096), check_H2(builtin(name), 8192)
    assert a.ok == b.ok and len(a.components) == len(b.components)
    assert a.failed_items() == b.failed_items()


@pytest.mark.parametrize("name", MAIRE + ["jt-q8"])
def test_chart_agreement(name):
    sym = builtin(name)
    th = np.linspace(0.01, TWO_PI - 0.01, 500)
    a = phi_tilde(sym, th)
    # both charts are exact parametrizations of the circle
    for chart in ("t", "s"):
        np.testing.assert_allclose(chart_values(sym, th, chart), a, atol=1e-9)


@pytest.mark.parametrize("name", MAIRE + ["jt-q8"])
def test_order_lower_bound(name):
    # |phi(x) - phi(y)| / |x - y|^p stays away from 0 on one side of every zero
    sym = builtin(name)
    v = check_H2(sym)
    for z in v.zeros:
        p = float(estimate_p(sym, z))
        for side in (-1, 1):
            x = z.theta + side * np.geomspace(1e-6, 1e-2, 40)
            vals = phi_tilde(sym, x)
            i, j = np.triu_indices(len(x), 1)
            ratio = np.abs(vals[i] - vals[j]) / np.abs(x[i] - x[j]) ** p
            assert ratio.min() > 1e-3


def test_h1():
    for name in MAIRE + ["jt-q8", "quasielliptic-l2-m4"]:
        assert check_H1(sample_profile(builtin(name), 2048))
    wild = make_callback_symbol(lambda th: np.sin(400 * th), 1, 2, p_hint=1)
    assert not check_H1(sample_profile(wild, 1024))


def test_verdict_json():
    d = check_H2(builtin("maire-l1")).to_json()
    assert d["pass"] and d["p_global"] == "1" and len(d["zeros"]) == 6
    assert set(d["items"]) == {"1", "2", "3", "4", "5"}
    assert ZERO_TOL == 1e-9
