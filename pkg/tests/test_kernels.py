import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import pipeline, random_half_plans
from subelliptic import kernels
from subelliptic.distgeo import point_at

BACKENDS = kernels.backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def _starts(plan, ell, n, rng):
    th = plan.sector.theta_at(rng.uniform(0.0, 1.0, n))
    t0, s0 = point_at(th, rng.uniform(0.01, 1.0, n) * plan.omega_radius, ell)
    return np.ascontiguousarray(t0, dtype=float), np.ascontiguousarray(s0, dtype=float)


def _cases():
    rng = np.random.default_rng(77)
    for N in (1, 2, 3, 4):
        for ell in (1.0, 1.5, 2.0, 3.0):
            yield random_half_plans(rng, N, ell)[0], ell
    for name in ("quasielliptic-l2-m4", "maire-l3", "jt-q8"):
        sym, _, cert = pipeline(name)
        for p in cert.plans[:4]:
            yield p, sym.ell


@needs_cython
def test_backend_parity():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = np.random.default_rng(3)
    taus = np.linspace(0.0, 1.0, 65)
    for plan, ell in _cases():
        t0, s0 = _starts(plan, ell, 300, rng)
        arr = plan.arrays()
        tq = np.ascontiguousarray(np.broadcast_to(taus, (len(t0), len(taus))))
        a = py.trace(t0, s0, *arr, ell, tq)
        b = cy.trace(t0, s0, *arr, ell, tq)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15, equal_nan=True)
        for x, y in zip(py.breakpoints(t0, s0, *arr, ell), cy.breakpoints(t0, s0, *arr, ell)):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15, equal_nan=True)


@needs_cython
def test_poly_eval_parity():
    rng = np.random.default_rng(5)
    T, S = rng.normal(size=(2, 40, 30))
    js, ks, cs = (8, 4, 0), (0, 2, 4), (1.0, -1.0, -1.0)
    a = BACKENDS["python"].poly_eval(T, S, js, ks, cs)
    b = BACKENDS["cython"].poly_eval(np.ascontiguousarray(T), np.ascontiguousarray(S), js, ks, cs)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(a, T ** 8 - T ** 4 * S ** 2 - S ** 4, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("name", list(BACKENDS))
def test_failed_crossing_is_nan(name):
    k = BACKENDS[name]
    # one segment along +t that never meets the ray through (0, 1)
    arr = (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]),
           np.array([0.0]), np.array([1.0]))
    brk, bt, bs = k.breakpoints(np.array([0.2]), np.array([0.3]), *arr, 1.0)
    assert brk[0, 0] == 0.0 and np.isnan(brk[0, 1])


def test_selected_backend():
    expected = "cython" if "cython" in BACKENDS else "python"
    assert kernels.BACKEND == expected


def test_pure_python_switch():
    env = dict(os.environ, SUBELL_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from subelliptic import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env, timeout=60)
    assert r.stdout.strip() == "python"


@needs_cython
def test_unsorted_times_parity():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = np.random.default_rng(8)
    for plan, ell in list(_cases())[:16]:
        t0, s0 = _starts(plan, ell, 50, rng)
        taus = np.ascontiguousarray(rng.uniform(0, 1, (50, 40)))
        for x, y in zip(py.trace(t0, s0, *plan.arrays(), ell, taus),
                        cy.trace(t0, s0, *plan.arrays(), ell, taus)):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15, equal_nan=True)
