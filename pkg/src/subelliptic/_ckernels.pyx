# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels; same contract as _kernels_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, NAN, isnan

cnp.import_array()

BACKEND = "cython"

cdef double _MU_TOL = 1e-14
cdef double _TAU_TOL = 1e-12


cdef inline double _f(double x, double ell) nogil:
    if x >= 0.0:
        return pow(x, ell)
    return -pow(-x, ell)


cdef inline double _finv(double y, double ell) nogil:
    if y >= 0.0:
        return pow(y, 1.0 / ell)
    return -pow(-y, 1.0 / ell)


cdef void _breaks_row(double t0, double s0, const double[::1] da, const double[::1] db,
                      const double[::1] sg, const double[::1] ra, const double[::1] rb,
                      double ell, double[::1] brk, double[::1] bt, double[::1] bs) nogil:
    cdef Py_ssize_t K = da.shape[0], j
    cdef double a, b, s, fa, fra, den, mu, t1, s1, dtau
    for j in range(K):
        brk[j] = NAN
        bt[j] = NAN
        bs[j] = NAN
    brk[0] = 0.0
    bt[0] = t0
    bs[0] = s0
    for j in range(K - 1):
        a = da[j]
        b = db[j]
        s = sg[j]
        fa = _f(a, ell)
        fra = _f(ra[j], ell)
        den = fa * rb[j] - b * fra
        if fabs(den) < 1e-300:
            return
        mu = (fa * bs[j] - b * _f(bt[j], ell)) / den
        if not (mu >= -_MU_TOL):
            return
        if mu < 0.0:
            mu = 0.0
        s1 = mu * rb[j]
        if a != 0.0:
            t1 = _finv(mu * fra, ell)
            dtau = (t1 - bt[j]) / (s * a)
        else:
            t1 = bt[j]
            dtau = (s1 - bs[j]) / (s * b)
        if not (dtau >= -_TAU_TOL):
            return
        if dtau < 0.0:
            dtau = 0.0
        brk[j + 1] = brk[j] + dtau
        bt[j + 1] = t1
        bs[j + 1] = s1


def breakpoints(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell):
    cdef const double[::1] tv = np.ascontiguousarray(t0, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[::1] da = np.ascontiguousarray(dir_a, dtype=np.float64)
    cdef const double[::1] db = np.ascontiguousarray(dir_b, dtype=np.float64)
    cdef const double[::1] sg = np.ascontiguousarray(signs, dtype=np.float64)
    cdef const double[::1] ra = np.ascontiguousarray(ray_a, dtype=np.float64).reshape(-1)
    cdef const double[::1] rb = np.ascontiguousarray(ray_b, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = tv.shape[0], K = da.shape[0], i
    cdef double el = ell
    brk_a = np.empty((n, K))
    bt_a = np.empty((n, K))
    bs_a = np.empty((n, K))
    cdef double[:, ::1] brk = brk_a
    cdef double[:, ::1] bt = bt_a
    cdef double[:, ::1] bs = bs_a
    if K - 1 > ra.shape[0]:
        raise ValueError("need K-1 crossing rays")
    with nogil:
        for i in range(n):
            _breaks_row(tv[i], sv[i], da, db, sg, ra, rb, el, brk[i], bt[i], bs[i])
    return brk_a, bt_a, bs_a


cdef inline double _abs_pow_m1(double x, double ell, int iell) nogil:
    """|x|^(ell - 1), by multiplication when ell is 1, 2 or 3."""
    if iell == 1:
        return 1.0
    if iell == 2:
        return fabs(x)
    if iell == 3:
        return x * x
    return pow(fabs(x), ell - 1.0)


def trace(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell, taus):
    cdef const double[::1] da = np.ascontiguousarray(dir_a, dtype=np.float64)
    cdef const double[::1] db = np.ascontiguousarray(dir_b, dtype=np.float64)
    cdef const double[::1] sg = np.ascontiguousarray(signs, dtype=np.float64)
    cdef double el = ell
    cdef int iell = int(el) if el == int(el) and 1 <= el <= 3 else 0
    taus_a = np.ascontiguousarray(taus, dtype=np.float64)
    cdef const double[:, ::1] tau = taus_a
    brk_a, bt_a, bs_a = breakpoints(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell)
    cdef double[:, ::1] brk = brk_a
    cdef double[:, ::1] bt = bt_a
    cdef double[:, ::1] bs = bs_a
    cdef Py_ssize_t n = tau.shape[0], q = tau.shape[1], K = da.shape[0], i, k, j
    T_a = np.empty((n, q))
    S_a = np.empty((n, q))
    DT_a = np.empty((n, q))
    DS_a = np.empty((n, q))
    P_a = np.empty((n, q), dtype=np.int64)
    cdef double[:, ::1] T = T_a
    cdef double[:, ::1] S = S_a
    cdef double[:, ::1] DT = DT_a
    cdef double[:, ::1] DS = DS_a
    cdef long long[:, ::1] P = P_a
    # per-piece constants: velocity in t, b / f(a), and the ds/dtau prefactor
    vt_a = np.empty(K)
    ratio_a = np.empty(K)
    pref_a = np.empty(K)
    cdef double[::1] vt = vt_a
    cdef double[::1] ratio = ratio_a
    cdef double[::1] pref = pref_a
    for j in range(K):
        vt[j] = sg[j] * da[j]
        if da[j] != 0.0:
            ratio[j] = db[j] / _f(da[j], el)
            pref[j] = sg[j] * db[j] * pow(fabs(da[j]), 1.0 - el) * el
        else:
            ratio[j] = 0.0
            pref[j] = sg[j] * db[j]
    cdef double tt, tp, pw, ftp
    with nogil:
        for i in range(n):
            j = -1
            ftp = 0.0
            for k in range(q):
                if j < 0:
                    j = 0
                    ftp = _f(bt[i, 0], el)
                while j + 1 < K and brk[i, j + 1] <= tau[i, k]:
                    j += 1
                    ftp = _f(bt[i, j], el)
                if k > 0 and tau[i, k] < tau[i, k - 1]:
                    # unsorted times: restart the piece search
                    j = 0
                    while j + 1 < K and brk[i, j + 1] <= tau[i, k]:
                        j += 1
                    ftp = _f(bt[i, j], el)
                P[i, k] = j
                tp = bt[i, j]
                if da[j] != 0.0:
                    tt = tp + vt[j] * (tau[i, k] - brk[i, j])
                    pw = _abs_pow_m1(tt, el, iell)
                    T[i, k] = tt
                    S[i, k] = bs[i, j] + ratio[j] * (tt * pw - ftp)
                    DT[i, k] = vt[j]
                    DS[i, k] = pref[j] * pw
                else:
                    T[i, k] = tp
                    S[i, k] = bs[i, j] + pref[j] * (tau[i, k] - brk[i, j])
                    DT[i, k] = 0.0
                    DS[i, k] = pref[j]
    return T_a, S_a, DT_a, DS_a, P_a, brk_a


def poly_eval(T, S, js, ks, coefs):
    T_a = np.ascontiguousarray(T, dtype=np.float64)
    S_a = np.ascontiguousarray(S, dtype=np.float64)
    shape = T_a.shape
    cdef const double[::1] tv = T_a.reshape(-1)
    cdef const double[::1] sv = S_a.reshape(-1)
    cdef const long long[::1] jv = np.ascontiguousarray(js, dtype=np.int64)
    cdef const long long[::1] kv = np.ascontiguousarray(ks, dtype=np.int64)
    cdef const double[::1] cv = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], M = cv.shape[0], i, r, e
    out_a = np.zeros(n)
    cdef double[::1] out = out_a
    cdef double acc, term, x, y
    with nogil:
        for i in range(n):
            x = tv[i]
            y = sv[i]
            acc = 0.0
            for r in range(M):
                term = cv[r]
                for e in range(jv[r]):
                    term = term * x
                for e in range(kv[r]):
                    term = term * y
                acc = acc + term
            out[i] = acc
    return out_a.reshape(shape)
