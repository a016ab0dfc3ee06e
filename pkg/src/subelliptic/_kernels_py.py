"""Vectorised numpy implementation of the batch kernels (fallback backend).

Shapes: n starts, q evaluation times per start, K pieces, K-1 crossing rays.
"""
import numpy as np

BACKEND = "python"

_MU_TOL = 1e-14
_TAU_TOL = 1e-12


def _f(x, ell):
    return np.sign(x) * np.abs(x) ** ell


def _finv(y, ell):
    return np.sign(y) * np.abs(y) ** (1.0 / ell)


def breakpoints(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell):
    """Times and points where each start enters pieces 0..K-1.

    Returns (brk, bt, bs), each (n, K); brk[:, 0] = 0.  Entries are NaN once
    a crossing fails (parallel line, opposite ray or negative time).
    """
    t0 = np.asarray(t0, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    n, K = t0.shape[0], len(dir_a)
    brk = np.full((n, K), np.nan)
    bt = np.full((n, K), np.nan)
    bs = np.full((n, K), np.nan)
    brk[:, 0], bt[:, 0], bs[:, 0] = 0.0, t0, s0
    for j in range(K - 1):
        a, b, sg = dir_a[j], dir_b[j], signs[j]
        ra, rb = ray_a[j], ray_b[j]
        tp, sp, tb = bt[:, j], bs[:, j], brk[:, j]
        fa, fra = _f(a, ell), _f(ra, ell)
        den = fa * rb - b * fra
        if abs(den) < 1e-300:
            break
        with np.errstate(invalid="ignore"):
            mu = (fa * sp - b * _f(tp, ell)) / den
            ok = mu >= -_MU_TOL
            mu = np.maximum(mu, 0.0)
            s1 = mu * rb
            if a != 0.0:
                t1 = _finv(mu * fra, ell)
                dtau = (t1 - tp) / (sg * a)
            else:
                t1 = tp.copy()
                dtau = (s1 - sp) / (sg * b)
            ok &= dtau >= -_TAU_TOL
        dtau = np.where(ok, np.maximum(dtau, 0.0), np.nan)
        brk[:, j + 1] = tb + dtau
        bt[:, j + 1] = np.where(ok, t1, np.nan)
        bs[:, j + 1] = np.where(ok, s1, np.nan)
    return brk, bt, bs


def trace(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell, taus):
    """Positions and tau-derivatives of the broken lines at times `taus` (n, q).

    Returns T, S, DT, DS (n, q), piece (n, q) int and brk (n, K).
    """
    ell = float(ell)
    taus = np.asarray(taus, dtype=float)
    brk, bt, bs = breakpoints(t0, s0, dir_a, dir_b, signs, ray_a, ray_b, ell)
    K = len(dir_a)
    # right-continuous piece index; a NaN breakpoint never compares <= tau
    piece = np.zeros(taus.shape, dtype=np.int64)
    for j in range(1, K):
        piece += (brk[:, j:j + 1] <= taus)
    T = np.empty_like(taus)
    S = np.empty_like(taus)
    DT = np.empty_like(taus)
    DS = np.empty_like(taus)
    for j in range(K):
        sel = piece == j
        if not sel.any():
            continue
        rows = np.nonzero(sel)[0]
        a, b, sg = dir_a[j], dir_b[j], signs[j]
        el = taus[sel] - brk[rows, j]
        tp, sp = bt[rows, j], bs[rows, j]
        if a != 0.0:
            tt = tp + sg * a * el
            T[sel] = tt
            S[sel] = sp + b / _f(a, ell) * (_f(tt, ell) - _f(tp, ell))
            DT[sel] = sg * a
            DS[sel] = sg * b * abs(a) ** (1.0 - ell) * ell * np.abs(tt) ** (ell - 1.0)
        else:
            T[sel] = tp
            S[sel] = sp + sg * b * el
            DT[sel] = 0.0
            DS[sel] = sg * b
    return T, S, DT, DS, piece, brk


def poly_eval(T, S, js, ks, coefs):
    T = np.asarray(T, dtype=float)
    S = np.asarray(S, dtype=float)
    out = np.zeros(T.shape)
    for j, k, c in zip(js, ks, coefs):
        out += c * T ** int(j) * S ** int(k)
    return out
