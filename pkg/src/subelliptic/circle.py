"""Analysis of phi restricted to the disto-circle S.

The circle is parametrised by the dressed angle theta, so that a point of S
is (f_ell^{-1}(cos theta), sin theta).  All verdicts are statements at the
sampling resolution h = 2 pi / n_samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize, signal

from .distgeo import TWO_PI, CirclePoint, Sector, f_ell, f_ell_inv, make_sector
from .errors import (MissingPHint, NonUniqueMinimum, OrderUndetectable,
                     PropertyOneFailure, UnresolvedZero)
from .symbols import QhSymbol, evaluate

ZERO_TOL = 1e-9
ROOT_XTOL = 1e-12
DEFAULT_SAMPLES = 4096
MAX_SAMPLES = 2 ** 20
MAX_SUBARCS = 64
ACUTE_MARGIN = 1e-3          # sub-arcs keep a half-width <= pi/2 - ACUTE_MARGIN
HALF_LIMIT = 0.5 * math.pi - ACUTE_MARGIN
FLAT_TOL = 1e-14             # normalized samples this small count as identically zero


def phi_tilde(sym: QhSymbol, theta):
    """phi on S as a function of the dressed angle (vectorised)."""
    theta = np.asarray(theta, dtype=float)
    if not sym.is_polynomial:
        return np.asarray(sym.form.tilde_phi(np.mod(theta, TWO_PI)), dtype=float)
    c = np.cos(theta)
    c = np.where(np.abs(c) < 1e-15, 0.0, c)
    return evaluate(sym, f_ell_inv(c, sym.ell) if c.ndim else f_ell_inv(float(c), sym.ell), np.sin(theta))


def chart_values(sym: QhSymbol, theta, chart: str):
    """phi-tilde through an explicit chart: 't' solves for s, 's' solves for t."""
    ell = sym.ell
    theta = np.asarray(theta, dtype=float)
    if chart == "t":
        a = f_ell_inv(np.cos(theta), ell)
        b = np.sign(np.sin(theta)) * np.sqrt(np.clip(1.0 - np.abs(a) ** (2 * ell), 0.0, None))
    elif chart == "s":
        b = np.sin(theta)
        a = np.sign(np.cos(theta)) * np.clip(1.0 - b * b, 0.0, None) ** (1.0 / (2 * ell))
    else:
        raise ValueError(chart)
    return evaluate(sym, a, b)


@dataclass(frozen=True)
class CircleProfile:
    sym: QhSymbol
    theta: np.ndarray
    values: np.ndarray
    h: float
    scale: float

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def samples(self):
        ell = self.sym.ell
        return [(CirclePoint.from_theta(t, ell), float(v)) for t, v in zip(self.theta, self.values)]

    def normalized(self, theta):
        return phi_tilde(self.sym, theta) / self.scale


def sample_profile(sym: QhSymbol, n_samples: int = DEFAULT_SAMPLES) -> CircleProfile:
    if n_samples < 64:
        raise ValueError("n_samples must be at least 64")
    theta = TWO_PI * np.arange(n_samples) / n_samples
    vals = np.asarray(phi_tilde(sym, theta), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("phi-tilde is not finite on the sample grid")
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        raise ValueError("phi vanishes identically on the circle")
    return CircleProfile(sym, theta, vals, TWO_PI / n_samples, scale)


@dataclass(frozen=True)
class Zero:
    """A zero of phi-tilde.  For kind 'flat' the zero set is the arc [theta, theta_end]."""
    theta: float
    bracket: Tuple[float, float]
    kind: str                    # crossing | tangential | flat
    left_sign: int
    right_sign: int
    theta_end: Optional[float] = None
    point: Optional[CirclePoint] = None

    @property
    def end(self) -> float:
        return self.theta if self.theta_end is None else self.theta_end

    def __iter__(self):
        yield self.point
        yield self.bracket

    def to_json(self):
        d = {"theta": self.theta, "kind": self.kind, "bracket": list(self.bracket),
             "signs": [self.left_sign, self.right_sign]}
        if self.theta_end is not None:
            d["theta_end"] = self.theta_end
        return d


def _sign(x):
    return 1 if x > ZERO_TOL else (-1 if x < -ZERO_TOL else 0)


def _check_bracket(profile, lo, hi, expect_changes):
    xs = np.linspace(lo, hi, 65)
    s = [_sign(v) for v in profile.normalized(xs)]
    s = [x for x in s if x != 0]
    changes = sum(1 for u, w in zip(s, s[1:]) if u != w)
    if changes != expect_changes:
        raise UnresolvedZero(
            f"{changes} sign changes inside [{lo:.6g}, {hi:.6g}], expected {expect_changes}; "
            "increase n_samples")


def _crossing(profile, lo, hi):
    fn = profile.normalized
    _check_bracket(profile, lo, hi, 1)
    return optimize.bisect(lambda x: float(fn(x)), lo, hi, xtol=ROOT_XTOL, maxiter=200)


def _tangential(profile, lo, hi):
    fn = profile.normalized
    res = optimize.minimize_scalar(lambda x: abs(float(fn(x))), bounds=(lo, hi),
                                   method="bounded", options={"xatol": ROOT_XTOL})
    return float(res.x), float(res.fun)


def find_zeros(profile: CircleProfile) -> List[Zero]:
    v = profile.values / profile.scale
    n, h, ell = profile.n, profile.h, profile.sym.ell
    sgn = np.where(v > ZERO_TOL, 1, np.where(v < -ZERO_TOL, -1, 0))
    nz = np.nonzero(sgn)[0]
    out = []

    def mk(theta, lo, hi, kind, sl, sr, end=None):
        theta = theta % TWO_PI
        end = None if end is None else end % TWO_PI
        out.append(Zero(theta, (lo, hi), kind, int(sl), int(sr), end,
                        CirclePoint.from_theta(theta, ell)))

    # gaps between consecutive non-zero samples, cyclically
    for idx, p in enumerate(nz):
        q = nz[idx + 1] if idx + 1 < len(nz) else nz[0] + n
        lo, hi = profile.theta[p], profile.theta[p] + (q - p) * h
        sl, sr = sgn[p], sgn[q % n]
        gap = q - p - 1
        if gap == 0:
            if sl != sr:
                mk(_crossing(profile, lo, hi), lo, hi, "crossing", sl, sr)
            continue
        run = v[(np.arange(p + 1, q)) % n]
        if gap >= 3 and np.all(np.abs(run) <= FLAT_TOL):
            mk(lo + h, lo, hi, "flat", sl, sr, end=hi - h)
        elif sl != sr:
            mk(_crossing(profile, lo, hi), lo, hi, "crossing", sl, sr)
        else:
            _check_bracket(profile, lo, hi, 0)
            x, _ = _tangential(profile, lo, hi)
            mk(x, lo, hi, "tangential", sl, sr)

    # tangential zeros hiding between samples: local minima of |phi-tilde|
    av = np.abs(v)
    prev, nxt = np.roll(np.arange(n), 1), np.roll(np.arange(n), -1)
    cand = np.nonzero((sgn != 0) & (sgn[prev] == sgn) & (sgn[nxt] == sgn)
                      & (av < av[prev]) & (av <= av[nxt]))[0]
    for i in cand:
        lo, hi = profile.theta[i] - h, profile.theta[i] + h
        x, fx = _tangential(profile, lo, hi)
        if fx <= ZERO_TOL:
            _check_bracket(profile, lo, hi, 0)
            mk(x, lo, hi, "tangential", sgn[i], sgn[i])
    out.sort(key=lambda z: z.theta)
    return out


# ---------------------------------------------------------------- components

@dataclass(frozen=True)
class SubArc:
    arc: Sector
    peak: CirclePoint

    def to_json(self):
        return {"arc": self.arc.to_json(), "peak": self.peak.theta}


@dataclass(frozen=True)
class SignComponent:
    kind: str                                   # positive | negative
    arc: Sector
    extremum: CirclePoint
    endpoint_zero_orders: Tuple[Optional[Fraction], Optional[Fraction]] = (None, None)
    subarcs: Tuple[SubArc, ...] = ()

    def to_json(self):
        d = {"kind": self.kind, "arc": self.arc.to_json(), "extremum": self.extremum.theta,
             "endpoint_zero_orders": [None if p is None else str(p) for p in self.endpoint_zero_orders]}
        if self.subarcs:
            d["subarcs"] = [s.to_json() for s in self.subarcs]
        return d


def _arc_samples(profile, start, width):
    """Sample indices strictly inside the anticlockwise arc, in arc order."""
    d = np.mod(profile.theta - start, TWO_PI)
    inside = np.nonzero((d > 0) & (d < width))[0]
    return inside[np.argsort(d[inside])], d


def _refine_extremum(profile, theta0, sign):
    h = profile.h
    res = optimize.minimize_scalar(lambda x: -sign * float(profile.normalized(x)),
                                   bounds=(theta0 - h, theta0 + h), method="bounded",
                                   options={"xatol": ROOT_XTOL})
    return float(res.x) % TWO_PI


def _split_unimodal(x0, x1, peak, flat):
    """Chop [x0, x1] (peak inside) into Property-1 sub-arcs as (lo, hi, peak) triples."""
    if flat:
        k = max(1, math.ceil((x1 - x0) / (2 * HALF_LIMIT)))
        w = (x1 - x0) / k
        return [(x0 + i * w, x0 + (i + 1) * w, x0 + (i + 0.5) * w) for i in range(k)]
    wl, wr = peak - x0, x1 - peak
    if wl <= HALF_LIMIT and wr <= HALF_LIMIT:
        return [(x0, x1, peak)]
    kl = max(1, math.ceil(wl / HALF_LIMIT))
    kr = max(1, math.ceil(wr / HALF_LIMIT))
    el = [x0 + i * wl / kl for i in range(kl + 1)]
    er = [peak + i * wr / kr for i in range(kr + 1)]
    out = [(el[i], el[i + 1], el[i + 1]) for i in range(kl - 1)]
    out.append((el[kl - 1], er[1], peak))
    out += [(er[i], er[i + 1], er[i]) for i in range(1, kr)]
    return out


def _positive_subarcs(profile, start, width):
    ell = profile.sym.ell
    idx, d = _arc_samples(profile, start, width)
    vals = profile.values[idx] / profile.scale
    x = d[idx]
    # split at interior local minima (prominence filters float noise)
    mins, _ = signal.find_peaks(-vals, prominence=1e-10)
    cuts = [0.0] + [float(x[i]) for i in mins] + [width]
    bounds = [0] + list(mins) + [len(idx) - 1]
    pieces = []
    for (c0, c1), (i0, i1) in zip(zip(cuts, cuts[1:]), zip(bounds, bounds[1:])):
        seg = vals[i0:i1 + 1]
        flat = len(seg) == 0 or float(seg.max() - seg.min()) < 1e-12
        if flat:
            peak = 0.5 * (c0 + c1)
        else:
            j = i0 + int(np.argmax(seg))
            peak = (_refine_extremum(profile, profile.theta[idx[j]], +1) - start) % TWO_PI
            peak = min(max(peak, c0), c1)
        pieces += _split_unimodal(c0, c1, peak, flat)
    if len(pieces) > MAX_SUBARCS:
        raise PropertyOneFailure(
            f"positive arc needs {len(pieces)} > {MAX_SUBARCS} sub-arcs",
            witness={"start": start, "width": width})
    return tuple(SubArc(make_sector(start + lo, start + hi, ell), CirclePoint.from_theta(start + pk, ell))
                 for lo, hi, pk in pieces)


def _negative_minimum(profile, start, width):
    ell = profile.sym.ell
    idx, _ = _arc_samples(profile, start, width)
    vals = profile.values[idx] / profile.scale
    j = int(np.argmin(vals))
    near = np.nonzero(vals <= vals[j] + ZERO_TOL)[0]
    contiguous = np.all(np.diff(near) == 1)
    flat = len(near) >= 3 and float(np.ptp(vals[near])) < 1e-15
    if not contiguous or flat:
        far = near[-1] if near[-1] != j else near[0]
        raise NonUniqueMinimum(
            "negative component has more than one minimum",
            witness=(float(profile.theta[idx[j]]), float(profile.theta[idx[far]])))
    theta = _refine_extremum(profile, profile.theta[idx[j]], -1)
    return CirclePoint.from_theta(theta, ell)


def _component_arcs(profile, zeros):
    """(start, width, kind) for the open arcs between consecutive zeros."""
    if not zeros:
        kind = "positive" if profile.values[0] > 0 else "negative"
        return [(0.0, TWO_PI, kind, True)]
    arcs = []
    for i, z in enumerate(zeros):
        nxt = zeros[(i + 1) % len(zeros)]
        start = z.end
        width = (nxt.theta - start) % TWO_PI
        if len(zeros) == 1 and z.kind != "flat":
            width = TWO_PI
        if width <= 0:
            continue
        kind = "positive" if z.right_sign > 0 else "negative"
        arcs.append((start, width, kind, False))
    return arcs


def _decompose(profile, zeros):
    """Components plus per-component failures (exceptions are collected, not raised)."""
    ell = profile.sym.ell
    comps, failures = [], []
    for start, width, kind, whole in _component_arcs(profile, zeros):
        full = whole or width >= TWO_PI
        arc = Sector(CirclePoint.from_theta(start, ell), CirclePoint.from_theta(start + width, ell), full)
        try:
            if kind == "positive":
                subs = _positive_subarcs(profile, start, width)
                top = max(subs, key=lambda s: float(profile.normalized(s.peak.theta)))
                comps.append(SignComponent(kind, arc, top.peak, subarcs=subs))
            else:
                comps.append(SignComponent(kind, arc, _negative_minimum(profile, start, width)))
        except (PropertyOneFailure, NonUniqueMinimum) as exc:
            failures.append(exc)
            comps.append(SignComponent(kind, arc, arc.start))
    return comps, failures


def decompose(profile: CircleProfile, zeros: List[Zero]) -> List[SignComponent]:
    comps, failures = _decompose(profile, zeros)
    if failures:
        raise failures[0]
    return comps


# ---------------------------------------------------------------- orders

def _slope_fit(g, x0=1e-2, k=12, keep=8):
    xs = x0 * 2.0 ** -np.arange(k)
    ys = np.array([g(x) for x in xs])
    if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise OrderUndetectable("phi-tilde vanishes near the zero on a whole neighbourhood")
    lx, ly = np.log(xs[-keep:]), np.log(ys[-keep:])
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icpt)) ** 2)))
    local = np.diff(ly) / np.diff(lx)
    if resid > 0.05 or abs(local[-1] - slope) > 0.05:
        raise OrderUndetectable(f"log-log fit unstable (slope {slope:.4f}, residual {resid:.3g})")
    return float(slope)


def estimate_p(sym: QhSymbol, zero) -> Fraction:
    """Vanishing order of phi-tilde at a zero (max over the two sides, at least 1).

    Zeros on the s-axis are measured in the t-chart, where S is the graph
    s = +-sqrt(1 - t^(2 ell)); other zeros in the dressed-angle chart.
    """
    if not sym.is_polynomial:
        if sym.form.p_hint is None:
            raise MissingPHint("callback symbol needs p_hint to supply the zero order")
        return Fraction(sym.form.p_hint)
    theta = zero.theta if isinstance(zero, (Zero, CirclePoint)) else float(zero)
    ell = sym.ell
    on_axis = abs(math.cos(theta)) < 1e-12
    if on_axis:
        b0 = 1.0 if math.sin(theta) > 0 else -1.0

        def side(sg):
            return lambda x: abs(float(evaluate(sym, sg * x, b0 * math.sqrt(1.0 - x ** (2 * ell)))))
        denom = sym.weights.l1
    else:
        scale = 1.0

        def side(sg):
            return lambda x: abs(float(phi_tilde(sym, theta + sg * x))) / scale
        denom = 1
    slopes = [_slope_fit(side(sg)) for sg in (-1.0, 1.0)]
    p_raw = max(slopes)
    p = Fraction(p_raw).limit_denominator(denom)
    if abs(float(p) - p_raw) > 0.05:
        raise OrderUndetectable(f"order {p_raw:.4f} is not near a rational with denominator <= {denom}")
    return max(p, Fraction(1))


# ---------------------------------------------------------------- verdicts

@dataclass
class ItemResult:
    ok: bool
    detail: str = ""
    witness: object = None

    def to_json(self):
        d = {"pass": self.ok, "detail": self.detail}
        if self.witness is not None:
            d["witness"] = _jsonable(self.witness)
        return d


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Fraction):
        return str(x)
    return x


@dataclass
class H2Verdict:
    ok: bool
    items: dict
    p_global: Optional[Fraction]
    components: List[SignComponent]
    zeros: List[Zero]
    resolution: float
    n_samples: int
    ell: float
    notes: List[str] = field(default_factory=list)

    @property
    def pass_(self) -> bool:
        return self.ok

    def failed_items(self):
        return [k for k, r in sorted(self.items.items()) if not r.ok]

    def to_json(self):
        return {
            "pass": self.ok,
            "items": {str(k): r.to_json() for k, r in sorted(self.items.items())},
            "p_global": None if self.p_global is None else str(self.p_global),
            "components": [c.to_json() for c in self.components],
            "zeros": [z.to_json() for z in self.zeros],
            "resolution": self.resolution,
            "n_samples": self.n_samples,
            "notes": list(self.notes),
        }


def _profile_and_zeros(sym, n_samples):
    n = n_samples
    while True:
        prof = sample_profile(sym, n)
        try:
            return prof, find_zeros(prof)
        except UnresolvedZero:
            if n * 4 > MAX_SAMPLES:
                raise
            n *= 4


def check_H2(sym: QhSymbol, n_samples: int = DEFAULT_SAMPLES) -> H2Verdict:
    prof, zeros = _profile_and_zeros(sym, n_samples)
    v = prof.values / prof.scale
    items, notes = {}, []

    vmax = float(v.max())
    items[1] = ItemResult(vmax >= -ZERO_TOL, f"max phi-tilde = {vmax * prof.scale:.6g}",
                          None if vmax >= -ZERO_TOL else float(prof.theta[int(np.argmax(v))]))

    bad = []
    for z in zeros:
        if z.left_sign <= 0 and z.right_sign <= 0:
            bad.append(z.theta)
        elif z.kind == "flat" and (z.left_sign < 0 or z.right_sign < 0):
            bad.append(z.theta)
            notes.append(f"flat zero arc at {z.theta:.6f} adjacent to negative values treated as a local maximum")
    items[2] = ItemResult(not bad, "zeros that are local maxima" if bad else "no zero is a local maximum",
                          bad or None)

    comps, failures = _decompose(prof, zeros)
    p1 = [f for f in failures if isinstance(f, PropertyOneFailure)]
    nu = [f for f in failures if isinstance(f, NonUniqueMinimum)]
    items[3] = ItemResult(not p1, str(p1[0]) if p1 else "Property-1 splitting found",
                          p1[0].witness if p1 else None)
    items[4] = ItemResult(not nu, str(nu[0]) if nu else "unique minimum on every negative component",
                          nu[0].witness if nu else None)

    orders, perr = {}, []
    for z in zeros:
        if z.kind == "flat":
            perr.append((z.theta, "flat zero arc"))
            continue
        try:
            orders[z.theta] = estimate_p(sym, z)
        except (OrderUndetectable, MissingPHint) as exc:
            perr.append((z.theta, str(exc)))
    items[5] = ItemResult(not perr, "; ".join(e for _, e in perr) if perr else "order found at every zero",
                          [t for t, _ in perr] or None)
    p_global = max(orders.values()) if orders else None

    by_theta = {round(t, 9): p for t, p in orders.items()}
    comps = [replace(c, endpoint_zero_orders=(by_theta.get(round(c.arc.start.theta, 9)),
                                              by_theta.get(round(c.arc.end.theta, 9))))
             for c in comps]
    ok = all(r.ok for r in items.values())
    return H2Verdict(ok, items, p_global, comps, zeros, prof.h, prof.n, sym.ell, notes)


def check_H1(profile: CircleProfile) -> bool:
    """Finitely many monotone pieces at the sampling resolution."""
    v = profile.values / profile.scale
    ext = len(signal.find_peaks(v, prominence=1e-10)[0]) + len(signal.find_peaks(-v, prominence=1e-10)[0])
    return ext < profile.n // 4
