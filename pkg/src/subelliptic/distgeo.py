"""Distorted plane geometry attached to the weights (1, ell).

Everything here is a closed-form function of the dressing map
``d_ell(t, s) = (f_ell(t), s)`` which sends the disto-circle
``t^{2 ell} + s^2 = 1`` onto the Euclidean unit circle.  Functions accept
numpy arrays wherever that is natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OriginProjection

TWO_PI = 2.0 * math.pi


def _is_scalar(x) -> bool:
    return not isinstance(x, np.ndarray) and np.ndim(x) == 0


def _ell(ell):
    return float(ell) if np.ndim(ell) == 0 else np.asarray(ell, dtype=float)


def f_ell(sigma, ell):
    """sigma |sigma|^(ell-1): odd, increasing.  ell may be an array."""
    ell = _ell(ell)
    if _is_scalar(sigma) and _is_scalar(ell):
        # written without math.* so that mpmath scalars keep their precision
        return sigma * abs(sigma) ** (ell - 1.0) if sigma != 0 else 0.0 * sigma
    sigma = np.asarray(sigma, dtype=float)
    return np.sign(sigma) * np.abs(sigma) ** ell


def f_ell_inv(y, ell):
    ell = _ell(ell)
    if _is_scalar(y) and _is_scalar(ell):
        if y == 0:
            return 0.0 * y
        r = abs(y) ** (1.0 / ell)
        return r if y > 0 else -r
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.abs(y) ** (1.0 / ell)


def f_ell_prime(sigma, ell):
    ell = float(ell)
    return ell * np.abs(sigma) ** (ell - 1.0)


@dataclass(frozen=True)
class DistoPoint:
    t: float
    s: float

    def __iter__(self):
        yield self.t
        yield self.s


@dataclass(frozen=True)
class CirclePoint:
    """Point of the disto-circle, keyed by its dressed angle theta in [0, 2 pi)."""
    theta: float
    a: float
    b: float

    @classmethod
    def from_theta(cls, theta, ell):
        theta = float(theta) % TWO_PI
        c, s = math.cos(theta), math.sin(theta)
        # snap the axis points so that a == 0 exactly on the s-axis
        if abs(c) < 1e-15:
            c = 0.0
        if abs(s) < 1e-15:
            s = 0.0
        return cls(theta, f_ell_inv(c, ell), s)

    def dressed(self, ell):
        return f_ell(self.a, ell), self.b

    def to_json(self):
        return {"theta": self.theta, "a": self.a, "b": self.b}

    def __iter__(self):
        yield self.a
        yield self.b


def dressing(p, ell):
    t, s = p
    return DistoPoint(f_ell(t, ell), s) if isinstance(p, DistoPoint) else (f_ell(t, ell), s)


def rho(t, s, ell):
    """Quasihomogeneous radius, rho^(2 ell) = t^(2 ell) + s^2."""
    ell = float(ell)
    return np.hypot(f_ell(t, ell), s) ** (1.0 / ell)


def dscalar(v, w, ell):
    """Disto-scalar product: the dot product of the dressed vectors."""
    return f_ell(v[0], ell) * f_ell(w[0], ell) + v[1] * w[1]


def ddet(v, w, ell):
    """Disto-determinant Delta_ell(v; w) = f(v1) w2 - v2 f(w1)."""
    return f_ell(v[0], ell) * w[1] - v[1] * f_ell(w[0], ell)


def dressed_angle(t, s, ell):
    ang = np.arctan2(s, f_ell(t, ell))
    return np.mod(ang, TWO_PI) if np.ndim(ang) else float(ang % TWO_PI)


def project(t, s, ell):
    """(t/rho, s/rho^ell) for arrays; no origin check."""
    r = rho(t, s, ell)
    return t / r, s / r ** float(ell)


def circle_point_from_xy(t, s, ell) -> CirclePoint:
    if t == 0 and s == 0:
        raise OriginProjection("cannot project the origin onto the disto-circle")
    a, b = project(t, s, ell)
    return CirclePoint(dressed_angle(t, s, ell), float(a), float(b))


def point_at(theta, radius, ell):
    """The point of dressed angle theta and quasihomogeneous radius `radius`."""
    ell = float(ell)
    R = np.asarray(radius, dtype=float) ** ell
    return f_ell_inv(R * np.cos(theta), ell), R * np.sin(theta)


def angle_diff(theta1, theta0):
    """Anticlockwise dressed angle from theta0 to theta1, in [0, 2 pi)."""
    return np.mod(np.asarray(theta1) - theta0, TWO_PI)


@dataclass(frozen=True)
class Sector:
    """Unit disto-sector swept anticlockwise from `start` to `end`.

    ``full`` marks the whole plane minus one ray (start == end).
    """
    start: CirclePoint
    end: CirclePoint
    full: bool = False

    @property
    def width(self) -> float:
        if self.full:
            return TWO_PI
        w = (self.end.theta - self.start.theta) % TWO_PI
        return w

    def contains_theta(self, theta, margin=0.0):
        d = angle_diff(theta, self.start.theta)
        return (d > margin) & (d < self.width - margin)

    def theta_at(self, frac):
        return (self.start.theta + frac * self.width) % TWO_PI

    def to_json(self):
        return {"start": self.start.theta, "end": self.end.theta, "width": self.width}


def make_sector(theta0, theta1, ell, full=False) -> Sector:
    return Sector(CirclePoint.from_theta(theta0, ell), CirclePoint.from_theta(theta1, ell), full)


def in_sector(p, sec: Sector, ell) -> bool:
    t, s = p
    if t == 0 and s == 0:
        return False
    return bool(sec.contains_theta(dressed_angle(t, s, ell)))


def line_step(start, direction, varrho_sign, tau, ell):
    """Point reached at time tau on the disto-line through `start` parallel to `direction`.

    t(tau) = t + sign*c*tau and the dressed displacement stays parallel to the
    dressed direction; a direction with c == 0 gives the vertical line
    (t, s + sign*d*tau).
    """
    t, s = start
    c, d = direction
    if not _is_scalar(tau):
        tau = np.asarray(tau, dtype=float)
    if c == 0:
        return t, s + varrho_sign * d * tau
    tt = t + varrho_sign * c * tau
    ss = s + d / f_ell(c, ell) * (f_ell(tt, ell) - f_ell(t, ell))
    return tt, ss


def line_velocity(t_now, direction, varrho_sign, ell):
    """d/dtau of line_step at the point whose first coordinate is t_now."""
    c, d = direction
    if c == 0:
        return np.zeros_like(np.asarray(t_now, dtype=float)), varrho_sign * d * np.ones_like(np.asarray(t_now, dtype=float))
    ell = float(ell)
    dt = varrho_sign * c * np.ones_like(np.asarray(t_now, dtype=float))
    ds = varrho_sign * d * abs(c) ** (1.0 - ell) * f_ell_prime(t_now, ell)
    return dt, ds
