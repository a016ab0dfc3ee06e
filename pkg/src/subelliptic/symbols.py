"""Quasihomogeneous functions phi(t, s) with phi(lam t, lam^ell s) = lam^m phi(t, s).

Weights are kept as exact integers/fractions so the degree constraint
``l1*j + l2*k == l1*m`` is checked without float drift; coefficients are
plain floats.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (ConstraintViolation, MalformedInput, SwapImpossible,
                     WeightViolation)

Monomial = Tuple[int, int, float]


@dataclass(frozen=True)
class QuasiWeights:
    l1: int
    l2: int
    m: Fraction

    @property
    def ell(self) -> Fraction:
        return Fraction(self.l2, self.l1)

    @property
    def ell_f(self) -> float:
        return self.l2 / self.l1

    @property
    def m_f(self) -> float:
        return float(self.m)

    def constraint_errors(self):
        errs = []
        if self.l1 <= 0 or self.l2 <= 0:
            errs.append("weights must be positive integers")
        elif math.gcd(self.l1, self.l2) != 1:
            errs.append(f"l1={self.l1} and l2={self.l2} are not coprime")
        if self.l1 > 0 and self.ell < 1:
            errs.append(f"ell = {self.ell} < 1")
        if self.l1 > 0 and self.m < 2 * self.ell:
            errs.append(f"m = {self.m} < 2*ell = {2 * self.ell}")
        return errs

    def check(self):
        errs = self.constraint_errors()
        if errs:
            raise ConstraintViolation("; ".join(errs))

    def to_json(self):
        return {"l1": self.l1, "l2": self.l2, "m": _frac_json(self.m)}


@dataclass(frozen=True)
class PolynomialForm:
    monomials: Tuple[Monomial, ...]


@dataclass(frozen=True)
class CallbackForm:
    """phi given through its restriction to the disto-circle.

    ``tilde_phi`` takes the dressed angle (radians) and returns a real.
    """
    tilde_phi: Callable[[np.ndarray], np.ndarray]
    p_hint: Optional[Fraction] = None


@dataclass(frozen=True)
class QhSymbol:
    weights: QuasiWeights
    form: Union[PolynomialForm, CallbackForm]
    name: Optional[str] = field(default=None, compare=False)

    @property
    def ell(self) -> float:
        return self.weights.ell_f

    @property
    def m(self) -> float:
        return self.weights.m_f

    @property
    def is_polynomial(self) -> bool:
        return isinstance(self.form, PolynomialForm)

    @property
    def monomials(self) -> Tuple[Monomial, ...]:
        if not self.is_polynomial:
            raise TypeError("callback symbols have no monomial list")
        return self.form.monomials

    def __call__(self, t, s):
        return evaluate(self, t, s)

    def to_json(self):
        d = self.weights.to_json()
        if self.is_polynomial:
            d["monomials"] = [[j, k, c] for j, k, c in self.form.monomials]
        else:
            d["callback"] = True
            d["p_hint"] = None if self.form.p_hint is None else _frac_json(self.form.p_hint)
        if self.name:
            d["name"] = self.name
        return d

    def digest(self) -> str:
        d = self.to_json()
        d.pop("name", None)
        if not self.is_polynomial:
            d["callback_id"] = getattr(self.form.tilde_phi, "__qualname__", repr(self.form.tilde_phi))
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _frac_json(x: Fraction):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else [x.numerator, x.denominator]


def _as_fraction(m) -> Fraction:
    if isinstance(m, (list, tuple)) and len(m) == 2:
        return Fraction(int(m[0]), int(m[1]))
    if isinstance(m, float):
        return Fraction(m).limit_denominator(10_000)
    return Fraction(m)


def _normalize_monomials(monomials) -> Tuple[Monomial, ...]:
    acc = {}
    for item in monomials:
        try:
            j, k, c = item
        except (TypeError, ValueError):
            raise MalformedInput(f"monomial must be [j, k, coef], got {item!r}")
        if int(j) != j or int(k) != k or j < 0 or k < 0:
            raise MalformedInput(f"exponents must be nonnegative integers, got {item!r}")
        c = float(c)
        if not math.isfinite(c):
            raise MalformedInput(f"non-finite coefficient in {item!r}")
        acc[(int(j), int(k))] = acc.get((int(j), int(k)), 0.0) + c
    mons = tuple((j, k, c) for (j, k), c in sorted(acc.items()) if c != 0.0)
    if not mons:
        raise MalformedInput("phi is identically zero")
    return mons


def make_symbol(l1, l2, m, monomials, name=None, check_constraints=True) -> QhSymbol:
    """Build a polynomial symbol, verifying every monomial's weighted degree."""
    w = QuasiWeights(int(l1), int(l2), _as_fraction(m))
    mons = _normalize_monomials(monomials)
    for j, k, _ in mons:
        if w.l1 * j + w.l2 * k != w.l1 * w.m:
            raise WeightViolation(
                f"monomial t^{j} s^{k}: {w.l1}*{j} + {w.l2}*{k} != {w.l1}*{w.m}")
    if check_constraints:
        w.check()
    return QhSymbol(w, PolynomialForm(mons), name)


def make_callback_symbol(tilde_phi, ell, m, p_hint=None, name=None) -> QhSymbol:
    ell = Fraction(ell).limit_denominator(1000) if isinstance(ell, float) else Fraction(ell)
    w = QuasiWeights(ell.denominator, ell.numerator, _as_fraction(m))
    w.check()
    ph = None if p_hint is None else _as_fraction(p_hint)
    return QhSymbol(w, CallbackForm(tilde_phi, ph), name)


BUILTINS = {
    "maire-l1": (1, 1, 3, [(1, 2, 1.0), (3, 0, -1.0)]),
    "maire-l2": (1, 2, 5, [(1, 2, 1.0), (5, 0, -1.0)]),
    "maire-l3": (1, 3, 7, [(1, 2, 1.0), (7, 0, -1.0)]),
    # -t^4 - t^2 s^4 + s^8 with the variables exchanged so that ell >= 1
    "jt-q8": (1, 2, 8, [(8, 0, 1.0), (4, 2, -1.0), (0, 4, -1.0)]),
    "quasielliptic-l2-m4": (1, 2, 4, [(4, 0, 1.0), (0, 2, 1.0)]),
    "negmax": (1, 1, 2, [(2, 0, -1.0)]),
}


def builtin(name: str) -> QhSymbol:
    try:
        l1, l2, m, mons = BUILTINS[name]
    except KeyError:
        raise MalformedInput(f"unknown builtin {name!r}; known: {', '.join(BUILTINS)}")
    return make_symbol(l1, l2, m, mons, name=name)


def parse_symbol(text, check_constraints=True) -> QhSymbol:
    """Parse the JSON symbol description (a string or an already-decoded dict).

    With check_constraints=False the ell >= 1, m >= 2 ell checks are deferred,
    which lets a caller exchange the variables first.
    """
    if isinstance(text, (str, bytes)):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"invalid JSON: {exc}") from None
    else:
        obj = text
    if not isinstance(obj, dict):
        raise MalformedInput("symbol description must be a JSON object")
    if "builtin" in obj:
        return builtin(obj["builtin"])
    missing = [k for k in ("l1", "l2", "m", "monomials") if k not in obj]
    if missing:
        raise MalformedInput(f"missing keys: {missing}")
    try:
        l1, l2 = int(obj["l1"]), int(obj["l2"])
    except (TypeError, ValueError):
        raise MalformedInput("l1 and l2 must be integers") from None
    if not isinstance(obj["monomials"], list):
        raise MalformedInput("monomials must be a list")
    try:
        m = _as_fraction(obj["m"])
    except (TypeError, ValueError, ZeroDivisionError):
        raise MalformedInput(f"bad degree {obj['m']!r}") from None
    return make_symbol(l1, l2, m, obj["monomials"], name=obj.get("name"),
                       check_constraints=check_constraints)


def dressed_angle(t, s, ell):
    ft = np.sign(t) * np.abs(t) ** ell
    return np.mod(np.arctan2(s, ft), 2 * np.pi)


def evaluate(sym: QhSymbol, t, s):
    """phi(t, s); accepts scalars or broadcastable arrays."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if sym.is_polynomial:
        out = np.zeros(np.broadcast(t, s).shape)
        for j, k, c in sym.form.monomials:
            out = out + c * t ** j * s ** k
        return out if out.ndim else float(out)
    ell, m = sym.ell, sym.m
    r = np.hypot(np.sign(t) * np.abs(t) ** ell, s) ** (1.0 / ell)
    th = dressed_angle(t, s, ell)
    with np.errstate(invalid="ignore"):
        vals = np.where(r > 0, r ** m * np.asarray(sym.form.tilde_phi(th), dtype=float), 0.0)
    return vals if vals.ndim else float(vals)


def negate(sym: QhSymbol) -> QhSymbol:
    name = sym.name
    if name is not None:
        name = name[1:] if name.startswith("-") else f"-{name}"
    if sym.is_polynomial:
        mons = tuple((j, k, -c) for j, k, c in sym.form.monomials)
        return QhSymbol(sym.weights, PolynomialForm(mons), name)
    f = sym.form.tilde_phi
    return QhSymbol(sym.weights, CallbackForm(lambda th: -np.asarray(f(th)), sym.form.p_hint), name)


def _swapped_weights(w: QuasiWeights) -> QuasiWeights:
    # old weights (1, ell) -> exchanged (ell, 1) -> renormalized (1, 1/ell), degree m/ell
    m_new = w.m * Fraction(w.l1, w.l2)
    return QuasiWeights(w.l2, w.l1, m_new)


def swap_variables(sym: QhSymbol) -> QhSymbol:
    """Exchange t and s, re-deriving weights; returns the orientation with ell >= 1.

    If the exchanged orientation violates the constraints but the original one
    satisfies them, the symbol is returned unchanged.
    """
    if not sym.is_polynomial:
        raise TypeError("swap_variables requires a polynomial symbol")
    w_new = _swapped_weights(sym.weights)
    mons = [(k, j, c) for j, k, c in sym.form.monomials]
    name = None if sym.name is None else f"swap({sym.name})"
    if not w_new.constraint_errors():
        return make_symbol(w_new.l1, w_new.l2, w_new.m, mons, name=name)
    if not sym.weights.constraint_errors():
        return sym
    raise SwapImpossible(
        f"neither orientation is admissible: original ({'; '.join(sym.weights.constraint_errors())}), "
        f"swapped ({'; '.join(w_new.constraint_errors())})")


def solve_weights(monomials: Sequence[Sequence[int]]):
    """Exact (l1, l2, m) making every (j, k) of equal weighted degree, or None.

    Uses t-weight 1 and s-weight ell; returns reduced integers l1, l2 and m as
    a Fraction.  Only used for diagnostics and tests.
    """
    pts = sorted({(int(j), int(k)) for j, k, *_ in monomials})
    if len(pts) < 2:
        return None
    (j0, k0), ells = pts[0], set()
    for j, k in pts[1:]:
        if k == k0:
            return None
        ells.add(Fraction(j0 - j, k - k0))
    if len(ells) != 1:
        return None
    ell = ells.pop()
    if ell <= 0:
        return None
    return ell.denominator, ell.numerator, j0 + ell * k0
