"""Smooth test functions with exact derivatives.

Everything here is built around the compactly supported bump

    chi(t) = exp(-1/(t(1-t)))  on (0,1),  0 elsewhere,

whose derivatives have the closed form D^i chi = R_i * chi with R_i a
rational function.  The R_i satisfy the recurrence

    R_1 = d/dt(-1/(t(1-t))),   R_{i+1} = R_i' + R_i * R_1,

and carrying the recurrence at the level of numerator polynomials keeps
every coefficient an integer: writing R_i = P_i / (t(1-t))^{2i} gives
P_1 = 1 - 2t and

    P_{i+1} = P_i' D^2 + (1 - 2t)(1 - 2iD) P_i,    D = t(1-t).

Evaluation clamps to zero once the exponent -1/(t(1-t)) drops below
log(MIN_POSITIVE) + 64, so the rational prefactors can never overflow the
vanishing exponential.

Function families (bump, scaled bumps, truncated polynomials, sine bumps,
spline bumps) expose exact derivatives up to MAX_ORDER and evaluate to
exactly zero outside their supports.  `sample` turns any of them into a
GridFunction carrying a derivative stack for the norm and covering
machinery.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import ParameterError, UnsupportedOrderError

MAX_ORDER = 8

# chi and all R_i * chi are flat at the support endpoints; below this
# exponent the exponential factor underflows any polynomial blowup of R_i.
CLAMP_EXPONENT = math.log(sys.float_info.min) + 64.0


# ---------------------------------------------------------------------------
# polynomial helpers (ascending coefficient tuples, exact arithmetic)
# ---------------------------------------------------------------------------

def _poly_trim(c):
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c)


def _poly_add(a, b):
    n = max(len(a), len(b))
    return _poly_trim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
                       for i in range(n)])


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return _poly_trim(out)


def _poly_derivative(a):
    if len(a) <= 1:
        return (0,)
    return _poly_trim([i * a[i] for i in range(1, len(a))])


def _poly_eval(a, t):
    """Horner evaluation; exact for Fraction/int t, vectorized for arrays."""
    if isinstance(t, np.ndarray):
        acc = np.zeros_like(t, dtype=float)
        for c in reversed(a):
            acc = acc * t + float(c)
        return acc
    acc = 0
    for c in reversed(a):
        acc = acc * t + c
    return acc


_D_POLY = (0, 1, -1)  # t(1-t)


@dataclass(frozen=True)
class RationalFunction:
    """Quotient of two polynomials in t, ascending coefficients.

    Arithmetic is evaluation oriented: products and sums cross-multiply
    without gcd reduction, which keeps coefficients exact (integers stay
    integers, Fractions stay Fractions) at the cost of degree growth.
    """

    num: tuple
    den: tuple

    def __post_init__(self):
        num = _poly_trim(self.num)
        den = _poly_trim(self.den)
        if den == (0,):
            raise ParameterError("denominator is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def degree(self):
        return (len(self.num) - 1, len(self.den) - 1)

    def __call__(self, t):
        return _poly_eval(self.num, t) / _poly_eval(self.den, t)

    def derivative(self) -> "RationalFunction":
        n, d = self.num, self.den
        num = _poly_add(_poly_mul(_poly_derivative(n), d),
                        tuple(-c for c in _poly_mul(n, _poly_derivative(d))))
        return RationalFunction(num, _poly_mul(d, d))

    def __mul__(self, other: "RationalFunction") -> "RationalFunction":
        return RationalFunction(_poly_mul(self.num, other.num),
                                _poly_mul(self.den, other.den))

    def __add__(self, other: "RationalFunction") -> "RationalFunction":
        num = _poly_add(_poly_mul(self.num, other.den),
                        _poly_mul(other.num, self.den))
        return RationalFunction(num, _poly_mul(self.den, other.den))


@lru_cache(maxsize=None)
def _p_polynomial(i: int) -> tuple:
    """Integer numerator P_i of R_i = P_i / (t(1-t))^{2i}."""
    if i == 1:
        return (1, -2)
    prev = _p_polynomial(i - 1)
    d2 = _poly_mul(_D_POLY, _D_POLY)
    term1 = _poly_mul(_poly_derivative(prev), d2)
    one_minus_2kd = _poly_add((1,), tuple(-2 * (i - 1) * c for c in _D_POLY))
    term2 = _poly_mul(_poly_mul((1, -2), one_minus_2kd), prev)
    return _poly_add(term1, term2)


@lru_cache(maxsize=None)
def _d_power(i: int) -> tuple:
    out = (1,)
    for _ in range(i):
        out = _poly_mul(out, _D_POLY)
    return out


def chi_derivative(i: int) -> RationalFunction:
    """The rational factor R_i with D^i chi = R_i * chi on (0,1)."""
    if i < 1:
        raise ParameterError("order must be >= 1")
    if i > MAX_ORDER:
        raise UnsupportedOrderError(f"order {i} exceeds MAX_ORDER={MAX_ORDER}")
    return RationalFunction(_p_polynomial(i), _d_power(2 * i))


def chi_stack(t: np.ndarray, max_i: int) -> np.ndarray:
    """Rows chi, chi', ..., chi^(max_i) evaluated at t, clamped near 0/1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((max_i + 1,) + t.shape)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    dd = ti * (1.0 - ti)
    g = -1.0 / dd
    live = g >= CLAMP_EXPONENT
    if not np.any(live):
        return out
    tl = ti[live]
    dl = dd[live]
    e = np.exp(g[live])
    rows = np.empty((max_i + 1, tl.size))
    rows[0] = e
    for i in range(1, max_i + 1):
        rows[i] = _poly_eval(_p_polynomial(i), tl) / dl ** (2 * i) * e
    idx = np.flatnonzero(inside.ravel())[live]
    flat = out.reshape(max_i + 1, -1)
    flat[:, idx] = rows
    return out


def chi(t):
    """The bump itself; scalar in, scalar out."""
    scalar = np.isscalar(t)
    v = chi_stack(np.atleast_1d(np.asarray(t, dtype=float)), 0)[0]
    return float(v[0]) if scalar else v.reshape(np.shape(t))


# ---------------------------------------------------------------------------
# analytic function families
# ---------------------------------------------------------------------------

class AnalyticFunction:
    """A function on R with exact derivatives and compact support.

    Subclasses implement `_derivative_inside(i, x)` for points already
    known to lie inside the open support; the base class handles the
    outside-is-zero convention and scalar/array plumbing.
    """

    support: tuple
    max_order: int = MAX_ORDER

    def derivative(self, i: int, x):
        if i < 0:
            raise ParameterError("derivative order must be >= 0")
        if i > self.max_order:
            raise UnsupportedOrderError(
                f"order {i} exceeds max_order={self.max_order}")
        scalar = np.isscalar(x)
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        a, b = self.support
        out = np.zeros_like(xa)
        mask = (xa >= a) & (xa <= b)
        if np.any(mask):
            out[mask] = self._derivative_inside(i, xa[mask])
        return float(out[0]) if scalar else out.reshape(np.shape(x))

    def __call__(self, x):
        return self.derivative(0, x)

    def _derivative_inside(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


def evaluate(f: AnalyticFunction, i: int, x):
    """Exact value of D^i f at x (0 outside the support, all orders)."""
    return f.derivative(i, x)


@dataclass(frozen=True)
class BumpChi(AnalyticFunction):
    """chi itself: support [0,1], strictly positive inside."""

    support: tuple = (0.0, 1.0)
    max_order: int = MAX_ORDER

    def _derivative_inside(self, i, x):
        return chi_stack(x, i)[i]

    def descriptor(self):
        return {"family": "bumpchi", "params": {}, "support": [0.0, 1.0]}


@dataclass(frozen=True)
class ScaledBump(AnalyticFunction):
    """chi((t-a)/(b-a)): the bump carried onto [a,b]."""

    a: float
    b: float
    max_order: int = MAX_ORDER

    def __post_init__(self):
        if not self.b > self.a:
            raise ParameterError("need b > a")
        object.__setattr__(self, "support", (float(self.a), float(self.b)))

    def _derivative_inside(self, i, x):
        s = (x - self.a) / (self.b - self.a)
        return chi_stack(s, i)[i] / (self.b - self.a) ** i

    def descriptor(self):
        return {"family": "scaledbump", "params": {"a": self.a, "b": self.b},
                "support": [self.a, self.b]}


@dataclass(frozen=True)
class Polynomial(AnalyticFunction):
    """A polynomial truncated to a closed support interval.

    Not smooth across the boundary; meant for bounded-domain experiments
    where the domain equals the support.
    """

    coeffs: tuple
    support: tuple = (0.0, 1.0)
    max_order: int = MAX_ORDER

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        object.__setattr__(self, "support",
                           (float(self.support[0]), float(self.support[1])))
        if not self.support[1] > self.support[0]:
            raise ParameterError("empty support interval")

    def _derivative_inside(self, i, x):
        c = self.coeffs
        for _ in range(i):
            c = _poly_derivative(c)
        return _poly_eval(c, x) * np.ones_like(x)

    def descriptor(self):
        return {"family": "polynomial",
                "params": {"coeffs": list(map(float, self.coeffs))},
                "support": list(self.support)}


@dataclass(frozen=True)
class SineBump(AnalyticFunction):
    """sin(pi f t) modulated by chi; support [0,1]."""

    frequency: int
    support: tuple = (0.0, 1.0)
    max_order: int = MAX_ORDER

    def __post_init__(self):
        if self.frequency < 1:
            raise ParameterError("frequency must be a positive integer")

    def _derivative_inside(self, i, x):
        ch = chi_stack(x, i)
        w = math.pi * self.frequency
        out = np.zeros_like(x)
        for l in range(i + 1):
            out += (math.comb(i, l) * w ** l
                    * np.sin(w * x + l * math.pi / 2.0) * ch[i - l])
        return out

    def descriptor(self):
        return {"family": "sinebump", "params": {"frequency": self.frequency},
                "support": [0.0, 1.0]}


def uniform_quintic_knots(dimension: int) -> np.ndarray:
    """Clamped quintic knot vector on [0,1] for a given coefficient count."""
    if dimension < 6:
        raise ParameterError("quintic spline needs at least 6 coefficients")
    interior = np.linspace(0.0, 1.0, dimension - 4)[1:-1]
    return np.concatenate([np.zeros(6), interior, np.ones(6)])


class SplineBump(AnalyticFunction):
    """B-spline times chi: compactly supported, C^{degree-1} smooth.

    The chi envelope guarantees flat decay at 0 and 1 regardless of the
    clamped spline's boundary values.  Derivatives use the Leibniz rule
    with exact spline derivatives from the B-spline recursion; orders
    above the spline degree drop the spline term entirely.
    """

    def __init__(self, coeffs, knots=None, degree: int = 5):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size < degree + 1:
            raise ParameterError("need at least degree+1 spline coefficients")
        if knots is None:
            if degree != 5:
                raise ParameterError("default knots are quintic; pass knots")
            knots = uniform_quintic_knots(coeffs.size)
        knots = np.asarray(knots, dtype=float)
        if knots.size != coeffs.size + degree + 1:
            raise ParameterError("knot count must equal coeffs + degree + 1")
        self.coeffs = coeffs
        self.knots = knots
        self.degree = degree
        self.support = (float(knots[0]), float(knots[-1]))
        self.max_order = MAX_ORDER
        base = BSpline(knots, coeffs, degree, extrapolate=False)
        self._splines = [base]
        for _ in range(degree):
            self._splines.append(self._splines[-1].derivative())

    def _spline_value(self, l, x):
        if l > self.degree:
            return np.zeros_like(x)
        return np.nan_to_num(self._splines[l](x), nan=0.0)

    def _derivative_inside(self, i, x):
        a, b = self.support
        s = (x - a) / (b - a)
        ch = chi_stack(s, i)
        out = np.zeros_like(x)
        for l in range(i + 1):
            out += (math.comb(i, l) * self._spline_value(l, x)
                    * ch[i - l] / (b - a) ** (i - l))
        return out

    def descriptor(self):
        return {"family": "splinebump",
                "params": {"coeffs": self.coeffs.tolist(),
                           "knots": self.knots.tolist(),
                           "degree": self.degree},
                "support": list(self.support)}


class Rescaled(AnalyticFunction):
    """Affine pullback of another family onto a new support interval."""

    def __init__(self, base: AnalyticFunction, a: float, b: float):
        if not b > a:
            raise ParameterError("need b > a")
        self.base = base
        self.support = (float(a), float(b))
        self.max_order = base.max_order
        c, d = base.support
        self._scale = (d - c) / (b - a)
        self._shift = c

    def _derivative_inside(self, i, x):
        a, _ = self.support
        s = self._shift + self._scale * (x - a)
        return self.base.derivative(i, s) * self._scale ** i

    def descriptor(self):
        return {"family": "rescaled",
                "params": {"a": self.support[0], "b": self.support[1],
                           "base": self.base.descriptor()},
                "support": list(self.support)}


class Sum(AnalyticFunction):
    """Finite linear combination sum_k c_k f_k."""

    def __init__(self, terms: Sequence[tuple]):
        terms = [(float(c), f) for c, f in terms]
        if not terms:
            raise ParameterError("empty sum")
        self.terms = terms
        self.support = (min(f.support[0] for _, f in terms),
                        max(f.support[1] for _, f in terms))
        self.max_order = min(f.max_order for _, f in terms)

    def _derivative_inside(self, i, x):
        out = np.zeros_like(x)
        for c, f in self.terms:
            out += c * f.derivative(i, x)
        return out

    def descriptor(self):
        return {"family": "sum",
                "params": {"terms": [{"coef": c, "fn": f.descriptor()}
                                     for c, f in self.terms]},
                "support": list(self.support)}


def from_descriptor(desc: dict) -> AnalyticFunction:
    """Rebuild a family from its JSON descriptor {family, params, support}."""
    fam = desc.get("family")
    params = desc.get("params", {})
    if fam == "bumpchi":
        return BumpChi()
    if fam == "scaledbump":
        return ScaledBump(params["a"], params["b"])
    if fam == "polynomial":
        return Polynomial(tuple(params["coeffs"]),
                          tuple(desc.get("support", (0.0, 1.0))))
    if fam == "sinebump":
        return SineBump(int(params["frequency"]))
    if fam == "splinebump":
        return SplineBump(params["coeffs"], params.get("knots"),
                          int(params.get("degree", 5)))
    if fam == "rescaled":
        return Rescaled(from_descriptor(params["base"]),
                        params["a"], params["b"])
    if fam == "sum":
        return Sum([(t["coef"], from_descriptor(t["fn"]))
                    for t in params["terms"]])
    raise ParameterError(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# sampled carrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridFunction:
    """Uniform samples of a function and its derivatives on [a, b].

    `stack` has shape (m+1, n): row i holds D^i u at the nodes, row 0 the
    values themselves.  provenance records whether the rows came from
    exact evaluation or from finite differences of samples.
    """

    a: float
    b: float
    stack: np.ndarray
    provenance: str = "exact"

    def __post_init__(self):
        st = np.asarray(self.stack, dtype=float)
        if st.ndim != 2 or st.shape[1] < 2:
            raise ParameterError("stack must be (m+1, n) with n >= 2")
        if self.provenance not in ("exact", "finite-difference"):
            raise ParameterError("provenance must be exact|finite-difference")
        if not self.b > self.a:
            raise ParameterError("need b > a")
        object.__setattr__(self, "stack", st)

    @property
    def n(self) -> int:
        return self.stack.shape[1]

    @property
    def max_derivative(self) -> int:
        return self.stack.shape[0] - 1

    @property
    def dx(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    def derivative(self, i: int) -> np.ndarray:
        if not 0 <= i <= self.max_derivative:
            raise ParameterError(
                f"derivative {i} not in stored stack (max {self.max_derivative})")
        return self.stack[i]

    @classmethod
    def from_samples(cls, values, interval, m: int) -> "GridFunction":
        """Build a stack by repeated second-order finite differencing."""
        values = np.asarray(values, dtype=float)
        a, b = interval
        dx = (b - a) / (values.size - 1)
        rows = [values]
        for _ in range(m):
            rows.append(np.gradient(rows[-1], dx, edge_order=2))
        return cls(float(a), float(b), np.stack(rows),
                   provenance="finite-difference")


def sample(f: AnalyticFunction, interval, n: int, m: int = 0) -> GridFunction:
    """Exact-provenance GridFunction of f on a closed uniform grid."""
    if n < 2:
        raise ParameterError("need at least 2 nodes")
    if m > f.max_order:
        raise UnsupportedOrderError(
            f"derivative stack {m} exceeds max_order={f.max_order}")
    a, b = float(interval[0]), float(interval[1])
    x = np.linspace(a, b, n)
    stack = np.stack([f.derivative(i, x) for i in range(m + 1)])
    return GridFunction(a, b, stack, provenance="exact")


# ---------------------------------------------------------------------------
# nowhere-polynomial perturbation and the standard corpus
# ---------------------------------------------------------------------------

def perturb_nowhere_polynomial(u: AnalyticFunction, eps: float) -> Sum:
    """u + eps * psi with psi a bump positive on a neighborhood of supp u.

    Requires supp u compactly inside (0,1) so that such a psi exists with
    support still inside (0,1).  As eps -> 0 the sum converges to u
    uniformly together with all derivatives up to max_order.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    a, b = u.support
    if not (0.0 < a and b < 1.0):
        raise ParameterError("support of u must be compactly inside (0,1)")
    psi = ScaledBump(a / 2.0, (1.0 + b) / 2.0)
    return Sum([(1.0, u), (eps, psi)])


_CORPUS_SPLINE_COEFFS = (0.6, -1.0, 0.8, 0.4, -0.9, 1.0, -0.3, 0.7)


def standard_corpus() -> list:
    """The seven-function corpus used across the inequality experiments.

    Returns (name, function) pairs: the bump, three sine bumps, a fixed
    spline bump, and two nowhere-polynomial perturbations of interior
    bumps.
    """
    return [
        ("bumpchi", BumpChi()),
        ("sinebump1", SineBump(1)),
        ("sinebump3", SineBump(3)),
        ("sinebump7", SineBump(7)),
        ("splinebump", SplineBump(_CORPUS_SPLINE_COEFFS)),
        ("perturbed_scaled",
         perturb_nowhere_polynomial(ScaledBump(0.3, 0.7), 1e-2)),
        ("perturbed_sine",
         perturb_nowhere_polynomial(Rescaled(SineBump(3), 0.2, 0.8), 5e-3)),
    ]


def corpus_function(name: str) -> AnalyticFunction:
    for key, fn in standard_corpus():
        if key == name:
            return fn
    raise ParameterError(f"unknown corpus function {name!r}")
