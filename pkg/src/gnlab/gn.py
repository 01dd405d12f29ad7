"""Exponent algebra and inequality evaluation.

The central relation ties the exponents of

    ||D^j u||_p  <=  C ||D^m u||_r^theta * ||D^{k_1}u...D^{k_kappa}u||_q^{(1-theta)/kappa}

together:

    1/p - j = theta (1/r - m) + (1-theta) (1/(q kappa) - kbar),

with kbar the mean of the product orders and theta running from the
critical value theta* = (j - kbar)/(m - kbar) up to 1.  At theta = theta*
the relation collapses to the dual form 1/p = theta/r + (1-theta)/(q kappa)
and the two residuals must agree identically.

All exponent arithmetic is exact (Fractions, with 1/inf = 0) so residuals
of valid tuples are exactly zero rather than float noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (InfeasibleError, InvariantError, ParameterError,
                     PreconditionError)
from .funcspace import GridFunction
from .norms import (INF, NormSpec, ProductSpec, derivative_product,
                    gagliardo_seminorm, lebesgue_norm, product_norm)

RESIDUAL_TOL = 1e-12


def as_exponent(x):
    """Normalize an exponent to Fraction, or inf."""
    if x is None:
        return None
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity"):
            return INF
        return Fraction(x)
    if isinstance(x, float) and math.isinf(x):
        return INF
    return Fraction(x)


def _inv(x) -> Fraction:
    """1/x with the 1/inf = 0 convention."""
    if x == INF:
        return Fraction(0)
    return Fraction(1) / Fraction(x)


def theta_star(ks, j: int, m: int) -> Fraction:
    """Critical interpolation weight (j - kbar)/(m - kbar)."""
    ks = tuple(int(k) for k in ks)
    if not ks or ks[-1] > j or not j < m:
        raise ParameterError("orders must satisfy k_kappa <= j < m")
    kbar = Fraction(sum(ks), len(ks))
    return (Fraction(j) - kbar) / (Fraction(m) - kbar)


@dataclass(frozen=True)
class GNParams:
    """The full exponent tuple of the generalized inequality.

    Construction validates everything: exponents >= 1, order chain
    k_1 <= ... <= k_kappa <= j < m, theta in [theta*, 1], and a vanishing
    relation residual.
    """

    p: object
    q: object
    r: object
    ks: tuple
    j: int
    m: int
    theta: object

    def __post_init__(self):
        p = as_exponent(self.p)
        q = as_exponent(self.q)
        r = as_exponent(self.r)
        th = self.theta if isinstance(self.theta, Fraction) else Fraction(self.theta)
        ks = tuple(int(k) for k in self.ks)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "ks", ks)
        self.validate()

    @property
    def kappa(self) -> int:
        return len(self.ks)

    @property
    def kbar(self) -> Fraction:
        return Fraction(sum(self.ks), self.kappa)

    @property
    def theta_star(self) -> Fraction:
        return theta_star(self.ks, self.j, self.m)

    def validate(self):
        for name, v in (("p", self.p), ("q", self.q), ("r", self.r)):
            if v != INF and v < 1:
                raise ParameterError(f"{name} must be >= 1 or inf, got {v}")
        if not self.ks:
            raise ParameterError("ks must be nonempty")
        if list(self.ks) != sorted(self.ks) or self.ks[0] < 0:
            raise ParameterError("ks must be sorted ascending, nonnegative")
        if not (self.ks[-1] <= self.j < self.m):
            raise ParameterError(
                f"need k_kappa <= j < m, got ks={self.ks} j={self.j} m={self.m}")
        ts = self.theta_star
        if not (ts <= self.theta <= 1):
            raise ParameterError(
                f"theta={self.theta} outside [theta*={ts}, 1]")
        res = relation_residual(self)
        if abs(res) > RESIDUAL_TOL:
            raise ParameterError(f"relation residual {res} exceeds tolerance")

    def echo(self) -> dict:
        def enc(x):
            return "inf" if x == INF else str(x)
        return {"p": enc(self.p), "q": enc(self.q), "r": enc(self.r),
                "ks": list(self.ks), "j": self.j, "m": self.m,
                "theta": str(self.theta), "kappa": self.kappa,
                "kbar": str(self.kbar), "theta_star": str(self.theta_star)}


def relation_residual(params: GNParams):
    """Signed residual of the exponent relation; exactly 0 for valid tuples.

    At theta = theta* the dual-form residual 1/p - theta/r - (1-theta)/(q kappa)
    is computed as well and must agree with the primary residual.
    """
    th = params.theta
    res = ((_inv(params.p) - params.j)
           - th * (_inv(params.r) - params.m)
           - (1 - th) * (_inv(params.q) / params.kappa - params.kbar))
    if th == params.theta_star:
        res_dual = (_inv(params.p) - th * _inv(params.r)
                    - (1 - th) * _inv(params.q) / params.kappa)
        if abs(res - res_dual) > RESIDUAL_TOL:
            raise InvariantError(
                f"critical-form residual {res_dual} disagrees with {res}")
    return res


def solve_exponent(p=None, q=None, r=None, ks=(), j=0, m=1, theta=None) -> GNParams:
    """Complete a tuple with exactly one of {p, q, theta} unknown (None).

    Solves the exponent relation exactly and returns a validated GNParams;
    raises InfeasibleError when no solution lies in the legal range.
    """
    unknowns = [name for name, v in (("p", p), ("q", q), ("theta", theta))
                if v is None]
    if len(unknowns) != 1:
        raise ParameterError(
            f"exactly one of p, q, theta must be unknown, got {unknowns}")
    if r is None:
        raise ParameterError("r must be given")
    ks = tuple(int(k) for k in ks)
    kappa = len(ks)
    kbar = Fraction(sum(ks), kappa) if ks else None
    ts = theta_star(ks, j, m)
    r = as_exponent(r)

    if p is None:
        th = Fraction(theta)
        qf = as_exponent(q)
        inv_p = (Fraction(j) + th * (_inv(r) - m)
                 + (1 - th) * (_inv(qf) / kappa - kbar))
        if inv_p < 0 or inv_p > 1:
            raise InfeasibleError(f"solved 1/p = {inv_p} outside [0, 1]")
        p = INF if inv_p == 0 else Fraction(1) / inv_p
        return GNParams(p, qf, r, ks, j, m, th)

    if q is None:
        th = Fraction(theta)
        pf = as_exponent(p)
        if th == 1:
            raise InfeasibleError("q is undetermined at theta = 1")
        inv_q = ((_inv(pf) - j - th * (_inv(r) - m)) / (1 - th) + kbar) * kappa
        if inv_q < 0 or inv_q > 1:
            raise InfeasibleError(f"solved 1/q = {inv_q} outside [0, 1]")
        qf = INF if inv_q == 0 else Fraction(1) / inv_q
        return GNParams(pf, qf, r, ks, j, m, th)

    pf = as_exponent(p)
    qf = as_exponent(q)
    denom = (_inv(r) - m) - (_inv(qf) / kappa - kbar)
    if denom == 0:
        raise InfeasibleError("theta coefficient vanishes; cannot solve")
    th = ((_inv(pf) - j) - (_inv(qf) / kappa - kbar)) / denom
    if not (ts <= th <= 1):
        raise InfeasibleError(f"solved theta = {th} outside [theta*={ts}, 1]")
    return GNParams(pf, qf, r, ks, j, m, th)


def l12_params() -> GNParams:
    """kappa=3 worked tuple: ks=(0,1,2), j=2, m=3, q=2, r=inf, theta=1/2, p=12."""
    return GNParams(12, 2, INF, (0, 1, 2), 2, 3, Fraction(1, 2))


def l6_params(k: int) -> GNParams:
    """kappa=2 worked tuple: ks=(0,k), j=k, m=2k, q=2, r=inf, theta=1/3, p=6."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    return GNParams(6, 2, INF, (0, k), k, 2 * k, Fraction(1, 3))


# ---------------------------------------------------------------------------
# inequality evaluation
# ---------------------------------------------------------------------------

@dataclass
class InequalityReport:
    lhs: float
    rhs_terms: dict
    rhs: float
    ratio: float
    params: dict
    grid: dict
    degenerate: bool = False
    violation_candidate: bool = False

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs_terms": dict(self.rhs_terms),
                "rhs": self.rhs, "ratio": self.ratio, "params": self.params,
                "grid": self.grid, "degenerate": self.degenerate,
                "violation_candidate": self.violation_candidate}


def _grid_meta(u: GridFunction) -> dict:
    return {"n": u.n, "a": u.a, "b": u.b, "provenance": u.provenance}


def _finish_report(lhs, rhs_terms, rhs, params, u) -> InequalityReport:
    degenerate = rhs == 0.0 and lhs == 0.0
    violation = rhs == 0.0 and lhs > 0.0
    ratio = 0.0 if rhs == 0.0 else lhs / rhs
    return InequalityReport(lhs=lhs, rhs_terms=rhs_terms, rhs=rhs,
                            ratio=ratio, params=params, grid=_grid_meta(u),
                            degenerate=degenerate,
                            violation_candidate=violation)


def _check_compact_support(u: GridFunction):
    scale = float(np.max(np.abs(u.stack[0]))) or 1.0
    if abs(u.stack[0][0]) > 1e-9 * scale or abs(u.stack[0][-1]) > 1e-9 * scale:
        raise PreconditionError(
            "function is not compactly supported inside the grid interval")


def evaluate_generalized(u: GridFunction, params: GNParams) -> InequalityReport:
    """Ratio report for the whole-line inequality on a compact support."""
    params.validate()
    _check_compact_support(u)
    th = float(params.theta)
    lhs = lebesgue_norm(u, NormSpec(float(params.p), params.j))
    top = lebesgue_norm(u, NormSpec(float(params.r), params.m))
    prod = product_norm(u, ProductSpec(params.ks, float(params.q)))
    rhs = top ** th * prod ** ((1.0 - th) / params.kappa)
    terms = {"top": top, "product": prod,
             "top_power": th, "product_power": (1.0 - th) / params.kappa}
    return _finish_report(lhs, terms, rhs, params.echo(), u)


@dataclass(frozen=True)
class BoundedExtras:
    """Supplementary low-order term of the bounded-domain inequality."""

    k0: int = 0
    s: float = 1.0
    omega: tuple | None = None

    def __post_init__(self):
        if self.k0 < 0:
            raise ParameterError("k0 must be >= 0")
        if not (float(self.s) >= 1.0 or math.isinf(float(self.s))):
            raise ParameterError("s must be >= 1 or inf")
        if self.omega is not None:
            lo, hi = self.omega
            if not (0.0 <= lo < hi <= 1.0):
                raise ParameterError("omega must be a nonempty subinterval")


def evaluate_bounded(u: GridFunction, params: GNParams,
                     extras: BoundedExtras) -> InequalityReport:
    """Bounded-domain form: multiplicative term plus a low-order norm.

    The function need not vanish at the interval ends.  For kappa = 1 the
    report additionally carries the classical decomposition, whose low
    factor is ||u||_q rather than a derivative product.
    """
    params.validate()
    if extras.k0 > params.ks[0]:
        raise ParameterError("k0 must not exceed k_1")
    dom = extras.omega
    th = float(params.theta)
    lhs = lebesgue_norm(u, NormSpec(float(params.p), params.j))
    top = lebesgue_norm(u, NormSpec(float(params.r), params.m))
    prod = product_norm(u, ProductSpec(params.ks, float(params.q), dom))
    low = lebesgue_norm(u, NormSpec(float(extras.s), extras.k0))
    rhs = top ** th * prod ** ((1.0 - th) / params.kappa) + low
    terms = {"top": top, "product": prod, "low_order": low,
             "top_power": th, "product_power": (1.0 - th) / params.kappa}
    if params.kappa == 1:
        base = lebesgue_norm(u, NormSpec(float(params.q), 0))
        terms["classical_rhs"] = top ** th * base ** (1.0 - th) + low
    return _finish_report(lhs, terms, rhs, params.echo(), u)


def evaluate_localized(u: GridFunction, params: GNParams,
                       omega: tuple) -> InequalityReport:
    """Additive localized form: the product term is measured on omega only."""
    params.validate()
    lo, hi = float(omega[0]), float(omega[1])
    if not (u.a <= lo < hi <= u.b):
        raise ParameterError("omega must be a nonempty subinterval of the grid")
    lhs = lebesgue_norm(u, NormSpec(float(params.p), params.j))
    top = lebesgue_norm(u, NormSpec(float(params.r), params.m))
    prod = product_norm(u, ProductSpec(params.ks, float(params.q), (lo, hi)))
    rhs = top + prod ** (1.0 / params.kappa)
    terms = {"top": top, "product_on_omega": prod,
             "product_power": 1.0 / params.kappa, "omega": [lo, hi]}
    return _finish_report(lhs, terms, rhs, params.echo(), u)


# ---------------------------------------------------------------------------
# integration-by-parts identities and the special ratios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IbpResiduals:
    l4: float | None
    l6: float | None

    def __iter__(self):
        return iter((self.l4, self.l6))


def ibp_identities(u: GridFunction, which: str | None = None) -> IbpResiduals:
    """Normalized residuals of the two derivative-product identities.

    L4: integral (u')^4 + 3 integral u (u')^2 u''  (vanishes for compact u)
    L6: integral (u')^6 + 5 integral u (u')^4 u''
    Each residual is normalized by its positive term; zero functions give 0.
    `which` restricts the computation to "L4" or "L6".
    """
    if which not in (None, "L4", "L6"):
        raise ParameterError("which must be None, 'L4' or 'L6'")
    from scipy.integrate import simpson
    u0, u1, u2 = u.stack[0], u.stack[1], u.stack[2]
    dx = u.dx

    def residual(power, factor):
        pos = float(simpson(u1 ** power, dx=dx))
        if pos == 0.0:
            return 0.0
        cross = float(simpson(u0 * u1 ** (power - 2) * u2, dx=dx))
        return (pos + factor * cross) / pos

    l4 = residual(4, 3.0) if which in (None, "L4") else None
    l6 = residual(6, 5.0) if which in (None, "L6") else None
    return IbpResiduals(l4, l6)


#: proof ceilings for the two derivative-product ratios
RATIO4_BOUND = math.sqrt(3.0)
RATIO6_BOUND = 5.0 ** (1.0 / 3.0)


@dataclass
class SpecialRow:
    name: str
    ratio4: float | None
    ratio6: float | None
    ratio_half: float | None
    skipped: tuple = ()


def ratio4(u: GridFunction) -> float:
    """||u'||_4 / ||u u''||_2^{1/2}; 0 when the denominator vanishes."""
    den = product_norm(u, ProductSpec((0, 2), 2.0))
    if den == 0.0:
        return 0.0
    return lebesgue_norm(u, NormSpec(4.0, 1)) / math.sqrt(den)


def ratio6(u: GridFunction) -> float:
    """||u'||_6 / ||u u' u''||_2^{1/3}; 0 when the denominator vanishes."""
    den = product_norm(u, ProductSpec((0, 1, 2), 2.0))
    if den == 0.0:
        return 0.0
    return lebesgue_norm(u, NormSpec(6.0, 1)) / den ** (1.0 / 3.0)


def ratio_half(u: GridFunction) -> float:
    """Fractional ratio ||u||_{W^{1/2,4}} / ||u u'||_2^{1/2}."""
    den = product_norm(u, ProductSpec((0, 1), 2.0))
    if den == 0.0:
        return 0.0
    return gagliardo_seminorm(u, 0.5, 4.0) / math.sqrt(den)


def special_constants(corpus, include_fractional: bool = True) -> list:
    """Table of the three special ratios over (name, GridFunction) pairs.

    Rows with vanishing denominators are kept but marked in `skipped`.
    """
    rows = []
    for name, u in corpus:
        skipped = []
        r4 = ratio4(u)
        if r4 == 0.0 and lebesgue_norm(u, NormSpec(4.0, 1)) > 0:
            skipped.append("ratio4")
            r4 = None
        r6 = ratio6(u)
        if r6 == 0.0 and lebesgue_norm(u, NormSpec(6.0, 1)) > 0:
            skipped.append("ratio6")
            r6 = None
        rh = None
        if include_fractional:
            rh = ratio_half(u)
            if rh == 0.0 and lebesgue_norm(u, NormSpec(4.0, 0)) > 0:
                skipped.append("ratio_half")
                rh = None
        rows.append(SpecialRow(name, r4, r6, rh, tuple(skipped)))
    return rows


def open_problem_probe(corpus, q, ks) -> list:
    """Exploratory ratios ||D^{kbar}u||_{q kappa} / ||product||_q^{1/kappa}.

    Integer kbar uses the plain Lebesgue norm of the mean-order
    derivative.  The only supported non-integer pattern is ks=(0,1),
    where the fractional seminorm of order 1/2 in L^{q kappa} stands in.
    No pass/fail: exploration output only.
    """
    ks = tuple(int(k) for k in ks)
    if not ks:
        raise ParameterError("ks must be nonempty")
    kappa = len(ks)
    q = float(q)
    kbar = Fraction(sum(ks), kappa)
    fractional = kbar.denominator != 1
    if fractional and ks != (0, 1):
        raise ParameterError(
            "non-integer mean order is supported only for the (0,1) pattern")
    rows = []
    for name, u in corpus:
        den = product_norm(u, ProductSpec(ks, q))
        if den == 0.0:
            rows.append({"name": name, "lhs": 0.0, "rhs": 0.0,
                         "ratio": None, "skipped": True})
            continue
        if fractional:
            lhs = gagliardo_seminorm(u, 0.5, q * kappa)
        else:
            lhs = lebesgue_norm(u, NormSpec(q * kappa, int(kbar)))
        rhs = den ** (1.0 / kappa)
        rows.append({"name": name, "lhs": lhs, "rhs": rhs,
                     "ratio": lhs / rhs, "skipped": False})
    return rows
