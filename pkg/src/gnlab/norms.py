"""Lebesgue, derivative-product, and fractional norms on grid functions.

Finite-exponent norms use composite Simpson on the uniform grid, so the
node count over the integration domain must be odd.  The infinity norm is
the grid maximum.  The fractional seminorm is the standard double-integral
Gagliardo form discretized by midpoint double summation over the grid
domain padded by one support length on each side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import ParameterError
from .funcspace import GridFunction

INF = float("inf")

#: relative accuracy target of the Simpson rule at the reference resolution
QUADRATURE_RTOL = 1e-6


def _check_exponent(p):
    p = float(p)
    if not (p >= 1.0):
        raise ParameterError(f"exponent must be >= 1, got {p}")
    return p


@dataclass(frozen=True)
class NormSpec:
    """Which norm: L^p of the j-th derivative over a subinterval."""

    p: float
    j: int = 0
    domain: tuple | None = None

    def __post_init__(self):
        _check_exponent(self.p)
        if self.j < 0:
            raise ParameterError("derivative order must be >= 0")


@dataclass(frozen=True)
class ProductSpec:
    """L^q norm of the pointwise product of derivatives D^{k_1}..D^{k_kappa}."""

    ks: tuple
    q: float
    domain: tuple | None = None

    def __post_init__(self):
        ks = tuple(int(k) for k in self.ks)
        if not ks:
            raise ParameterError("order list must be nonempty")
        if list(ks) != sorted(ks):
            raise ParameterError("order list must be sorted ascending")
        if ks[0] < 0:
            raise ParameterError("orders must be >= 0")
        _check_exponent(self.q)
        object.__setattr__(self, "ks", ks)

    @property
    def kappa(self) -> int:
        return len(self.ks)


def _domain_slice(g: GridFunction, domain) -> slice:
    """Snap a subinterval to grid nodes; widen by one node if the count
    comes out even so Simpson stays applicable."""
    if domain is None:
        i0, i1 = 0, g.n - 1
    else:
        lo, hi = float(domain[0]), float(domain[1])
        tol = 1e-9 * (g.b - g.a)
        if lo < g.a - tol or hi > g.b + tol or hi <= lo:
            raise ParameterError(
                f"domain [{lo}, {hi}] not inside grid [{g.a}, {g.b}]")
        i0 = int(round((lo - g.a) / g.dx))
        i1 = int(round((hi - g.a) / g.dx))
        i0 = max(0, min(i0, g.n - 2))
        i1 = max(i0 + 1, min(i1, g.n - 1))
    if (i1 - i0 + 1) % 2 == 0:
        if i1 < g.n - 1:
            i1 += 1
        elif i0 > 0:
            i0 -= 1
        else:
            raise ParameterError("cannot form an odd-count Simpson subgrid")
    return slice(i0, i1 + 1)


def _lp_of_values(vals: np.ndarray, p: float, dx: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(vals))) if vals.size else 0.0
    if vals.size % 2 == 0:
        raise ParameterError("Simpson quadrature needs an odd node count")
    integral = float(simpson(np.abs(vals) ** p, dx=dx))
    return max(integral, 0.0) ** (1.0 / p)


def lebesgue_norm(g: GridFunction, spec: NormSpec) -> float:
    """(integral |D^j u|^p)^{1/p} over spec.domain; grid max for p = inf."""
    if spec.j > g.max_derivative:
        raise ParameterError(
            f"derivative {spec.j} not available (stack holds {g.max_derivative})")
    sl = _domain_slice(g, spec.domain)
    return _lp_of_values(g.stack[spec.j][sl], float(spec.p), g.dx)


def derivative_product(g: GridFunction, ks) -> np.ndarray:
    """Pointwise product D^{k_1}u * ... * D^{k_kappa}u on the full grid."""
    ks = tuple(ks)
    if max(ks) > g.max_derivative:
        raise ParameterError(
            f"derivative {max(ks)} not available (stack holds {g.max_derivative})")
    v = np.ones(g.n)
    for k in ks:
        v = v * g.stack[k]
    return v


def product_norm(g: GridFunction, spec: ProductSpec) -> float:
    """L^q norm of the derivative product over spec.domain."""
    v = derivative_product(g, spec.ks)
    sl = _domain_slice(g, spec.domain)
    return _lp_of_values(v[sl], float(spec.q), g.dx)


def gagliardo_seminorm(g: GridFunction, s: float, p: float) -> float:
    """Discrete fractional seminorm of order s in L^p.

    Computes (sum_{i != j} |u(x_i)-u(x_j)|^p / |x_i-x_j|^{1+sp} dx^2)^{1/p}
    over cell midpoints of the grid interval padded by one support length
    on each side; u is taken as zero on the padding, which is exact for
    compactly supported samples.  Row blocks keep memory bounded and the
    summation order fixed.
    """
    if not 0.0 < s < 1.0:
        raise ParameterError("s must lie in (0,1)")
    p = _check_exponent(p)
    if math.isinf(p):
        raise ParameterError("p must be finite for the seminorm")
    u = g.stack[0]
    ncell = g.n - 1
    dx = g.dx
    mid_u = 0.5 * (u[1:] + u[:-1])
    # midpoint coordinates of the padded domain: pad | domain | pad
    total_cells = 3 * ncell
    xs = (np.arange(total_cells) + 0.5) * dx
    full_u = np.zeros(total_cells)
    full_u[ncell:2 * ncell] = mid_u
    expo = 1.0 + s * p

    acc_all = 0.0
    acc_mid = 0.0
    block = 1024
    mid_lo, mid_hi = ncell, 2 * ncell
    for start in range(mid_lo, mid_hi, block):
        stop = min(start + block, mid_hi)
        du = np.abs(full_u[start:stop, None] - full_u[None, :]) ** p
        dist = np.abs(xs[start:stop, None] - xs[None, :])
        np.fill_diagonal(dist[:, start:stop], np.inf)
        kern = du / dist ** expo
        acc_all += float(np.sum(kern))
        acc_mid += float(np.sum(kern[:, mid_lo:mid_hi]))
    total = (2.0 * acc_all - acc_mid) * dx * dx
    return max(total, 0.0) ** (1.0 / p)
