"""Balance functions, critical radii, and Besicovitch interval selection.

For a window J = (x-h, x+h) (clipped to the unit interval in bounded mode)
with length l = |J|, the two balance functions are

    alpha_x(h) = l^{kbar - 1/(q kappa)} * ||v||_{L^q(J)}^{1/kappa},
    beta_x(h)  = l^{m - 1/r} * ||D^m u||_{L^r(J)},

where v = D^{k_1}u ... D^{k_kappa}u.  On the set E where both u and v are
nonzero, alpha dominates for small windows and beta for large ones, so the
critical radius r_x (first crossing of alpha - beta) is well defined; the
intervals (x - r_x, x + r_x) satisfy the balance equality exactly, and a
greedy selection covers E with overlap at most 4.

Window integrals use a dyadic segment decomposition of trapezoid cell
sums with quadratic in-cell end pieces, and window maxima use a sparse
table with interpolated endpoints, so alpha and beta are continuous in h
and accurate at the local scale even deep in the support tails; the
bisection then drives the balance residual to machine level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (InvariantError, NoCrossingError, ParameterError,
                     PreconditionError)
from .funcspace import GridFunction
from .norms import INF, derivative_product

#: relative balance equality tolerance per selected interval
BALANCE_TOL = 1e-6
#: relative thresholds defining the working set E
DEFAULT_THRESHOLD = 1e-9
#: geometric scan step for the crossing search
SCAN_FACTOR = 1.05
#: bisection refinement steps after bracketing
BISECT_STEPS = 60
#: scan ceiling, in units of the domain length
HMAX_FACTOR = 10.0


@dataclass(frozen=True)
class BalanceSpec:
    """Orders and exponents feeding alpha and beta, plus the domain mode."""

    ks: tuple
    q: float
    m: int
    r: float
    mode: str = "real-line"

    def __post_init__(self):
        ks = tuple(int(k) for k in self.ks)
        if not ks or list(ks) != sorted(ks) or ks[0] < 0:
            raise ParameterError("ks must be nonempty, sorted, nonnegative")
        if self.m <= ks[-1]:
            raise ParameterError("m must exceed every product order")
        for name, v in (("q", self.q), ("r", self.r)):
            if not (float(v) >= 1.0 or math.isinf(float(v))):
                raise ParameterError(f"{name} must be >= 1 or inf")
        if self.mode not in ("real-line", "bounded"):
            raise ParameterError("mode must be real-line|bounded")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "r", float(self.r))

    @property
    def kappa(self) -> int:
        return len(self.ks)

    @property
    def kbar(self) -> float:
        return sum(self.ks) / self.kappa

    @classmethod
    def from_params(cls, params, mode: str = "real-line") -> "BalanceSpec":
        return cls(params.ks, float(params.q), params.m, float(params.r), mode)


class _SegmentIntegral:
    """Window integrals of a nonnegative integrand, trapezoid between nodes.

    A plain cumulative prefix loses the entire window integral to
    cancellation once the local mass drops below machine epsilon times the
    total (which happens in the flat tails of the bump families).  Here
    each query is assembled from O(log n) dyadic cell-block sums plus the
    two fractional end cells; every addend is nonnegative and of the local
    scale, so the relative error stays at the eps*log^2(n) level of the
    window integral itself.
    """

    def __init__(self, f: np.ndarray, dx: float):
        self.f = f
        self.dx = dx
        cells = 0.5 * (f[1:] + f[:-1]) * dx
        levels = [cells]
        cur = cells
        while cur.size > 1:
            if cur.size & 1:
                cur = np.append(cur, 0.0)
            cur = cur[0::2] + cur[1::2]
            levels.append(cur)
        self.levels = levels

    def _cell_range_sum(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Sum of whole cells with indices in [lo, hi), vectorized."""
        total = np.zeros(lo.shape)
        lo = lo.astype(np.int64).copy()
        hi = hi.astype(np.int64).copy()
        for level in self.levels:
            active = lo < hi
            if not np.any(active):
                break
            m = active & ((lo & 1) == 1)
            if np.any(m):
                total[m] += level[lo[m]]
                lo = np.where(m, lo + 1, lo)
            m2 = (lo < hi) & ((hi & 1) == 1)
            if np.any(m2):
                hi = np.where(m2, hi - 1, hi)
                total[m2] += level[hi[m2]]
            lo >>= 1
            hi >>= 1
        return total

    def __call__(self, lo_pos: np.ndarray, hi_pos: np.ndarray) -> np.ndarray:
        n = self.f.size
        lo = np.clip(lo_pos, 0.0, n - 1.0)
        hi = np.clip(hi_pos, 0.0, n - 1.0)
        hi = np.maximum(hi, lo)
        jl = np.minimum(np.floor(lo).astype(np.int64), n - 2)
        jh = np.minimum(np.floor(hi).astype(np.int64), n - 2)
        f, dx = self.f, self.dx

        def piece(j, a, b):
            fj = f[j]
            df = f[j + 1] - fj
            return dx * (fj * (b - a) + 0.5 * df * (b * b - a * a))

        la = lo - jl
        ha = hi - jh
        out = np.zeros(lo.shape)
        same = jl == jh
        if np.any(same):
            out[same] = piece(jl[same], la[same], ha[same])
        dif = ~same
        if np.any(dif):
            left = piece(jl[dif], la[dif], 1.0)
            right = piece(jh[dif], 0.0, ha[dif])
            mid = self._cell_range_sum(jl[dif] + 1, jh[dif])
            out[dif] = left + mid + right
        return out


class _RangeMax:
    """Sparse-table range maximum with interpolated fractional endpoints."""

    def __init__(self, f: np.ndarray):
        self.f = f
        levels = [f.copy()]
        k = 1
        while 2 * k <= f.size:
            prev = levels[-1]
            levels.append(np.maximum(prev[:-k], prev[k:]))
            k *= 2
        self.levels = levels

    def _node_max(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Max over inclusive node index range [lo, hi]; -inf when empty."""
        out = np.full(lo.shape, -np.inf)
        ok = hi >= lo
        if not np.any(ok):
            return out
        length = hi[ok] - lo[ok] + 1
        k = np.ceil(np.log2(np.maximum(length, 1))).astype(int)
        k = np.maximum(k - 1, 0)
        k = np.minimum(k, len(self.levels) - 1)
        half = 1 << k
        left = np.empty(length.shape)
        right = np.empty(length.shape)
        for kk in np.unique(k):
            m = k == kk
            tbl = self.levels[kk]
            left[m] = tbl[lo[ok][m]]
            right[m] = tbl[hi[ok][m] - (1 << kk) + 1]
        res = np.maximum(left, right)
        # one doubling may be missing when the range is longer than 2*half
        need = length > 2 * half
        if np.any(need):
            mid_lo = lo[ok][need] + half[need]
            mid_hi = hi[ok][need] - half[need]
            res[need] = np.maximum(res[need], self._node_max(mid_lo, mid_hi))
        out[ok] = res
        return out

    def __call__(self, lo_pos: np.ndarray, hi_pos: np.ndarray) -> np.ndarray:
        n = self.f.size
        lo_pos = np.clip(lo_pos, 0.0, n - 1.0)
        hi_pos = np.clip(hi_pos, 0.0, n - 1.0)
        li = np.ceil(lo_pos).astype(int)
        hi_i = np.floor(hi_pos).astype(int)
        inner = self._node_max(li, hi_i)

        def interp(pos):
            i = np.minimum(pos.astype(int), n - 2)
            tau = pos - i
            return self.f[i] * (1 - tau) + self.f[i + 1] * tau

        return np.maximum(inner, np.maximum(interp(lo_pos), interp(hi_pos)))


class BalanceEvaluator:
    """Vectorized alpha/beta over many (x, h) pairs for one grid function."""

    def __init__(self, u: GridFunction, spec: BalanceSpec):
        if max(spec.m, spec.ks[-1]) > u.max_derivative:
            raise ParameterError(
                f"stack holds derivatives to {u.max_derivative}, "
                f"spec needs {max(spec.m, spec.ks[-1])}")
        self.u = u
        self.spec = spec
        self.v = derivative_product(u, spec.ks)
        self.w = np.abs(u.stack[spec.m])
        dx = u.dx
        if math.isinf(spec.q):
            self._v_max = _RangeMax(np.abs(self.v))
            self._v_int = None
        else:
            self._v_int = _SegmentIntegral(np.abs(self.v) ** spec.q, dx)
            self._v_max = None
        if math.isinf(spec.r):
            self._w_max = _RangeMax(self.w)
            self._w_int = None
        else:
            self._w_int = _SegmentIntegral(self.w ** spec.r, dx)
            self._w_max = None

    def _window(self, x, h):
        lo = x - h
        hi = x + h
        if self.spec.mode == "bounded":
            lo = np.maximum(lo, self.u.a)
            hi = np.minimum(hi, self.u.b)
            length = np.maximum(hi - lo, 0.0)
        else:
            length = 2.0 * h
        lo_pos = (lo - self.u.a) / self.u.dx
        hi_pos = (hi - self.u.a) / self.u.dx
        return lo_pos, hi_pos, length

    def alpha(self, x, h):
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        lo, hi, length = self._window(x, h)
        s = self.spec
        if self._v_int is not None:
            integral = self._v_int(lo, hi)
            norm_piece = integral ** (1.0 / (s.q * s.kappa))
            expo = s.kbar - 1.0 / (s.q * s.kappa)
        else:
            norm_piece = self._v_max(lo, hi) ** (1.0 / s.kappa)
            expo = s.kbar
        return length ** expo * norm_piece

    def beta(self, x, h):
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        lo, hi, length = self._window(x, h)
        s = self.spec
        if self._w_int is not None:
            integral = self._w_int(lo, hi)
            norm_piece = integral ** (1.0 / s.r)
            expo = s.m - 1.0 / s.r
        else:
            norm_piece = self._w_max(lo, hi)
            expo = float(s.m)
        return length ** expo * norm_piece

    def working_set(self, stride: int = 1,
                    threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
        """Indices (into the grid) of E = {|u| and |v| above threshold},
        subsampled by stride."""
        u0 = np.abs(self.u.stack[0])
        va = np.abs(self.v)
        mask = (u0 > threshold * u0.max()) & (va > threshold * va.max())
        idx = np.arange(0, self.u.n, stride)
        return idx[mask[idx]]

    def critical_radii(self, xs: np.ndarray,
                       h0: float | None = None,
                       hmax: float | None = None) -> np.ndarray:
        """First crossing of alpha - beta for each x, refined by bisection."""
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return np.zeros(0)
        if h0 is None:
            h0 = 2.0 * self.u.dx
        if hmax is None:
            hmax = HMAX_FACTOR * (self.u.b - self.u.a)

        def sign(h):
            return self.alpha(xs, h) - self.beta(xs, h)

        lo_h = np.full(xs.shape, h0)
        hi_h = np.full(xs.shape, h0)
        diff = sign(np.full(xs.shape, h0))
        # points already past the crossing at the scan floor: walk down
        below = diff <= 0.0
        if np.any(below):
            lo = np.full(xs.shape, h0)
            for _ in range(600):
                lo[below] /= SCAN_FACTOR
                d = self.alpha(xs[below], lo[below]) - self.beta(xs[below], lo[below])
                newly = np.zeros_like(below)
                newly[below] = d > 0.0
                below &= ~newly
                if not np.any(below) or lo[below].max() < 1e-12 * h0:
                    break
            if np.any(below):
                bad = xs[below][0]
                raise NoCrossingError(
                    f"alpha <= beta down to the scan floor at x={bad}; "
                    "hypothesis failure for this function/spec")
            lo_h = lo
            hi_h = np.where(diff <= 0.0, h0 * np.ones_like(lo), lo)
        # points still above: walk up geometrically
        above = diff > 0.0
        h = np.full(xs.shape, h0)
        while np.any(above):
            nxt = h * SCAN_FACTOR
            over = nxt > hmax
            if np.any(above & over):
                bad = xs[above & over][0]
                raise NoCrossingError(
                    f"no balance crossing below h_max={hmax} at x={bad}; "
                    "hypothesis failure for this function/spec")
            d = np.where(above, sign(nxt), 1.0)
            crossed = above & (d <= 0.0)
            lo_h[crossed] = h[crossed]
            hi_h[crossed] = nxt[crossed]
            above &= ~crossed
            h = np.where(above, nxt, h)
        # crossing bracketed in [lo_h, hi_h]: bisect
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo_h + hi_h)
            d = sign(mid)
            take_hi = d <= 0.0
            hi_h = np.where(take_hi, mid, hi_h)
            lo_h = np.where(take_hi, lo_h, mid)
        return 0.5 * (lo_h + hi_h)


def balance_alpha(u: GridFunction, x: float, h: float,
                  spec: BalanceSpec) -> float:
    """alpha_x(h) = |J|^{kbar-1/(q kappa)} ||v||_{L^q(J)}^{1/kappa}."""
    if h <= 0:
        raise ParameterError("h must be positive")
    return float(BalanceEvaluator(u, spec).alpha(np.array([x]), np.array([h]))[0])


def balance_beta(u: GridFunction, x: float, h: float,
                 spec: BalanceSpec) -> float:
    """beta_x(h) = |J|^{m-1/r} ||D^m u||_{L^r(J)}."""
    if h <= 0:
        raise ParameterError("h must be positive")
    return float(BalanceEvaluator(u, spec).beta(np.array([x]), np.array([h]))[0])


def critical_radius(u: GridFunction, x: float, spec: BalanceSpec,
                    threshold: float = DEFAULT_THRESHOLD) -> float:
    """Smallest h with alpha_x(h) = beta_x(h), located by geometric scan
    plus bisection.  Requires x in the working set E."""
    ev = BalanceEvaluator(u, spec)
    if spec.mode == "real-line" and not spec.kbar < spec.m - 1:
        raise ParameterError(
            "real-line mode needs kbar < m-1 for a guaranteed crossing")
    xi = np.array([x], dtype=float)
    pos = (x - u.a) / u.dx
    i = int(round(pos))
    if not (0 <= i < u.n):
        raise ParameterError(f"x={x} outside the grid")
    u0 = np.abs(u.stack[0])
    va = np.abs(ev.v)
    if u0[i] <= threshold * u0.max() or va[i] <= threshold * va.max():
        raise ParameterError(
            f"x={x} is not in the working set E (u or v vanishes there)")
    r = float(ev.critical_radii(xi)[0])
    a = float(ev.alpha(xi, np.array([r]))[0])
    b = float(ev.beta(xi, np.array([r]))[0])
    if abs(a - b) > BALANCE_TOL * max(a, b):
        raise InvariantError(
            f"balance residual {abs(a - b) / max(a, b)} above tolerance")
    return r


def besicovitch_select(centers, radii) -> list:
    """Greedy selection by descending radius, skipping candidates whose
    center is already covered, then a completion sweep.  Returns selected
    indices into the input arrays."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if centers.shape != radii.shape:
        raise ParameterError("centers and radii must have equal length")
    if np.any(radii <= 0):
        raise ParameterError("radii must be positive")
    order = np.lexsort((np.arange(centers.size), -radii))
    sel_lo: list = []
    sel_hi: list = []
    selected: list = []

    def covered(x) -> bool:
        return any(lo < x < hi for lo, hi in zip(sel_lo, sel_hi))

    for idx in order:
        c, r = centers[idx], radii[idx]
        if covered(c):
            continue
        selected.append(int(idx))
        sel_lo.append(c - r)
        sel_hi.append(c + r)
    # completion sweep: every input point must lie in the union
    for idx in order:
        c, r = centers[idx], radii[idx]
        if not covered(c):
            selected.append(int(idx))
            sel_lo.append(c - r)
            sel_hi.append(c + r)
    return selected


def overlap_profile(intervals: np.ndarray, n_probes: int = 10_000) -> int:
    """Maximum number of intervals containing any of n_probes uniform
    probe points spanning the union's hull."""
    intervals = np.asarray(intervals, dtype=float)
    if intervals.size == 0:
        return 0
    lo = intervals[:, 0].min()
    hi = intervals[:, 1].max()
    probes = np.linspace(lo, hi, n_probes)
    counts = ((probes[None, :] > intervals[:, :1])
              & (probes[None, :] < intervals[:, 1:])).sum(axis=0)
    return int(counts.max())


@dataclass
class CoverReport:
    """Besicovitch cover of the working set with its verification data."""

    centers: np.ndarray
    radii: np.ndarray
    intervals: np.ndarray
    max_overlap: int
    deficit_cells: int
    deficit_measure: float
    balance_residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.centers.size and np.any(self.radii <= 0):
            raise InvariantError("selected radii must be positive")
        if self.max_overlap > 4:
            raise InvariantError(
                f"overlap {self.max_overlap} exceeds the Besicovitch bound 4")
        if self.balance_residuals.size and \
                float(np.max(self.balance_residuals)) > BALANCE_TOL:
            raise InvariantError("balance residual above tolerance")

    def to_dict(self) -> dict:
        meta = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.meta.items()}
        return {"centers": self.centers.tolist(),
                "radii": self.radii.tolist(),
                "intervals": self.intervals.tolist(),
                "max_overlap": self.max_overlap,
                "deficit_cells": self.deficit_cells,
                "deficit_measure": self.deficit_measure,
                "balance_residuals": self.balance_residuals.tolist(),
                "meta": meta}

    def csv_rows(self) -> list:
        ev = self.meta.get("alpha_beta")
        rows = []
        for i in range(self.centers.size):
            a, b = (ev[i] if ev is not None else (None, None))
            rows.append((self.centers[i], self.radii[i], a, b,
                         self.balance_residuals[i]))
        return rows


def build_cover(u: GridFunction, spec: BalanceSpec,
                e_resolution: int | None = None,
                threshold: float = DEFAULT_THRESHOLD) -> CoverReport:
    """Full pipeline: working set, critical radii, greedy selection,
    and the three verification passes.

    The working set is discretized on the function's own grid; when
    e_resolution is coarser than the grid, centers are taken on a strided
    subgrid but the coverage deficit is always measured against the full
    grid, so refining e_resolution can only help coverage.
    """
    if spec.mode == "real-line" and not spec.kbar < spec.m - 1:
        raise ParameterError(
            "real-line mode needs kbar < m-1; the boundary case reduces to "
            "a single-norm inequality and is rejected here")
    ev = BalanceEvaluator(u, spec)
    if e_resolution is None:
        e_resolution = u.n
    if e_resolution < 2 or e_resolution > u.n:
        raise ParameterError("e_resolution must be in [2, grid size]")
    stride = max(1, round((u.n - 1) / (e_resolution - 1)))
    idx = ev.working_set(stride=stride, threshold=threshold)
    grid = u.grid
    if idx.size == 0:
        return CoverReport(np.zeros(0), np.zeros(0), np.zeros((0, 2)), 0, 0,
                           0.0, np.zeros(0),
                           meta={"mode": spec.mode, "threshold": threshold,
                                 "e_resolution": e_resolution, "n": u.n})
    xs = grid[idx]
    radii = ev.critical_radii(xs)
    selected = besicovitch_select(xs, radii)
    centers = xs[selected]
    rs = radii[selected]
    intervals = np.stack([centers - rs, centers + rs], axis=1)

    alphas = ev.alpha(centers, rs)
    betas = ev.beta(centers, rs)
    residuals = np.abs(alphas - betas) / np.maximum(
        np.maximum(alphas, betas), 1e-300)

    max_overlap = overlap_profile(intervals)

    full_idx = ev.working_set(stride=1, threshold=threshold)
    ref = grid[full_idx]
    covered = np.zeros(ref.shape, dtype=bool)
    for lo, hi in intervals:
        covered |= (ref > lo) & (ref < hi)
    deficit = int(np.count_nonzero(~covered))

    return CoverReport(
        centers=centers, radii=rs, intervals=intervals,
        max_overlap=max_overlap, deficit_cells=deficit,
        deficit_measure=deficit * u.dx,
        balance_residuals=residuals,
        meta={"mode": spec.mode, "threshold": threshold,
              "e_resolution": e_resolution, "n": u.n,
              "alpha_beta": np.stack([alphas, betas], axis=1)})
