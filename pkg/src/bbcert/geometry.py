"""Parameter-space calculus: regions, splits, emptiness, box partitioning.

Regions are subsets of the parameter space described by affine (and, for
mixed-integer QP dominance boundaries, quadratic) inequalities ``g(theta) <= 0``.
All objects in this module are immutable after construction and safe to share
across worker processes.

The feasibility subproblems here are tiny dense LPs that sit on the hot path
of the certification engines, so they are solved by a compact built-in simplex
with a scipy fallback for pathological cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

# Constraint satisfaction tolerance: theta belongs to a region iff every
# constraint evaluates <= TOL_FEAS.
TOL_FEAS = 1e-9
# Tolerance for value-function comparisons.
TOL_VALUE = 1e-8
# Samples closer than this to a region boundary are treated as boundary points.
BOUNDARY_MARGIN = 1e-7

_STATUS_SOBOL_POINTS = 1024
_STATUS_SOBOL_SEED = 20240601
_MAX_CACHED_POINTS = 16

_LP_BIG_M = 1e7
_LP_TOL = 1e-9


class GeometryError(ValueError):
    pass


class RegionStatus(Enum):
    EMPTY = "empty"
    NONEMPTY = "nonempty"
    UNDECIDED = "undecided"


class AffineFunction:
    """coeffs . theta + offset"""

    __slots__ = ("coeffs", "offset")

    def __init__(self, coeffs: np.ndarray, offset: float):
        self.coeffs = coeffs
        self.offset = offset

    @staticmethod
    def make(coeffs, offset) -> "AffineFunction":
        return AffineFunction(np.array(coeffs, dtype=float).reshape(-1),
                              float(offset))

    @staticmethod
    def constant(value: float, dim: int) -> "AffineFunction":
        return AffineFunction(np.zeros(dim), float(value))

    @property
    def coeff_array(self) -> np.ndarray:
        return self.coeffs

    def key(self) -> tuple:
        return (self.coeffs.tobytes(), self.offset)

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != len(self.coeffs):
            raise GeometryError(
                f"theta has dim {theta.shape[-1]}, function expects {len(self.coeffs)}"
            )
        return float(theta @ self.coeffs + self.offset)

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        return thetas @ self.coeffs + self.offset

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol) and abs(self.offset) <= tol)

    def __neg__(self) -> "AffineFunction":
        return AffineFunction(-self.coeffs, -self.offset)

    def __sub__(self, other: "AffineFunction") -> "AffineFunction":
        return AffineFunction(self.coeffs - other.coeffs,
                              self.offset - other.offset)

    def __repr__(self) -> str:
        return f"AffineFunction({self.coeffs.tolist()}, {self.offset})"


class QuadraticFunction:
    """theta' Q theta + coeffs . theta + offset, Q symmetrized on construction."""

    __slots__ = ("quad", "coeffs", "offset")

    def __init__(self, quad: np.ndarray, coeffs: np.ndarray, offset: float):
        self.quad = quad
        self.coeffs = coeffs
        self.offset = offset

    @staticmethod
    def make(quad, coeffs, offset) -> "QuadraticFunction":
        q = np.array(quad, dtype=float)
        q = 0.5 * (q + q.T)
        return QuadraticFunction(q, np.array(coeffs, dtype=float).reshape(-1),
                                 float(offset))

    @property
    def quad_array(self) -> np.ndarray:
        return self.quad

    @property
    def coeff_array(self) -> np.ndarray:
        return self.coeffs

    def key(self) -> tuple:
        return (self.quad.tobytes(), self.coeffs.tobytes(), self.offset)

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.quad @ theta + theta @ self.coeffs + self.offset)

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        return (np.einsum("ij,jk,ik->i", thetas, self.quad, thetas)
                + thetas @ self.coeffs + self.offset)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.quad) <= tol)
                    and np.all(np.abs(self.coeffs) <= tol)
                    and abs(self.offset) <= tol)

    def affine_part(self) -> AffineFunction:
        return AffineFunction(self.coeffs.copy(), self.offset)

    def is_affine(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.quad) <= tol))

    def __neg__(self) -> "QuadraticFunction":
        return QuadraticFunction(-self.quad, -self.coeffs, -self.offset)

    def __repr__(self) -> str:
        return (f"QuadraticFunction({self.quad.tolist()}, "
                f"{self.coeffs.tolist()}, {self.offset})")


@dataclass(frozen=True)
class ValueFunction:
    """Affine, quadratic or +/-infinite function of theta.

    PlusInfinity encodes the value of an infeasible relaxation; MinusInfinity
    an unbounded one.
    """

    kind: str  # 'affine' | 'quadratic' | '+inf' | '-inf'
    payload: object = None

    @staticmethod
    def affine(f: AffineFunction) -> "ValueFunction":
        return ValueFunction("affine", f)

    @staticmethod
    def quadratic(q: QuadraticFunction) -> "ValueFunction":
        return ValueFunction("quadratic", q)

    @staticmethod
    def plus_infinity() -> "ValueFunction":
        return ValueFunction("+inf")

    @staticmethod
    def minus_infinity() -> "ValueFunction":
        return ValueFunction("-inf")

    @property
    def is_plus_inf(self) -> bool:
        return self.kind == "+inf"

    @property
    def is_minus_inf(self) -> bool:
        return self.kind == "-inf"

    @property
    def is_finite(self) -> bool:
        return self.kind in ("affine", "quadratic")

    def __call__(self, theta) -> float:
        if self.kind == "+inf":
            return math.inf
        if self.kind == "-inf":
            return -math.inf
        return self.payload(theta)

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        if self.kind == "+inf":
            return np.full(len(thetas), np.inf)
        if self.kind == "-inf":
            return np.full(len(thetas), -np.inf)
        return self.payload.eval_many(thetas)

    def difference(self, other: "ValueFunction"):
        """self - other for two finite value functions.

        Returns an AffineFunction when both are affine, else a QuadraticFunction.
        """
        if not (self.is_finite and other.is_finite):
            raise GeometryError("difference requires finite value functions")
        if self.kind == "affine" and other.kind == "affine":
            return self.payload - other.payload
        a = _as_quadratic(self)
        b = _as_quadratic(other)
        return QuadraticFunction(a.quad - b.quad, a.coeffs - b.coeffs,
                                 a.offset - b.offset)


def _as_quadratic(vf: ValueFunction) -> QuadraticFunction:
    if vf.kind == "quadratic":
        return vf.payload
    f = vf.payload
    dim = len(f.coeffs)
    return QuadraticFunction(np.zeros((dim, dim)), f.coeffs, f.offset)


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    @staticmethod
    def make(lower, upper) -> "Box":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise GeometryError("box lower bound exceeds upper bound")
        return Box(tuple(lo.tolist()), tuple(hi.tolist()))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, theta, tol: float = TOL_FEAS) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower_array - tol)
                    and np.all(theta <= self.upper_array + tol))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower_array + self.upper_array)

    def split(self, axis: int) -> tuple:
        mid = 0.5 * (self.lower[axis] + self.upper[axis])
        lo1, hi1 = list(self.lower), list(self.upper)
        lo2, hi2 = list(self.lower), list(self.upper)
        hi1[axis] = mid
        lo2[axis] = mid
        return Box(tuple(lo1), tuple(hi1)), Box(tuple(lo2), tuple(hi2))


def sobol_points(box: Box, n: int, seed: int) -> np.ndarray:
    """Deterministic low-discrepancy samples inside the box."""
    sampler = qmc.Sobol(d=box.dim, scramble=True, seed=seed)
    unit = sampler.random(n)
    return box.lower_array + unit * box.widths


# ---------------------------------------------------------------------------
# compact dense LP: min c.x  s.t.  A x <= b, x free
# ---------------------------------------------------------------------------

def dense_lp_min(c: np.ndarray, A: np.ndarray, b: np.ndarray):
    """Small dense LP solver (big-M simplex on split variables).

    Returns (status, x, objective) with status in
    {'optimal', 'infeasible', 'unbounded'}. Falls back to scipy on a
    numerical failure.
    """
    try:
        return _dense_lp_min_core(c, A, b)
    except GeometryError:
        return _dense_lp_scipy(c, A, b)


def _dense_lp_scipy(c, A, b):
    from scipy.optimize import linprog
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * len(c),
                  method="highs")
    if res.status == 0:
        return "optimal", res.x, float(res.fun)
    if res.status == 2:
        return "infeasible", None, math.inf
    if res.status == 3:
        return "unbounded", None, -math.inf
    raise GeometryError(f"LP solver failed with status {res.status}")


def _dense_lp_min_core(c: np.ndarray, A: np.ndarray, b: np.ndarray):
    k, n = A.shape
    ncols = 2 * n + k + 1
    art = ncols - 1
    T = np.empty((k, ncols + 1))
    T[:, :n] = A
    T[:, n:2 * n] = -A
    T[:, 2 * n:2 * n + k] = np.eye(k)
    T[:, art] = -1.0
    T[:, -1] = b
    r = np.zeros(ncols)
    r[:n] = c
    r[n:2 * n] = -c
    r[art] = _LP_BIG_M
    basis = list(range(2 * n, 2 * n + k))
    basic_pos = np.full(ncols, -1, dtype=int)
    for i, col in enumerate(basis):
        basic_pos[col] = i

    def pivot(row, col):
        piv = T[row, col]
        if abs(piv) < 1e-13:
            raise GeometryError("singular pivot in dense LP")
        prow = T[row] / piv
        cv = T[:, col].copy()
        T[:] = T - np.outer(cv, prow)
        T[row] = prow
        r[:] = r - r[col] * prow[:ncols]
        r[col] = 0.0
        basic_pos[basis[row]] = -1
        basis[row] = col
        basic_pos[col] = row

    w = int(np.argmin(T[:, -1]))
    if T[w, -1] < 0.0:
        pivot(w, art)
    cap = 200 * (k + n + 10)
    bland_at = cap // 2
    for it in range(cap):
        if it >= bland_at:
            negs = np.flatnonzero(r < -_LP_TOL)
            if not len(negs):
                break
            q = int(negs[0])
        else:
            q = int(np.argmin(r))
            if r[q] >= -_LP_TOL:
                break
        d = T[:, q]
        rows = np.flatnonzero(d > _LP_TOL)
        if not len(rows):
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, -1] > math.sqrt(_LP_TOL):
                return "infeasible", None, math.inf
            return "unbounded", None, -math.inf
        ratios = T[rows, -1] / d[rows]
        pivot(int(rows[int(np.argmin(ratios))]), q)
    else:
        raise GeometryError("dense LP iteration cap exceeded")
    pos_a = basic_pos[art]
    if pos_a >= 0 and T[pos_a, -1] > math.sqrt(_LP_TOL):
        return "infeasible", None, math.inf
    x = np.zeros(n)
    xb = T[:, -1]
    for j in range(n):
        pu, pv = basic_pos[j], basic_pos[n + j]
        v = 0.0
        if pu >= 0:
            v += xb[pu]
        if pv >= 0:
            v -= xb[pv]
        x[j] = v
    return "optimal", x, float(c @ x)


def _tighten_box(box: Box, A: np.ndarray, d: np.ndarray,
                 passes: int = 2) -> Optional[Box]:
    """Shrink a bounding box by interval propagation over affine rows.

    Sound overapproximation of {A theta + d <= 0} intersected with the box;
    returns None when the propagation proves emptiness.
    """
    lo = box.lower_array.copy()
    hi = box.upper_array.copy()
    if len(d) == 0:
        return box
    nz_mask = A != 0.0
    degenerate = ~nz_mask.any(axis=1)
    if np.any(degenerate) and np.any(d[degenerate] > TOL_FEAS):
        return None
    pos = A > 0.0
    neg = A < 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(passes):
            c_lo = np.minimum(A * lo, A * hi)
            other_min = c_lo.sum(axis=1, keepdims=True) - c_lo
            bound = (-d[:, None] - other_min) / A
            new_hi = np.min(np.where(pos, bound, np.inf), axis=0)
            new_lo = np.max(np.where(neg, bound, -np.inf), axis=0)
            changed = False
            upd = new_hi < hi
            if np.any(upd):
                hi[upd] = new_hi[upd]
                changed = True
            upd = new_lo > lo
            if np.any(upd):
                lo[upd] = new_lo[upd]
                changed = True
            if np.any(lo > hi + 1e-12):
                return None
            if not changed:
                break
    # propagation can leave a sub-tolerance inversion; normalize it
    lo2 = np.minimum(lo, hi)
    hi2 = np.maximum(lo, hi)
    return Box(tuple(lo2.tolist()), tuple(hi2.tolist()))


class Region:
    """Intersection of affine and quadratic <=0 constraints inside an outer box.

    Affine constraints are stored stacked as ``A theta + d <= 0``. Instances are
    immutable by convention; the feasibility status, a witness point and a small
    cache of interior points are memoised lazily. The outer box is tightened by
    interval propagation on every refinement.
    """

    __slots__ = ("A", "d", "quadratics", "dim", "outer_box",
                 "_status", "_witness", "_points")

    def __init__(self, A: np.ndarray, d: np.ndarray,
                 quadratics: tuple = (), outer_box: Optional[Box] = None,
                 dim: Optional[int] = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = np.asarray(d, dtype=float).reshape(-1)
        if A.size == 0:
            if dim is None and outer_box is not None:
                dim = outer_box.dim
            A = np.zeros((0, dim))
        if A.shape[0] != d.shape[0]:
            raise GeometryError("constraint matrix/offset size mismatch")
        self.A = A
        self.d = d
        self.quadratics = tuple(quadratics)
        self.dim = A.shape[1]
        self.outer_box = outer_box
        self._status: Optional[RegionStatus] = None
        self._witness: Optional[np.ndarray] = None
        self._points: Optional[np.ndarray] = None

    # -- construction -----------------------------------------------------

    @staticmethod
    def from_box(box: Box) -> "Region":
        n = box.dim
        A = np.vstack([np.eye(n), -np.eye(n)])
        d = np.concatenate([-box.upper_array, box.lower_array])
        r = Region(A, d, outer_box=box)
        r._status = RegionStatus.NONEMPTY
        r._witness = box.center()
        return r

    @staticmethod
    def from_constraints(affine: Sequence[AffineFunction],
                         quadratics: Sequence[QuadraticFunction] = (),
                         dim: Optional[int] = None,
                         outer_box: Optional[Box] = None) -> "Region":
        if affine:
            A = np.vstack([f.coeffs for f in affine])
            d = np.array([f.offset for f in affine])
        else:
            if dim is None:
                raise GeometryError("dimension required for empty constraint list")
            A = np.zeros((0, dim))
            d = np.zeros(0)
        return Region(A, d, tuple(quadratics), outer_box=outer_box, dim=dim)

    def with_rows(self, A2: np.ndarray, d2: np.ndarray,
                  inherit_points: bool = True) -> "Region":
        A2 = np.atleast_2d(np.asarray(A2, dtype=float))
        d2 = np.asarray(d2, dtype=float).reshape(-1)
        box = self.outer_box
        if box is not None:
            box = _tighten_box(box, A2, d2)
        A_all = np.vstack([self.A, A2])
        d_all = np.concatenate([self.d, d2])
        if box is not None and len(d_all) > 48:
            # rows inactive over the tightened box are implied by its bound
            # rows, which are appended to keep the represented set unchanged
            _, hi = affine_ranges(A_all, d_all, box)
            keep = hi >= -1e-12
            if not keep.all():
                n = box.dim
                eye = np.eye(n)
                A_all = np.vstack([A_all[keep], eye, -eye])
                d_all = np.concatenate([d_all[keep], -box.upper_array,
                                        box.lower_array])
                dd = _dedup_mask(A_all, d_all)
                A_all = A_all[dd]
                d_all = d_all[dd]
        r = Region(A_all, d_all, self.quadratics,
                   outer_box=box if box is not None else self.outer_box)
        if box is None:
            r._status = RegionStatus.EMPTY
            return r
        if inherit_points:
            r._inherit_points_from(self, A2, d2)
        return r

    def with_affine(self, g: AffineFunction) -> "Region":
        return self.with_rows(g.coeffs[None, :], np.array([g.offset]))

    def with_quadratic(self, q: QuadraticFunction) -> "Region":
        r = Region(self.A, self.d, self.quadratics + (q,), outer_box=self.outer_box)
        pts = self._candidate_points()
        if pts is not None and len(pts):
            keep = q.eval_many(pts) <= -BOUNDARY_MARGIN
            if np.any(keep):
                r._points = pts[keep][:_MAX_CACHED_POINTS]
                r._status = RegionStatus.NONEMPTY
                r._witness = r._points[0]
        return r

    def _inherit_points_from(self, parent: "Region", A2, d2) -> None:
        pts = parent._candidate_points()
        if pts is None or not len(pts):
            return
        margins = pts @ A2.T + d2
        keep = np.all(margins <= -BOUNDARY_MARGIN, axis=1)
        if np.any(keep):
            self._points = pts[keep][:_MAX_CACHED_POINTS]
            self._status = RegionStatus.NONEMPTY
            self._witness = self._points[0]

    def _candidate_points(self) -> Optional[np.ndarray]:
        if self._points is not None:
            return self._points
        if self._witness is not None:
            return self._witness[None, :]
        return None

    # -- queries -----------------------------------------------------------

    @property
    def affine_constraints(self) -> list:
        return [AffineFunction(self.A[k].copy(), float(self.d[k]))
                for k in range(len(self.d))]

    @property
    def quadratic_constraints(self) -> list:
        return list(self.quadratics)

    @property
    def ambient_dim(self) -> int:
        return self.dim

    def margin(self, theta) -> float:
        """Max constraint value at theta (<= 0 means inside)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise GeometryError(
                f"theta has shape {theta.shape}, region has dim {self.dim}"
            )
        vals = self.A @ theta + self.d if len(self.d) else np.array([-np.inf])
        m = float(np.max(vals))
        for q in self.quadratics:
            m = max(m, q(theta))
        return m

    def margins_many(self, thetas: np.ndarray) -> np.ndarray:
        if len(self.d):
            m = np.max(thetas @ self.A.T + self.d, axis=1)
        else:
            m = np.full(len(thetas), -np.inf)
        for q in self.quadratics:
            m = np.maximum(m, q.eval_many(thetas))
        return m

    def contains(self, theta, tol: float = TOL_FEAS) -> bool:
        return self.margin(theta) <= tol

    def witness(self) -> Optional[np.ndarray]:
        if self._witness is None:
            region_status(self)
        return self._witness

    def fingerprint(self) -> bytes:
        parts = [self.A.tobytes(), self.d.tobytes()]
        for q in self.quadratics:
            parts.append(q.quad.tobytes())
            parts.append(q.coeffs.tobytes())
            parts.append(np.float64(q.offset).tobytes())
        return b"|".join(parts)

    def __repr__(self) -> str:
        return (f"Region(dim={self.dim}, affine={len(self.d)}, "
                f"quadratic={len(self.quadratics)})")


# -- membership / status ----------------------------------------------------

def region_contains(region: Region, theta, tol: float = TOL_FEAS) -> bool:
    return region.contains(theta, tol)


def _affine_chebyshev(region: Region):
    """Max absolute slack t with A theta + d + t <= 0. Returns (t, theta)."""
    n = region.dim
    k = len(region.d)
    if k == 0:
        c0 = region.outer_box.center() if region.outer_box else np.zeros(n)
        return math.inf, c0
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([region.A, np.ones((k, 1))])
    status, x, _ = dense_lp_min(c, A_ub, -region.d)
    if status == "unbounded":
        # region unbounded with interior; grab any feasible point
        status, x, _ = dense_lp_min(np.zeros(n + 1), A_ub, -region.d)
        if status != "optimal":
            raise GeometryError("feasibility LP failed")
        return math.inf, x[:n]
    if status != "optimal":
        raise GeometryError(f"feasibility LP returned {status}")
    return float(x[-1]), x[:n]


def _affine_bounding_box(region: Region) -> Box:
    """Tight per-axis bounds of the affine part (2 * dim LPs)."""
    lo = np.empty(region.dim)
    hi = np.empty(region.dim)
    for i in range(region.dim):
        c = np.zeros(region.dim)
        c[i] = 1.0
        s1, x1, v1 = dense_lp_min(c, region.A, -region.d)
        s2, x2, v2 = dense_lp_min(-c, region.A, -region.d)
        if s1 != "optimal" or s2 != "optimal":
            raise GeometryError("bounding-box LP failed")
        lo[i], hi[i] = v1, -v2
    return Box.make(np.minimum(lo, hi), np.maximum(lo, hi))


def _quadratic_local_search(region: Region, start: np.ndarray) -> Optional[np.ndarray]:
    from scipy.optimize import minimize

    def violation(theta):
        v = 0.0
        if len(region.d):
            m = region.A @ theta + region.d
            v += float(np.sum(np.maximum(m, 0.0) ** 2))
        for q in region.quadratics:
            v += max(q(theta), 0.0) ** 2
        return v

    res = minimize(violation, start, method="Nelder-Mead",
                   options={"maxiter": 400, "xatol": 1e-12, "fatol": 1e-18})
    if res.x is not None and region.margin(res.x) <= TOL_FEAS:
        return np.asarray(res.x, dtype=float)
    return None


def region_status(region: Region) -> RegionStatus:
    """Tri-state feasibility: exact for affine-only regions.

    With quadratic constraints a witness is searched via the affine Chebyshev
    center, a penalised local search, and deterministic low-discrepancy
    sampling; emptiness is only certified when the affine part is empty or a
    quadratic constraint is provably positive over the affine bounding box.
    """
    if region._status is not None:
        return region._status
    t, theta = _affine_chebyshev(region)
    if t < -TOL_FEAS:
        region._status = RegionStatus.EMPTY
        return region._status
    if not region.quadratics:
        region._status = RegionStatus.NONEMPTY
        region._witness = theta
        if t > BOUNDARY_MARGIN:
            if region._points is None:
                region._points = theta[None, :]
            elif len(region._points) < _MAX_CACHED_POINTS:
                region._points = np.vstack([region._points, theta])
        return region._status
    # quadratic constraints present: (a) affine center as witness
    if region.margin(theta) <= TOL_FEAS:
        region._status = RegionStatus.NONEMPTY
        region._witness = theta
        return region._status
    # (b) penalised local search from the affine center
    found = _quadratic_local_search(region, theta)
    if found is not None:
        region._status = RegionStatus.NONEMPTY
        region._witness = found
        return region._status
    # (c) low-discrepancy sampling over the affine bounding box
    bbox = _affine_bounding_box(region)
    pts = sobol_points(bbox, _STATUS_SOBOL_POINTS, _STATUS_SOBOL_SEED)
    margins = region.margins_many(pts)
    idx = int(np.argmin(margins))
    if margins[idx] <= TOL_FEAS:
        region._status = RegionStatus.NONEMPTY
        region._witness = pts[idx]
        return region._status
    # emptiness proof: some quadratic provably > 0 over the bounding box
    for q in region.quadratics:
        lo, _ = quadratic_range(q, bbox)
        if lo > TOL_FEAS:
            region._status = RegionStatus.EMPTY
            return region._status
    region._status = RegionStatus.UNDECIDED
    return region._status


# -- interval bounds ---------------------------------------------------------

def affine_range(f: AffineFunction, box: Box) -> tuple:
    c = f.coeffs
    center = box.center()
    half = 0.5 * box.widths
    mid = float(c @ center + f.offset)
    rad = float(np.abs(c) @ half)
    return mid - rad, mid + rad


def affine_ranges(coeffs: np.ndarray, offsets: np.ndarray, box: Box):
    """Vectorized interval bounds for rows of (coeffs, offsets) over the box."""
    center = box.center()
    half = 0.5 * box.widths
    mid = coeffs @ center + offsets
    rad = np.abs(coeffs) @ half
    return mid - rad, mid + rad


def quadratic_range(q: QuadraticFunction, box: Box) -> tuple:
    lo = box.lower_array
    hi = box.upper_array
    Q = q.quad
    n = box.dim
    tot_lo = tot_hi = q.offset
    c = q.coeffs
    for i in range(n):
        a, b = c[i] * lo[i], c[i] * hi[i]
        tot_lo += min(a, b)
        tot_hi += max(a, b)
    for i in range(n):
        for j in range(n):
            w = Q[i, j]
            if w == 0.0:
                continue
            if i == j:
                sq_hi = max(lo[i] ** 2, hi[i] ** 2)
                sq_lo = 0.0 if lo[i] <= 0.0 <= hi[i] else min(lo[i] ** 2, hi[i] ** 2)
                a, b = w * sq_lo, w * sq_hi
            else:
                prods = [lo[i] * lo[j], lo[i] * hi[j], hi[i] * lo[j], hi[i] * hi[j]]
                a, b = w * min(prods), w * max(prods)
            tot_lo += min(a, b)
            tot_hi += max(a, b)
    return float(tot_lo), float(tot_hi)


# -- splits ------------------------------------------------------------------

def region_split_affine(region: Region, g: AffineFunction) -> tuple:
    """(region & {g <= 0}, region & {-g <= 0}); closed siblings sharing the boundary."""
    if g.is_zero():
        raise GeometryError("cannot split by the identically-zero function")
    return region.with_affine(g), region.with_affine(-g)


def region_split_quadratic(region: Region, q: QuadraticFunction) -> tuple:
    if q.is_zero():
        raise GeometryError("cannot split by the identically-zero function")
    if q.is_affine():
        return region_split_affine(region, q.affine_part())
    return region.with_quadratic(q), region.with_quadratic(-q)


# -- pointwise minimum of value functions ------------------------------------

def minimum_with_winners(region: Region, a: ValueFunction, b: ValueFunction):
    """Cover the region with subregions annotated (region, min, winner 0|1).

    winner 0 means ``a`` attains the minimum on that subregion.  PlusInfinity
    always loses; two MinusInfinity arguments are rejected.
    """
    if a.is_minus_inf and b.is_minus_inf:
        raise GeometryError("minimum of two unbounded-below value functions")
    if a.is_minus_inf:
        return [(region, a, 0)]
    if b.is_minus_inf:
        return [(region, b, 1)]
    if a.is_plus_inf and b.is_plus_inf:
        return [(region, a, 0)]
    if a.is_plus_inf:
        return [(region, b, 1)]
    if b.is_plus_inf:
        return [(region, a, 0)]

    diff = a.difference(b)  # affine or quadratic
    box = region.outer_box
    if isinstance(diff, AffineFunction):
        if diff.is_zero():
            return [(region, a, 0)]
        if box is not None:
            lo, hi = affine_range(diff, box)
            if hi <= 0.0:
                return [(region, a, 0)]
            if lo >= 0.0:
                return [(region, b, 1)]
        side_a, side_b = region_split_affine(region, diff)
    else:
        if diff.is_zero():
            return [(region, a, 0)]
        if box is not None:
            lo, hi = quadratic_range(diff, box)
            if hi <= 0.0:
                return [(region, a, 0)]
            if lo >= 0.0:
                return [(region, b, 1)]
        side_a, side_b = region_split_quadratic(region, diff)

    out = []
    if region_status(side_a) != RegionStatus.EMPTY:
        out.append((side_a, a, 0))
    if region_status(side_b) != RegionStatus.EMPTY:
        out.append((side_b, b, 1))
    if not out:
        # numerically thin region: keep the parent annotated with a
        out.append((region, a, 0))
    return out


def minimum_of_value_functions(region: Region, a: ValueFunction, b: ValueFunction):
    return [(r, vf) for (r, vf, _w) in minimum_with_winners(region, a, b)]


# -- argmin / first-positive partitions (engine split primitives) -------------

def _dedup_mask(coeffs: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """False for rows that exactly duplicate an earlier row."""
    seen = set()
    keep = np.ones(len(offsets), dtype=bool)
    for i in range(len(offsets)):
        key = (coeffs[i].tobytes(), offsets[i])
        if key in seen:
            keep[i] = False
        else:
            seen.add(key)
    return keep


def argmin_partition(region: Region, funcs: Sequence[AffineFunction],
                     tol: float = 0.0):
    """Partition by the lowest-index function within tol of the pointwise min.

    The winner-i cell is {f_j - f_i >= tol for j < i} & {f_i - f_j <= tol for
    j > i}: cells tile the region with measure-zero overlaps and mirror a
    scanner that collects candidates within tol of the minimum and picks the
    lowest index. Empty subregions are dropped; if a single candidate survives
    the parent region object is returned unchanged.
    """
    if not funcs:
        raise GeometryError("argmin of no functions")
    k = len(funcs)
    coeffs = np.vstack([f.coeffs for f in funcs])
    offsets = np.array([f.offset for f in funcs])
    keep = _dedup_mask(coeffs, offsets)
    box = region.outer_box
    if box is not None:
        # stage 1: per-function ranges (loose but cheap)
        lo, hi = affine_ranges(coeffs, offsets, box)
        stage1 = []
        for i in range(k):
            if not keep[i]:
                continue
            if np.any(hi[:i] - lo[i] < tol) or np.any(lo[i] - hi[i + 1:] > tol):
                continue
            stage1.append(i)
        if len(stage1) > 1:
            # stage 2: pairwise difference ranges over the survivors
            idx = np.array(stage1)
            center = box.center()
            half = 0.5 * box.widths
            mid = coeffs[idx] @ center + offsets[idx]
            dmid = mid[:, None] - mid[None, :]
            drad = np.abs(coeffs[idx][:, None, :] - coeffs[idx][None, :, :]) @ half
            d_lo = dmid - drad
            d_hi = dmid + drad
            viable = []
            for a, i in enumerate(stage1):
                if np.any(d_hi[:a, a] < tol) or np.any(d_lo[a, a + 1:] > tol):
                    continue
                viable.append(i)
        else:
            viable = stage1
    else:
        viable = [i for i in range(k) if keep[i]]
    if not viable:
        raise GeometryError("argmin candidate pruning eliminated every function")
    if len(viable) == 1:
        return [(viable[0], region)]

    pts = region._candidate_points()
    winner_at_point = {}
    if pts is not None and len(pts):
        vals = pts @ coeffs.T + offsets
        band = vals <= vals.min(axis=1, keepdims=True) + tol
        winners = band.argmax(axis=1)
        for prow, w in enumerate(winners):
            w = int(w)
            if w in viable:
                winner_at_point.setdefault(w, prow)

    others_all = [j for j in range(k) if keep[j]]
    out = []
    for i in viable:
        rows = []
        offs = []
        for j in others_all:
            if j == i:
                continue
            if j < i:
                # f_j - f_i >= tol
                rows.append(coeffs[i] - coeffs[j])
                offs.append(offsets[i] - offsets[j] + tol)
            else:
                # f_i - f_j <= tol
                rows.append(coeffs[i] - coeffs[j])
                offs.append(offsets[i] - offsets[j] - tol)
        child = region.with_rows(np.vstack(rows), np.array(offs))
        if child._status is None and i in winner_at_point:
            p = pts[winner_at_point[i]]
            if child.margin(p) <= -BOUNDARY_MARGIN:
                child._status = RegionStatus.NONEMPTY
                child._witness = p
        if region_status(child) != RegionStatus.EMPTY:
            out.append((i, child))
    if len(out) == 1:
        return [(out[0][0], region)]
    if not out:
        # all candidates collapsed numerically; fall back to the first viable
        return [(viable[0], region)]
    return out


def first_positive_partition(region: Region, funcs: Sequence[AffineFunction],
                             tol: float = 0.0):
    """Partition by the first function exceeding tol (scan order).

    Returns [(index_or_None, subregion)]; None marks the subregion where no
    function exceeds tol, emitted first so that boundary lookups resolve to
    the non-positive branch (values at the threshold do not count).
    """
    k = len(funcs)
    coeffs = np.vstack([f.coeffs for f in funcs])
    offsets = np.array([f.offset for f in funcs])
    keep = _dedup_mask(coeffs, offsets)
    box = region.outer_box
    if box is not None:
        lo, hi = affine_ranges(coeffs, offsets, box)
    else:
        lo = np.full(k, -math.inf)
        hi = np.full(k, math.inf)
    can_pos = [i for i in range(k) if hi[i] > tol and keep[i]]
    if not can_pos:
        return [(None, region)]
    stop = None
    for i in can_pos:
        if lo[i] > tol:
            stop = i
            break
    candidates = [i for i in can_pos if stop is None or i <= stop]

    pts = region._candidate_points()
    out = []

    def claim(child):
        if pts is not None and len(pts) and child._status is None:
            for p in pts:
                if child.margin(p) <= -BOUNDARY_MARGIN:
                    child._status = RegionStatus.NONEMPTY
                    child._witness = np.asarray(p, dtype=float)
                    break
        return region_status(child) != RegionStatus.EMPTY

    if stop is None:
        none_child = region.with_rows(coeffs[can_pos], offsets[can_pos] - tol)
        if claim(none_child):
            out.append((None, none_child))
    for i in candidates:
        prior = [j for j in can_pos if j < i]
        rows = np.vstack([-coeffs[i][None, :], coeffs[prior]])
        offs = np.concatenate([[-(offsets[i] - tol)], offsets[prior] - tol])
        child = region.with_rows(rows, offs)
        if claim(child):
            out.append((i, child))
    if len(out) == 1 and out[0][0] is None:
        return [(None, region)]
    if not out:
        return [(None, region)]
    return out


# -- box partitioning ---------------------------------------------------------

def box_partition(box: Box, n_p: int) -> list:
    """Split a box into exactly n_p interior-disjoint boxes.

    Recursive bisection of the widest axis (ties to the lowest axis index) of
    the largest-volume box (ties to creation order). Deterministic.
    """
    if n_p < 1:
        raise GeometryError("n_p must be >= 1")
    parts = [box]
    while len(parts) < n_p:
        vols = [b.volume for b in parts]
        k = int(np.argmax(vols))  # first occurrence wins ties: creation order
        b = parts.pop(k)
        axis = int(np.argmax(b.widths))  # lowest axis index wins ties
        b1, b2 = b.split(axis)
        parts.append(b1)
        parts.append(b2)
    return parts


# -- redundancy removal --------------------------------------------------------

def remove_redundant(region: Region, threshold: int) -> Region:
    """Drop affine rows implied by the others once the count exceeds threshold.

    Exact duplicates are removed first; the remaining rows are tested with one
    LP each. The point set is unchanged.
    """
    k = len(region.d)
    if k <= threshold:
        return region
    keep = _dedup_mask(region.A, region.d)
    A = region.A[keep]
    d = region.d[keep]
    i = 0
    while i < len(d) and len(d) > region.dim + 1:
        mask = np.ones(len(d), dtype=bool)
        mask[i] = False
        status, x, val = dense_lp_min(-A[i], A[mask], -d[mask])
        # row i redundant iff max of (A_i theta + d_i) over the others is <= 0
        if status == "optimal" and -val + d[i] <= TOL_FEAS:
            A = A[mask]
            d = d[mask]
        else:
            i += 1
    out = Region(A, d, region.quadratics, outer_box=region.outer_box)
    out._status = region._status
    out._witness = region._witness
    out._points = region._points
    return out


# -- sampling helpers -----------------------------------------------------------

def seed_interior_points(region: Region, n: int = 32,
                         seed: int = 1729) -> None:
    """Populate a region's interior point cache from low-discrepancy samples.

    Cache-only: speeds up nonemptiness claims for descendants of the region.
    """
    if region.outer_box is None:
        return
    pts = sobol_points(region.outer_box, n, seed)
    inside = region.margins_many(pts) <= -BOUNDARY_MARGIN
    if not np.any(inside):
        return
    fresh = pts[inside][:_MAX_CACHED_POINTS]
    if region._points is None:
        region._points = fresh
    else:
        region._points = np.vstack([region._points, fresh])[:2 * _MAX_CACHED_POINTS]
    if region._witness is None:
        region._witness = fresh[0]
        region._status = RegionStatus.NONEMPTY


def monte_carlo_volume(region: Region, box: Box, n: int = 100_000,
                       seed: int = 77) -> float:
    rng = np.random.Generator(np.random.Philox(key=seed))
    pts = box.lower_array + rng.random((n, box.dim)) * box.widths
    inside = region.margins_many(pts) <= TOL_FEAS
    return float(np.mean(inside)) * box.volume
