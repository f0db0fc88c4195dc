"""Parametric certification of a single LP/QP relaxation over a region.

The LP engine is a big-M primal simplex: with only the right-hand side
depending on theta, reduced costs are theta-independent, so the entering rule
is constant over a region and the only parametric decisions are min-ratio
tests, which split regions by the argmin of affine functions (lowest row
index on ties). The QP engine is a dual active-set method started from the
unconstrained optimum; constraint selection and step-length comparisons
reduce to sign tests on affine functions, so all splits are affine.

Both engines support pausing after a bounded number of internal regions and
resuming from a serializable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import (AffineFunction, QuadraticFunction, Region, RegionStatus,
                       ValueFunction, affine_range, argmin_partition,
                       first_positive_partition, region_split_affine,
                       region_status, remove_redundant, seed_interior_points)
from .problem import Relaxation
from .settings import CertSettings, DEFAULT_SETTINGS


class CertificationError(RuntimeError):
    def __init__(self, message, region=None, basis=None):
        super().__init__(message)
        self.region = region
        self.basis = basis


FIN = "Fin"
UNFIN = "UnFin"


@dataclass(frozen=True)
class EngineState:
    """Snapshot of one paused internal region; enough to resume certification.

    LP states store the pivot history rather than the tableau: resuming
    replays the pivots from the initial tableau, which reproduces the exact
    float path of an uninterrupted run (structural zeros included).
    """

    kind: str  # 'lp' | 'qp'
    kappa: int
    banked: int
    # LP fields
    history: Optional[tuple] = None  # ((row, col), ...) applied pivots
    bland: bool = False
    phase0: bool = False
    # QP fields (affine maps stored as (rows, 1 + n_theta): offset then coeffs)
    working: Optional[tuple] = None
    x_map: Optional[tuple] = None
    mu_map: Optional[tuple] = None
    p: Optional[int] = None
    u_map: Optional[tuple] = None


@dataclass
class CertRegionOut:
    region: Region
    lower: Optional[ValueFunction]
    optimizer: Optional[list]
    iterations: int  # iteration-count delta contributed by this call
    state: str  # FIN | UNFIN
    engine_state: Optional[EngineState] = None


def solve_cert(relaxation: Relaxation, region: Region,
               resume: Optional[EngineState] = None,
               n_max: Optional[int] = None,
               settings: CertSettings = DEFAULT_SETTINGS) -> list:
    if relaxation.kind == "LP":
        return solve_cert_lp(relaxation, region, resume, n_max, settings)
    return solve_cert_qp(relaxation, region, resume, n_max, settings)


# ---------------------------------------------------------------------------
# LP engine
# ---------------------------------------------------------------------------

@dataclass
class _LpEntry:
    region: Region
    history: tuple          # applied pivots (row, col)
    phase0: bool
    kappa: int
    banked: int
    bland: bool
    # live tableau state (rebuilt by replay when absent)
    T: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    basis: Optional[list] = None
    basic_pos: Optional[np.ndarray] = None

    def drop_tableau(self) -> None:
        self.T = self.r = self.basis = self.basic_pos = None

    def clone_for(self, region: Region) -> "_LpEntry":
        return _LpEntry(region, self.history, self.phase0, self.kappa,
                        self.banked, self.bland,
                        None if self.T is None else self.T.copy(),
                        None if self.r is None else self.r.copy(),
                        None if self.basis is None else list(self.basis),
                        None if self.basic_pos is None else self.basic_pos.copy())


def _affine_from_map(offset: float, coeffs: np.ndarray) -> AffineFunction:
    return AffineFunction.make(coeffs, offset)


class _LpEngine:
    def __init__(self, relaxation: Relaxation, settings: CertSettings):
        self.rel = relaxation
        self.s = settings
        self.sf = relaxation.standard_form(settings.big_m)
        self.m = self.sf["m"]
        self.ncols = self.sf["ncols"]
        self.art = self.sf["art_col"]
        self.n_struct = self.sf["n_struct"]
        self.n_theta = relaxation.n_theta
        # extended matrix [A | b | W]
        self.ext = np.hstack([
            self.sf["A"], self.sf["b"][:, None], self.sf["W"],
        ])
        self.redundancy_cap = settings.redundancy_factor * (self.m + self.n_theta)

    def initial_entry(self, region: Region) -> _LpEntry:
        return _LpEntry(region, (), True, 0, 0, False)

    def entry_from_state(self, region: Region, st: EngineState) -> _LpEntry:
        return _LpEntry(region, tuple(st.history), st.phase0,
                        st.kappa, st.banked, st.bland)

    def state_from_entry(self, e: _LpEntry) -> EngineState:
        return EngineState("lp", e.kappa, e.kappa, history=tuple(e.history),
                           bland=e.bland, phase0=e.phase0)

    def ensure_tableau(self, e: _LpEntry) -> None:
        """Replay the pivot history from the initial tableau; bit-identical to
        the uninterrupted run, so structural zeros survive pauses."""
        if e.T is not None:
            return
        e.T = self.ext.copy()
        e.r = self.sf["c"].astype(float).copy()
        e.basis = [self.sf["slack0"] + i for i in range(self.m)]
        e.basic_pos = np.full(self.ncols, -1, dtype=int)
        for i, col in enumerate(e.basis):
            e.basic_pos[col] = i
        for row, col in e.history:
            self._apply_pivot(e, row, col)

    def _apply_pivot(self, e: _LpEntry, row, col):
        T, r = e.T, e.r
        piv = T[row, col]
        if abs(piv) < 1e-13:
            raise CertificationError("numerically singular pivot",
                                     basis=list(e.basis))
        prow = T[row] / piv
        col_vals = T[:, col].copy()
        T -= np.outer(col_vals, prow)
        T[row] = prow
        r -= r[col] * prow[: self.ncols]
        r[col] = 0.0
        e.basic_pos[e.basis[row]] = -1
        e.basis[row] = col
        e.basic_pos[col] = row

    def _pivot(self, e: _LpEntry, row, col):
        self._apply_pivot(e, row, col)
        e.history = e.history + ((int(row), int(col)),)
        e.kappa += 1

    def _rhs_fun(self, T, row) -> AffineFunction:
        return _affine_from_map(T[row, self.ncols], T[row, self.ncols + 1:])

    def _finish(self, entry, T, basis, basic_pos) -> list:
        """Optimal basis reached: emit Fin outputs, splitting on the artificial
        value when it remained basic."""
        outs = []
        pos_a = basic_pos[self.art]
        tol = self.s.tie_tol
        targets = [(entry.region, False)]
        if pos_a >= 0:
            a_fun = self._rhs_fun(T, pos_a)
            box = entry.region.outer_box
            lo, hi = affine_range(a_fun, box) if box else (-math.inf, math.inf)
            if lo > tol:
                targets = [(entry.region, True)]
            elif hi <= tol:
                targets = [(entry.region, False)]
            else:
                shifted = AffineFunction(a_fun.coeffs, a_fun.offset - tol)
                feas, infeas = region_split_affine(entry.region, shifted)
                targets = []
                if region_status(feas) != RegionStatus.EMPTY:
                    targets.append((feas, False))
                if region_status(infeas) != RegionStatus.EMPTY:
                    targets.append((infeas, True))
        delta = entry.kappa - entry.banked
        for reg, infeasible in targets:
            if infeasible:
                outs.append(CertRegionOut(reg, ValueFunction.plus_infinity(),
                                          None, delta, FIN))
                continue
            rhs = T[:, self.ncols:]
            c = self.sf["c"]
            j_off = float(self.rel.shift.offset)
            j_coef = self.rel.shift.coeff_array.copy()
            for i, col in enumerate(basis):
                if col == self.art:
                    continue
                j_off += c[col] * rhs[i, 0]
                j_coef = j_coef + c[col] * rhs[i, 1:]
            opt = []
            for j in range(self.n_struct):
                off, coef = 0.0, np.zeros(self.n_theta)
                pu = basic_pos[j]
                pv = basic_pos[self.n_struct + j]
                if pu >= 0:
                    off += rhs[pu, 0]
                    coef = coef + rhs[pu, 1:]
                if pv >= 0:
                    off -= rhs[pv, 0]
                    coef = coef - rhs[pv, 1:]
                opt.append(AffineFunction.make(coef, off))
            outs.append(CertRegionOut(
                reg, ValueFunction.affine(AffineFunction.make(j_coef, j_off)),
                opt, delta, FIN))
        return outs

    def _unbounded(self, entry, T, basic_pos) -> list:
        outs = []
        pos_a = basic_pos[self.art]
        delta = entry.kappa - entry.banked
        tol = self.s.tie_tol
        if pos_a >= 0:
            a_fun = self._rhs_fun(T, pos_a)
            box = entry.region.outer_box
            lo, hi = affine_range(a_fun, box) if box else (-math.inf, math.inf)
            if lo > tol:
                return [CertRegionOut(entry.region, ValueFunction.plus_infinity(),
                                      None, delta, FIN)]
            if hi > tol:
                shifted = AffineFunction(a_fun.coeffs, a_fun.offset - tol)
                feas, infeas = region_split_affine(entry.region, shifted)
                if region_status(feas) != RegionStatus.EMPTY:
                    outs.append(CertRegionOut(feas, ValueFunction.minus_infinity(),
                                              None, delta, FIN))
                if region_status(infeas) != RegionStatus.EMPTY:
                    outs.append(CertRegionOut(infeas, ValueFunction.plus_infinity(),
                                              None, delta, FIN))
                return outs
        return [CertRegionOut(entry.region, ValueFunction.minus_infinity(),
                              None, delta, FIN)]

    def advance(self, entry: _LpEntry):
        """Run the simplex inside one internal region until it terminates
        (returns Fin outputs) or splits (returns child entries)."""
        s = self.s
        self.ensure_tableau(entry)
        if entry.phase0:
            T = entry.T
            funcs = [AffineFunction.constant(0.0, self.n_theta)]
            funcs += [self._rhs_fun(T, i) for i in range(self.m)]
            parts = argmin_partition(entry.region, funcs, self.s.tie_tol)
            if len(parts) > 1:
                children = []
                for w, reg in parts:
                    child = entry.clone_for(reg)
                    child.phase0 = False
                    if w > 0:
                        self._pivot(child, w - 1, self.art)
                    children.append(child)
                return "split", children
            w, reg = parts[0]
            entry.region = reg
            entry.phase0 = False
            if w > 0:
                self._pivot(entry, w - 1, self.art)
        while True:
            T, r = entry.T, entry.r
            basis, basic_pos = entry.basis, entry.basic_pos
            if entry.kappa >= s.pivot_cap:
                raise CertificationError("pivot cap exceeded",
                                         region=entry.region, basis=list(basis))
            if entry.kappa >= s.bland_after:
                entry.bland = True
            if entry.bland:
                negs = np.flatnonzero(r < -s.pivot_tol)
                q = int(negs[0]) if len(negs) else -1
            else:
                q = int(np.argmin(r))
                if r[q] >= -s.pivot_tol:
                    q = -1
            if q < 0:
                return "fin", self._finish(entry, T, basis, basic_pos)
            d = T[:, q]
            rows = np.flatnonzero(d > s.pivot_tol)
            if len(rows) == 0:
                return "fin", self._unbounded(entry, T, basic_pos)
            if entry.bland:
                rows = rows[np.argsort([basis[i] for i in rows], kind="stable")]
            if len(rows) == 1:
                self._pivot(entry, int(rows[0]), q)
                continue
            funcs = [AffineFunction.make(T[i, self.ncols + 1:] / d[i],
                                         T[i, self.ncols] / d[i])
                     for i in rows]
            parts = argmin_partition(entry.region, funcs, s.tie_tol)
            if len(parts) == 1:
                w, reg = parts[0]
                entry.region = reg
                self._pivot(entry, int(rows[w]), q)
                continue
            children = []
            for w, reg in parts:
                if len(reg.d) > self.redundancy_cap:
                    reg = remove_redundant(reg, self.redundancy_cap)
                child = entry.clone_for(reg)
                self._pivot(child, int(rows[w]), q)
                children.append(child)
            return "split", children


def solve_cert_lp(relaxation: Relaxation, region: Region,
                  resume: Optional[EngineState] = None,
                  n_max: Optional[int] = None,
                  settings: CertSettings = DEFAULT_SETTINGS) -> list:
    if relaxation.kind != "LP":
        raise CertificationError("solve_cert_lp requires an LP relaxation")
    eng = _LpEngine(relaxation, settings)
    if resume is not None:
        if resume.kind != "lp":
            raise CertificationError("resume state is not an LP state")
        stack = [eng.entry_from_state(region, resume)]
    else:
        stack = [eng.initial_entry(region)]
    seed_interior_points(region)
    outs: list = []
    fins = 0
    while stack:
        entry = stack.pop()
        outcome, payload = eng.advance(entry)
        if outcome == "fin":
            outs.extend(payload)
            fins += len(payload)
        else:
            stack.extend(reversed(payload))
        if n_max is not None and stack and fins + len(stack) >= n_max:
            while stack:
                e = stack.pop()
                outs.append(CertRegionOut(e.region, None, None,
                                          e.kappa - e.banked, UNFIN,
                                          eng.state_from_entry(e)))
            break
    return outs


# ---------------------------------------------------------------------------
# QP engine
# ---------------------------------------------------------------------------

@dataclass
class _QpEntry:
    region: Region
    working: list          # active row indices, insertion order
    x_map: np.ndarray      # n' x (1 + n_theta): offset column then theta coeffs
    mu_map: np.ndarray     # |working| x (1 + n_theta)
    p: Optional[int]
    u_map: np.ndarray      # accumulated multiplier for p, (1 + n_theta,)
    kappa: int
    banked: int


class _QpEngine:
    def __init__(self, relaxation: Relaxation, settings: CertSettings):
        if relaxation.kind != "QP":
            raise CertificationError("solve_cert_qp requires a QP relaxation")
        self.rel = relaxation
        self.s = settings
        self.n = relaxation.n_vars
        self.m = relaxation.m_rows
        self.n_theta = relaxation.n_theta
        self.H = relaxation.H
        self.A = relaxation.A
        # b(theta) as maps: offset column then coeffs
        self.b_map = np.hstack([relaxation.b[:, None], relaxation.W])
        self.f_map = np.hstack([relaxation.f[:, None], relaxation.F])
        self.redundancy_cap = settings.redundancy_factor * (self.m + self.n_theta)

    def initial_entry(self, region: Region) -> _QpEntry:
        if self.n:
            x_map = -np.linalg.solve(self.H, self.f_map)
        else:
            x_map = np.zeros((0, 1 + self.n_theta))
        return _QpEntry(region, [], x_map, np.zeros((0, 1 + self.n_theta)),
                        None, np.zeros(1 + self.n_theta), 0, 0)

    def entry_from_state(self, region: Region, st: EngineState) -> _QpEntry:
        return _QpEntry(region, list(st.working), np.array(st.x_map, dtype=float),
                        np.array(st.mu_map, dtype=float).reshape(
                            len(st.working), 1 + self.n_theta),
                        st.p, np.array(st.u_map, dtype=float),
                        st.kappa, st.banked)

    def state_from_entry(self, e: _QpEntry) -> EngineState:
        return EngineState("qp", e.kappa, e.kappa,
                           working=tuple(e.working),
                           x_map=tuple(map(tuple, e.x_map.tolist())),
                           mu_map=tuple(map(tuple, e.mu_map.tolist())),
                           p=e.p, u_map=tuple(e.u_map.tolist()))

    def _violation_map(self, e: _QpEntry, i: int) -> np.ndarray:
        return self.A[i] @ e.x_map - self.b_map[i]

    def _emit_optimal(self, e: _QpEntry) -> CertRegionOut:
        x0 = e.x_map[:, 0]
        X1 = e.x_map[:, 1:]
        H, fm = self.H, self.f_map
        f0, F = fm[:, 0], fm[:, 1:]
        quad = 0.5 * X1.T @ H @ X1 + F.T @ X1
        lin = X1.T @ (H @ x0) + X1.T @ f0 + F.T @ x0
        const = float(0.5 * x0 @ H @ x0 + f0 @ x0)
        shift = self.rel.shift
        lin = lin + shift.coeff_array
        const += shift.offset
        vf = ValueFunction.quadratic(QuadraticFunction.make(quad, lin, const))
        opt = [AffineFunction.make(e.x_map[j, 1:], e.x_map[j, 0])
               for j in range(self.n)]
        return CertRegionOut(e.region, vf, opt, e.kappa - e.banked, FIN)

    def advance(self, e: _QpEntry):
        s = self.s
        while True:
            if e.kappa >= s.pivot_cap:
                raise CertificationError("iteration cap exceeded in QP engine",
                                         region=e.region)
            if e.p is None:
                in_w = set(e.working)
                idx = [i for i in range(self.m) if i not in in_w]
                funcs = [_affine_from_map(self._violation_map(e, i)[0],
                                          self._violation_map(e, i)[1:])
                         for i in idx]
                parts = first_positive_partition(e.region, funcs, s.tie_tol)
                if len(parts) == 1:
                    tag, reg = parts[0]
                    e.region = reg
                    if tag is None:
                        return "fin", [self._emit_optimal(e)]
                    e.p = idx[tag]
                    e.u_map = np.zeros(1 + self.n_theta)
                    continue
                fins = []
                children = []
                for tag, reg in parts:
                    if len(reg.d) > self.redundancy_cap:
                        reg = remove_redundant(reg, self.redundancy_cap)
                    if tag is None:
                        opt_entry = replace_region(e, reg)
                        fins.append(self._emit_optimal(opt_entry))
                    else:
                        child = replace_region(e, reg)
                        child.p = idx[tag]
                        child.u_map = np.zeros(1 + self.n_theta)
                        children.append(child)
                return "mixed", (fins, children)
            # direction step for the selected violated constraint
            k = len(e.working)
            A_w = self.A[e.working] if k else np.zeros((0, self.n))
            K = np.zeros((self.n + k, self.n + k))
            K[: self.n, : self.n] = self.H
            K[: self.n, self.n:] = A_w.T
            K[self.n:, : self.n] = A_w
            rhs = np.concatenate([self.A[e.p], np.zeros(k)])
            try:
                sol = np.linalg.solve(K, rhs) if self.n + k else np.zeros(0)
            except np.linalg.LinAlgError as exc:
                raise CertificationError(
                    f"singular KKT system, working set {e.working}",
                    region=e.region) from exc
            z = sol[: self.n]
            rho = sol[self.n:]
            if self.n == 0 or np.max(np.abs(z), initial=0.0) <= s.zero_tol:
                drops = [j for j in range(k) if rho[j] > s.pivot_tol]
                if not drops:
                    return "fin", [CertRegionOut(
                        e.region, ValueFunction.plus_infinity(), None,
                        e.kappa - e.banked, FIN)]
                funcs = [_affine_from_map(*(lambda mrow: (mrow[0], mrow[1:]))(
                    e.mu_map[j] / rho[j])) for j in drops]
                parts = argmin_partition(e.region, funcs, s.tie_tol)
                if len(parts) == 1:
                    w, reg = parts[0]
                    e.region = reg
                    self._apply_drop(e, drops[w], rho)
                    continue
                children = []
                for w, reg in parts:
                    child = replace_region(e, reg)
                    self._apply_drop(child, drops[w], rho)
                    children.append(child)
                return "split", children
            denom = float(self.A[e.p] @ z)
            vmap = self._violation_map(e, e.p)
            t1_map = vmap / denom
            drops = [j for j in range(k) if rho[j] > s.pivot_tol]
            funcs = [_affine_from_map(t1_map[0], t1_map[1:])]
            funcs += [_affine_from_map(*(lambda mrow: (mrow[0], mrow[1:]))(
                e.mu_map[j] / rho[j])) for j in drops]
            parts = argmin_partition(e.region, funcs, s.tie_tol)
            if len(parts) == 1:
                w, reg = parts[0]
                e.region = reg
                self._apply_step(e, w, t1_map, z, rho, drops)
                continue
            children = []
            for w, reg in parts:
                child = replace_region(e, reg)
                self._apply_step(child, w, t1_map, z, rho, drops)
                children.append(child)
            return "split", children

    def _apply_drop(self, e: _QpEntry, jstar: int, rho: np.ndarray) -> None:
        t_map = e.mu_map[jstar] / rho[jstar]
        e.mu_map = e.mu_map - np.outer(rho, t_map)
        e.u_map = e.u_map + t_map
        e.working.pop(jstar)
        e.mu_map = np.delete(e.mu_map, jstar, axis=0)
        e.kappa += 1

    def _apply_step(self, e: _QpEntry, w: int, t1_map, z, rho, drops) -> None:
        if w == 0:
            t_map = t1_map
            e.x_map = e.x_map - np.outer(z, t_map)
            e.mu_map = e.mu_map - np.outer(rho, t_map)
            e.mu_map = np.vstack([e.mu_map, (e.u_map + t_map)[None, :]])
            e.working.append(e.p)
            e.p = None
            e.kappa += 1
        else:
            jstar = drops[w - 1]
            t_map = e.mu_map[jstar] / rho[jstar]
            e.x_map = e.x_map - np.outer(z, t_map)
            e.mu_map = e.mu_map - np.outer(rho, t_map)
            e.u_map = e.u_map + t_map
            e.working.pop(jstar)
            e.mu_map = np.delete(e.mu_map, jstar, axis=0)
            e.kappa += 1


def replace_region(e: _QpEntry, region: Region) -> _QpEntry:
    return _QpEntry(region, list(e.working), e.x_map.copy(), e.mu_map.copy(),
                    e.p, e.u_map.copy(), e.kappa, e.banked)


def solve_cert_qp(relaxation: Relaxation, region: Region,
                  resume: Optional[EngineState] = None,
                  n_max: Optional[int] = None,
                  settings: CertSettings = DEFAULT_SETTINGS) -> list:
    eng = _QpEngine(relaxation, settings)
    if resume is not None:
        if resume.kind != "qp":
            raise CertificationError("resume state is not a QP state")
        stack = [eng.entry_from_state(region, resume)]
    else:
        stack = [eng.initial_entry(region)]
    seed_interior_points(region)
    outs: list = []
    fins = 0
    while stack:
        entry = stack.pop()
        outcome, payload = eng.advance(entry)
        if outcome == "fin":
            outs.extend(payload)
            fins += len(payload)
        elif outcome == "split":
            stack.extend(reversed(payload))
        else:  # mixed: finished subregions plus children to continue
            new_fins, children = payload
            outs.extend(new_fins)
            fins += len(new_fins)
            stack.extend(reversed(children))
        if n_max is not None and stack and fins + len(stack) >= n_max:
            while stack:
                e = stack.pop()
                outs.append(CertRegionOut(e.region, None, None,
                                          e.kappa - e.banked, UNFIN,
                                          eng.state_from_entry(e)))
            break
    return outs
