"""Ground-truth oracle: non-parametric LP/QP solvers and an online B&B.

The solvers follow exactly the same pivoting and tie-breaking rules as the
certification engines, so iteration counts coincide pointwise away from
region boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import (MpProblem, Node, Relaxation, ROOT_NODE, branch,
                      free_binaries, make_relaxation, select_branch_index)
from .settings import CertSettings, DEFAULT_SETTINGS


class SolverError(RuntimeError):
    pass


@dataclass
class OnlineResult:
    objective: float
    optimizer: Optional[np.ndarray]
    kappa_iter: int
    kappa_node: int
    node_sequence: list
    upper_trace: list = field(default_factory=list)


def _pivot(T: np.ndarray, r: np.ndarray, basis: list, basic_pos: np.ndarray,
           row: int, col: int) -> None:
    piv = T[row, col]
    prow = T[row] / piv
    col_vals = T[:, col].copy()
    T -= np.outer(col_vals, prow)
    T[row] = prow
    r -= r[col] * prow[: len(r)]
    r[col] = 0.0
    leaving = basis[row]
    basic_pos[leaving] = -1
    basis[row] = col
    basic_pos[col] = row


def lp_solve(relaxation: Relaxation, theta,
             settings: CertSettings = DEFAULT_SETTINGS):
    """Big-M primal simplex at a fixed theta.

    Returns (J, x_reduced, pivots): J = +inf when infeasible, -inf when
    unbounded (x is None in both cases).
    """
    theta = np.asarray(theta, dtype=float)
    sf = relaxation.standard_form(settings.big_m)
    m, ncols = sf["m"], sf["ncols"]
    n_struct = sf["n_struct"]
    art = sf["art_col"]
    b_theta = sf["b"] + sf["W"] @ theta

    T = np.hstack([sf["A"], b_theta[:, None]]).astype(float)
    r = sf["c"].astype(float).copy()
    basis = [sf["slack0"] + i for i in range(m)]
    basic_pos = np.full(ncols, -1, dtype=int)
    for i, col in enumerate(basis):
        basic_pos[col] = i
    kappa = 0
    shift = relaxation.shift(theta)

    # phase entry: candidates are [0, b_1(theta), ..., b_m(theta)];
    # if a row wins, the artificial pivots into it
    cand = np.concatenate([[0.0], b_theta])
    w = int(np.flatnonzero(cand <= cand.min() + settings.tie_tol)[0])
    if w > 0:
        _pivot(T, r, basis, basic_pos, w - 1, art)
        kappa += 1

    bland = False
    while True:
        if kappa >= settings.pivot_cap:
            raise SolverError("pivot cap exceeded in online LP")
        if kappa >= settings.bland_after:
            bland = True
        if bland:
            negs = np.flatnonzero(r < -settings.pivot_tol)
            q = int(negs[0]) if len(negs) else -1
        else:
            q = int(np.argmin(r))
            if r[q] >= -settings.pivot_tol:
                q = -1
        if q < 0:
            # optimal
            xb = T[:, -1]
            pos_a = basic_pos[art]
            if pos_a >= 0 and xb[pos_a] > settings.tie_tol:
                return math.inf, None, kappa
            x = np.zeros(relaxation.n_vars)
            for j in range(n_struct):
                pu, pv = basic_pos[j], basic_pos[n_struct + j]
                val = 0.0
                if pu >= 0:
                    val += xb[pu]
                if pv >= 0:
                    val -= xb[pv]
                x[j] = val
            obj = 0.0
            for i, col in enumerate(basis):
                if col == art:
                    continue
                obj += sf["c"][col] * xb[i]
            return obj + shift, x, kappa
        d = T[:, q]
        rows = np.flatnonzero(d > settings.pivot_tol)
        if len(rows) == 0:
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, -1] > settings.tie_tol:
                return math.inf, None, kappa
            return -math.inf, None, kappa
        if bland:
            rows = rows[np.argsort([basis[i] for i in rows], kind="stable")]
        ratios = T[rows, -1] / d[rows]
        w = int(np.flatnonzero(ratios <= ratios.min() + settings.tie_tol)[0])
        _pivot(T, r, basis, basic_pos, int(rows[w]), q)
        kappa += 1


def qp_solve(relaxation: Relaxation, theta,
             settings: CertSettings = DEFAULT_SETTINGS):
    """Dual active-set QP solver at a fixed theta; iteration = working-set change."""
    theta = np.asarray(theta, dtype=float)
    H, A = relaxation.H, relaxation.A
    m = relaxation.m_rows
    n = relaxation.n_vars
    f_theta = relaxation.f + relaxation.F @ theta
    b_theta = relaxation.b + relaxation.W @ theta
    shift = relaxation.shift(theta)

    x = -np.linalg.solve(H, f_theta) if n else np.zeros(0)
    working: list = []
    mu = np.zeros(0)
    p = -1
    u = 0.0
    kappa = 0
    while True:
        if kappa >= settings.pivot_cap:
            raise SolverError("iteration cap exceeded in online QP")
        if p < 0:
            in_w = set(working)
            p = -1
            for i in range(m):
                if i in in_w:
                    continue
                if A[i] @ x - b_theta[i] > settings.tie_tol:
                    p = i
                    break
            if p < 0:
                obj = 0.5 * x @ H @ x + f_theta @ x if n else 0.0
                return obj + shift, x, kappa
            u = 0.0
        k = len(working)
        A_w = A[working] if k else np.zeros((0, n))
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = A_w.T
        K[n:, :n] = A_w
        rhs = np.concatenate([A[p], np.zeros(k)])
        try:
            sol = np.linalg.solve(K, rhs) if n + k else np.zeros(0)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular KKT system, working set {working}") from exc
        z = sol[:n]
        rho = sol[n:]
        if n == 0 or np.max(np.abs(z)) <= settings.zero_tol:
            drops = [j for j in range(k) if rho[j] > settings.pivot_tol]
            if not drops:
                return math.inf, None, kappa
            t_vals = np.array([mu[j] / rho[j] for j in drops])
            w = int(np.flatnonzero(t_vals <= t_vals.min() + settings.tie_tol)[0])
            jstar = drops[w]
            t = mu[jstar] / rho[jstar]
            mu = mu - t * rho
            u += t
            working.pop(jstar)
            mu = np.delete(mu, jstar)
            kappa += 1
            continue
        denom = float(A[p] @ z)
        t1 = (A[p] @ x - b_theta[p]) / denom
        drops = [j for j in range(k) if rho[j] > settings.pivot_tol]
        cand = np.array([t1] + [mu[j] / rho[j] for j in drops])
        w = int(np.flatnonzero(cand <= cand.min() + settings.tie_tol)[0])
        if w == 0:
            x = x - t1 * z
            mu = mu - t1 * rho
            mu = np.append(mu, u + t1)
            working.append(p)
            p = -1
            kappa += 1
        else:
            jstar = drops[w - 1]
            t = cand[w]
            x = x - t * z
            mu = mu - t * rho
            u += t
            working.pop(jstar)
            mu = np.delete(mu, jstar)
            kappa += 1


def node_solve(problem: MpProblem, node: Node, theta,
               settings: CertSettings = DEFAULT_SETTINGS,
               _cache: Optional[dict] = None):
    if _cache is not None and node in _cache:
        rel = _cache[node]
    else:
        rel = make_relaxation(problem, node)
        if _cache is not None:
            _cache[node] = rel
    if rel.kind == "LP":
        return rel, lp_solve(rel, theta, settings)
    return rel, qp_solve(rel, theta, settings)


def bnb_solve(problem: MpProblem, theta,
              settings: CertSettings = DEFAULT_SETTINGS,
              _cache: Optional[dict] = None) -> OnlineResult:
    """Online depth-first B&B: x_i=1 child first, lowest-free-index branching,
    cuts evaluated in the order infeasibility, dominance, integer feasibility."""
    theta = np.asarray(theta, dtype=float)
    stack = [ROOT_NODE]
    upper = math.inf
    incumbent = None
    kappa_iter = 0
    kappa_node = 0
    seq = []
    trace = []
    while stack:
        node = stack.pop()
        rel, (J, x, it) = node_solve(problem, node, theta, settings, _cache)
        kappa_iter += it
        kappa_node += 1
        seq.append(node)
        cut = False
        if J == math.inf:
            cut = True  # infeasibility cut
        elif J >= upper - settings.tie_tol:
            cut = True  # dominance cut (non-strict; ties within tie_tol cut)
        else:
            free = free_binaries(problem, node)
            if x is None:
                int_feasible = not free
            else:
                int_feasible = True
                for pos in rel.free_binary_positions:
                    v = x[pos]
                    if min(abs(v), abs(v - 1.0)) > settings.int_value_tol:
                        int_feasible = False
                        break
            if int_feasible:
                if J < upper:
                    upper = J
                    incumbent = (rel.lift_point(x, problem.n, node)
                                 if x is not None else None)
                cut = True
        if not cut:
            i = select_branch_index(node, problem)
            child_one, child_zero = branch(node, i)
            stack.append(child_zero)
            stack.append(child_one)
        trace.append(upper)
    return OnlineResult(upper, incumbent, kappa_iter, kappa_node, seq, trace)
