"""Compiled inner loops shared by the certification engines and the oracle.

The certification engine and the online solver must take bit-identical pivot
paths, so both sides call the same kernels. Pure-python fallbacks keep the
package usable without numba (slower, same arithmetic).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is normally available
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


# status codes shared by the advance kernels
LP_OPTIMAL = 0
LP_UNBOUNDED = 1
LP_SPLIT = 2
LP_CAP = 3


@njit(cache=True)
def pivot_update(T, r, basis, basic_pos, row, col, ncols):
    m, width = T.shape
    piv = T[row, col]
    cv = np.empty(m)
    for i in range(m):
        cv[i] = T[i, col]
    inv = 1.0 / piv
    for j in range(width):
        T[row, j] = T[row, j] * inv
    for i in range(m):
        if i == row:
            continue
        f = cv[i]
        if f != 0.0:
            for j in range(width):
                T[i, j] = T[i, j] - f * T[row, j]
    rc = r[col]
    if rc != 0.0:
        for j in range(ncols):
            r[j] = r[j] - rc * T[row, j]
    r[col] = 0.0
    basic_pos[basis[row]] = -1
    basis[row] = col
    basic_pos[col] = row


@njit(cache=True)
def _entering(r, bland, pivot_tol):
    ncols = r.shape[0]
    if bland:
        for j in range(ncols):
            if r[j] < -pivot_tol:
                return j
        return -1
    q = 0
    best = r[0]
    for j in range(1, ncols):
        if r[j] < best:
            best = r[j]
            q = j
    if best >= -pivot_tol:
        return -1
    return q


@njit(cache=True)
def lp_advance(T, r, basis, basic_pos, ncols, n_theta, center, half,
               kappa, bland, tie_tol, pivot_tol, bland_after, cap, cand_out):
    """Pivot inside one region until optimal/unbounded or a parametric
    min-ratio decision needs a region split.

    Returns (status, kappa, bland, q, n_cand); candidate rows (in tie-break
    order) are written to cand_out when status is LP_SPLIT.
    """
    m = T.shape[0]
    while True:
        if kappa >= cap:
            return LP_CAP, kappa, bland, -1, 0
        if kappa >= bland_after:
            bland = 1
        q = _entering(r, bland, pivot_tol)
        if q < 0:
            return LP_OPTIMAL, kappa, bland, -1, 0
        n_rows = 0
        for i in range(m):
            if T[i, q] > pivot_tol:
                cand_out[n_rows] = i
                n_rows += 1
        if n_rows == 0:
            return LP_UNBOUNDED, kappa, bland, q, 0
        if bland:
            # order candidates by basic variable index
            for a in range(1, n_rows):
                key = cand_out[a]
                kb = basis[key]
                b = a - 1
                while b >= 0 and basis[cand_out[b]] > kb:
                    cand_out[b + 1] = cand_out[b]
                    b -= 1
                cand_out[b + 1] = key
        if n_rows == 1:
            pivot_update(T, r, basis, basic_pos, cand_out[0], q, ncols)
            kappa += 1
            continue
        # ratio functions f_i = T[row, ncols:] / d_row; interval prune over box
        width = 1 + n_theta
        funcs = np.empty((n_rows, width))
        for a in range(n_rows):
            i = cand_out[a]
            dinv = 1.0 / T[i, q]
            for j in range(width):
                funcs[a, j] = T[i, ncols + j] * dinv
        lo = np.empty(n_rows)
        hi = np.empty(n_rows)
        for a in range(n_rows):
            mid = funcs[a, 0]
            rad = 0.0
            for j in range(n_theta):
                mid += funcs[a, 1 + j] * center[j]
                rad += abs(funcs[a, 1 + j]) * half[j]
            lo[a] = mid - rad
            hi[a] = mid + rad
        # dedup exact duplicates (later copy never wins a tie)
        n_keep = 0
        for a in range(n_rows):
            dup = False
            for b in range(a):
                same = True
                for j in range(width):
                    if funcs[a, j] != funcs[b, j]:
                        same = False
                        break
                if same:
                    dup = True
                    break
            if dup:
                continue
            viable = True
            for b in range(n_rows):
                if b == a:
                    continue
                if b < a:
                    if hi[b] - lo[a] < tie_tol:
                        viable = False
                        break
                elif lo[a] - hi[b] > tie_tol:
                    viable = False
                    break
            if viable:
                cand_out[n_rows + n_keep] = cand_out[a]
                n_keep += 1
        if n_keep == 1:
            pivot_update(T, r, basis, basic_pos, cand_out[n_rows], q, ncols)
            kappa += 1
            continue
        if n_keep == 0:
            # conservative: defer to the caller with all candidates
            return LP_SPLIT, kappa, bland, q, n_rows
        for a in range(n_rows):
            if a < n_keep:
                cand_out[a] = cand_out[n_rows + a]
        return LP_SPLIT, kappa, bland, q, n_rows if n_keep <= 1 else n_rows


@njit(cache=True)
def lp_solve_kernel(A, c, b_theta, slack0, art, n_struct,
                    tie_tol, pivot_tol, bland_after, cap):
    """Full big-M primal simplex at a fixed parameter.

    Returns (status, kappa, obj, x) with status 0 optimal, 1 unbounded,
    2 infeasible, 3 cap exceeded. obj excludes the objective shift.
    """
    m, ncols = A.shape
    T = np.empty((m, ncols + 1))
    for i in range(m):
        for j in range(ncols):
            T[i, j] = A[i, j]
        T[i, ncols] = b_theta[i]
    r = c.copy()
    basis = np.empty(m, dtype=np.int64)
    basic_pos = np.full(ncols, -1, dtype=np.int64)
    for i in range(m):
        basis[i] = slack0 + i
        basic_pos[slack0 + i] = i
    kappa = 0
    x = np.zeros(n_struct)

    # phase entry: candidates [0, b_1, ..., b_m], lowest within tie_tol of min
    mn = 0.0
    for i in range(m):
        if b_theta[i] < mn:
            mn = b_theta[i]
    w = -1
    if 0.0 <= mn + tie_tol:
        w = 0
    else:
        for i in range(m):
            if b_theta[i] <= mn + tie_tol:
                w = i + 1
                break
    if w > 0:
        pivot_update(T, r, basis, basic_pos, w - 1, art, ncols)
        kappa += 1

    bland = 0
    cand = np.empty(m, dtype=np.int64)
    while True:
        if kappa >= cap:
            return 3, kappa, 0.0, x
        if kappa >= bland_after:
            bland = 1
        q = _entering(r, bland, pivot_tol)
        if q < 0:
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, ncols] > tie_tol:
                return 2, kappa, 0.0, x
            obj = 0.0
            for i in range(m):
                col = basis[i]
                if col != art:
                    obj += c[col] * T[i, ncols]
            for j in range(n_struct):
                v = 0.0
                pu = basic_pos[j]
                pv = basic_pos[n_struct + j]
                if pu >= 0:
                    v += T[pu, ncols]
                if pv >= 0:
                    v -= T[pv, ncols]
                x[j] = v
            return 0, kappa, obj, x
        n_rows = 0
        for i in range(m):
            if T[i, q] > pivot_tol:
                cand[n_rows] = i
                n_rows += 1
        if n_rows == 0:
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, ncols] > tie_tol:
                return 2, kappa, 0.0, x
            return 1, kappa, 0.0, x
        if bland:
            for a in range(1, n_rows):
                key = cand[a]
                kb = basis[key]
                b = a - 1
                while b >= 0 and basis[cand[b]] > kb:
                    cand[b + 1] = cand[b]
                    b -= 1
                cand[b + 1] = key
        rmin = T[cand[0], ncols] / T[cand[0], q]
        for a in range(1, n_rows):
            ratio = T[cand[a], ncols] / T[cand[a], q]
            if ratio < rmin:
                rmin = ratio
        row = cand[0]
        for a in range(n_rows):
            ratio = T[cand[a], ncols] / T[cand[a], q]
            if ratio <= rmin + tie_tol:
                row = cand[a]
                break
        pivot_update(T, r, basis, basic_pos, row, q, ncols)
        kappa += 1


@njit(cache=True)
def dense_lp_kernel(c, A, b, big_m, tol):
    """min c.x s.t. A x <= b with free x; used for region feasibility tests.

    Returns (status, x, obj) with status 0 optimal, 1 unbounded, 2 infeasible,
    3 failed.
    """
    k, n = A.shape
    ncols = 2 * n + k + 1
    art = ncols - 1
    T = np.zeros((k, ncols + 1))
    for i in range(k):
        for j in range(n):
            T[i, j] = A[i, j]
            T[i, n + j] = -A[i, j]
        T[i, 2 * n + i] = 1.0
        T[i, art] = -1.0
        T[i, ncols] = b[i]
    r = np.zeros(ncols)
    for j in range(n):
        r[j] = c[j]
        r[n + j] = -c[j]
    r[art] = big_m
    basis = np.empty(k, dtype=np.int64)
    basic_pos = np.full(ncols, -1, dtype=np.int64)
    for i in range(k):
        basis[i] = 2 * n + i
        basic_pos[2 * n + i] = i
    x = np.zeros(n)

    w = 0
    bmin = 0.0
    for i in range(k):
        if T[i, ncols] < bmin:
            bmin = T[i, ncols]
            w = i + 1
    if w > 0:
        pivot_update(T, r, basis, basic_pos, w - 1, art, ncols)

    cap = 200 * (k + n + 10)
    bland_at = cap // 2
    feas_tol = tol ** 0.5
    for it in range(cap):
        bland = 1 if it >= bland_at else 0
        q = _entering(r, bland, tol)
        if q < 0:
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, ncols] > feas_tol:
                return 2, x, 0.0
            obj = 0.0
            for j in range(n):
                v = 0.0
                pu = basic_pos[j]
                pv = basic_pos[n + j]
                if pu >= 0:
                    v += T[pu, ncols]
                if pv >= 0:
                    v -= T[pv, ncols]
                x[j] = v
                obj += c[j] * v
            return 0, x, obj
        row = -1
        rmin = 0.0
        for i in range(k):
            if T[i, q] > tol:
                ratio = T[i, ncols] / T[i, q]
                if row < 0 or ratio < rmin:
                    rmin = ratio
                    row = i
        if row < 0:
            pos_a = basic_pos[art]
            if pos_a >= 0 and T[pos_a, ncols] > feas_tol:
                return 2, x, 0.0
            return 1, x, 0.0
        pivot_update(T, r, basis, basic_pos, row, q, ncols)
    return 3, x, 0.0
