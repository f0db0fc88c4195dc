"""Data model for mp-MILP / mp-MIQP instances, B&B nodes, and node relaxations.

An instance minimizes ``c'x`` (MILP) or ``0.5 x'Hx + f(theta)'x`` (MIQP)
subject to ``A x <= b + W theta`` with a subset of variables restricted to
{0, 1}. Relaxations fix a node's binaries by substitution and relax the free
ones to [0, 1] via explicit bound rows, so the reduced right-hand side stays
affine in theta.

All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import AffineFunction, Box

MIN_EIGENVALUE = 1e-8
BIG_M_DEFAULT = 1e6


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class MpProblem:
    kind: str  # 'MILP' | 'MIQP'
    n_c: int
    n_b: int
    binary_set: tuple  # sorted variable indices, 0-based
    A: np.ndarray
    b: np.ndarray
    W: np.ndarray
    theta_box: Box
    c: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    f_theta: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.n
        if self.kind not in ("MILP", "MIQP"):
            raise ProblemError(f"unknown problem kind {self.kind!r}")
        if self.kind == "MILP":
            if self.c is None or self.H is not None:
                raise ProblemError("MILP carries c and no (H, f, f_theta)")
            if self.c.shape != (n,):
                raise ProblemError("c must have length n")
        else:
            if self.c is not None or self.H is None or self.f is None \
                    or self.f_theta is None:
                raise ProblemError("MIQP carries (H, f, f_theta) and no c")
            if self.H.shape != (n, n):
                raise ProblemError("H must be n x n")
            if not np.allclose(self.H, self.H.T, atol=1e-10):
                raise ProblemError("H must be symmetric")
            if np.linalg.eigvalsh(self.H)[0] < MIN_EIGENVALUE - 1e-12:
                raise ProblemError(
                    f"H must have minimum eigenvalue >= {MIN_EIGENVALUE}"
                )
        if len(self.binary_set) != self.n_b:
            raise ProblemError("binary_set size must equal n_b")
        if self.binary_set and (min(self.binary_set) < 0 or max(self.binary_set) >= n):
            raise ProblemError("binary indices out of range")
        if tuple(sorted(set(self.binary_set))) != tuple(self.binary_set):
            raise ProblemError("binary_set must be sorted and duplicate-free")
        m = self.A.shape[0]
        if self.A.shape != (m, n) or self.b.shape != (m,) \
                or self.W.shape != (m, self.n_theta):
            raise ProblemError("constraint data dimensions inconsistent")

    @property
    def n(self) -> int:
        return self.n_c + self.n_b

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_theta(self) -> int:
        return self.theta_box.dim


@dataclass(frozen=True)
class Node:
    """B&B node: binaries fixed to 0 (fixed_zero) and to 1 (fixed_one)."""

    fixed_zero: tuple = ()
    fixed_one: tuple = ()

    def __post_init__(self):
        if set(self.fixed_zero) & set(self.fixed_one):
            raise ProblemError("a variable cannot be fixed to both 0 and 1")
        object.__setattr__(self, "fixed_zero", tuple(sorted(self.fixed_zero)))
        object.__setattr__(self, "fixed_one", tuple(sorted(self.fixed_one)))

    @property
    def depth(self) -> int:
        return len(self.fixed_zero) + len(self.fixed_one)

    def fixed(self) -> frozenset:
        return frozenset(self.fixed_zero) | frozenset(self.fixed_one)

    def __repr__(self) -> str:
        return f"Node(B0={list(self.fixed_zero)}, B1={list(self.fixed_one)})"


ROOT_NODE = Node((), ())


def branch(node: Node, i: int) -> tuple:
    """Children (x_i = 1, x_i = 0) of the node; i must be a free binary index."""
    if i in node.fixed_zero or i in node.fixed_one:
        raise ProblemError(f"variable {i} already fixed at this node")
    child_one = Node(node.fixed_zero, node.fixed_one + (i,))
    child_zero = Node(node.fixed_zero + (i,), node.fixed_one)
    return child_one, child_zero


def free_binaries(problem: MpProblem, node: Node) -> list:
    fixed = node.fixed()
    return [i for i in problem.binary_set if i not in fixed]


def select_branch_index(node: Node, problem: MpProblem) -> int:
    """Lowest free binary index; theta-independent so branching never splits."""
    free = free_binaries(problem, node)
    if not free:
        raise ProblemError("node has no free binaries to branch on")
    return free[0]


@dataclass
class Relaxation:
    """Convex LP/QP relaxation of a node with fixed binaries substituted out.

    Rows are ordered: the m structural rows first, then for each free binary
    (ascending original index) an upper bound row x_i <= 1 followed by a lower
    bound row -x_i <= 0.
    """

    kind: str  # 'LP' | 'QP'
    free_index_map: tuple  # reduced position -> original variable index
    free_binary_positions: tuple  # reduced positions that are relaxed binaries
    A: np.ndarray  # m' x n'
    b: np.ndarray  # m'
    W: np.ndarray  # m' x n_theta
    shift: AffineFunction  # objective constant as a function of theta
    c: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None  # f'(theta) = f + F theta
    F: Optional[np.ndarray] = None
    node: Node = ROOT_NODE
    _std_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.free_index_map)

    @property
    def m_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_theta(self) -> int:
        return self.W.shape[1]

    def lift_optimizer(self, reduced: list, n_total: int, node: Node) -> list:
        """Map per-reduced-variable affine optimizers back to original indices."""
        dim = self.n_theta
        out = [None] * n_total
        for i in node.fixed_zero:
            out[i] = AffineFunction.constant(0.0, dim)
        for i in node.fixed_one:
            out[i] = AffineFunction.constant(1.0, dim)
        for pos, orig in enumerate(self.free_index_map):
            out[orig] = reduced[pos]
        return out

    def lift_point(self, x_reduced: np.ndarray, n_total: int, node: Node) -> np.ndarray:
        x = np.zeros(n_total)
        for i in node.fixed_one:
            x[i] = 1.0
        x[list(self.free_index_map)] = x_reduced
        return x

    def standard_form(self, big_m: float = BIG_M_DEFAULT) -> dict:
        """Big-M standard form shared by the certification engine and the oracle.

        Columns are [u (n'), v (n'), slacks (m'), artificial]: x = u - v,
        A x + s = b(theta), the artificial column is -1 in every row with cost
        big_m; all other costs are theta-independent.
        """
        if self.kind != "LP":
            raise ProblemError("standard form is only defined for LP relaxations")
        key = float(big_m)
        if key in self._std_cache:
            return self._std_cache[key]
        n, m = self.n_vars, self.m_rows
        A_std = np.hstack([
            self.A, -self.A, np.eye(m), -np.ones((m, 1)),
        ])
        c_std = np.concatenate([self.c, -self.c, np.zeros(m), [big_m]])
        sf = {
            "A": A_std,
            "c": c_std,
            "b": self.b.copy(),
            "W": self.W.copy(),
            "n_struct": n,
            "m": m,
            "ncols": A_std.shape[1],
            "art_col": A_std.shape[1] - 1,
            "slack0": 2 * n,
        }
        self._std_cache[key] = sf
        return sf


def make_relaxation(problem: MpProblem, node: Node) -> Relaxation:
    """Build the node relaxation by exact substitution of fixed binaries."""
    bset = set(problem.binary_set)
    fixed = node.fixed()
    if not fixed <= bset:
        raise ProblemError("node fixes a non-binary variable")
    n = problem.n
    free_idx = [j for j in range(n) if j not in fixed]
    free_bin = [p for p, j in enumerate(free_idx) if j in bset]
    fixed_one = list(node.fixed_one)

    A_free = problem.A[:, free_idx]
    # substitution x_i = 1 moves the column into the right-hand side
    if fixed_one:
        b_red = problem.b - problem.A[:, fixed_one].sum(axis=1)
    else:
        b_red = problem.b.copy()
    W_red = problem.W.copy()

    # explicit 0/1 bound rows for the free binaries, ascending original index
    n_red = len(free_idx)
    rows_A = [A_free]
    rows_b = [b_red]
    rows_W = [W_red]
    for p in free_bin:
        e = np.zeros(n_red)
        e[p] = 1.0
        rows_A.append(np.vstack([e, -e]))
        rows_b.append(np.array([1.0, 0.0]))
        rows_W.append(np.zeros((2, problem.n_theta)))
    A_full = np.vstack(rows_A)
    b_full = np.concatenate(rows_b)
    W_full = np.vstack(rows_W)

    dim = problem.n_theta
    if problem.kind == "MILP":
        c_red = problem.c[free_idx]
        const = float(problem.c[fixed_one].sum()) if fixed_one else 0.0
        shift = AffineFunction.constant(const, dim)
        return Relaxation("LP", tuple(free_idx), tuple(free_bin),
                          A_full, b_full, W_full, shift, c=c_red, node=node)

    # MIQP: 0.5 x'Hx + (f + F theta)'x with x = (x_free, v_fixed)
    H = problem.H
    v = np.zeros(n)
    for i in node.fixed_one:
        v[i] = 1.0
    fixed_idx = sorted(fixed)
    H_ff = H[np.ix_(free_idx, free_idx)]
    f_red = problem.f[free_idx].astype(float)
    F_red = problem.f_theta[free_idx, :].astype(float)
    const = 0.0
    lin_theta = np.zeros(dim)
    if fixed_idx:
        v_fix = v[fixed_idx]
        H_fx = H[np.ix_(free_idx, fixed_idx)]
        f_red = f_red + H_fx @ v_fix
        H_xx = H[np.ix_(fixed_idx, fixed_idx)]
        const = float(0.5 * v_fix @ H_xx @ v_fix + problem.f[fixed_idx] @ v_fix)
        lin_theta = problem.f_theta[fixed_idx, :].T @ v_fix
    shift = AffineFunction.make(lin_theta, const)
    return Relaxation("QP", tuple(free_idx), tuple(free_bin),
                      A_full, b_full, W_full, shift,
                      H=H_ff, f=f_red, F=F_red, node=node)
