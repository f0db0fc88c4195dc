"""Reproducible problem generation: random MILP/MIQP families, a canonical
desk-scale test instance, and a condensed hybrid-MPC MIQP built from a shipped
numeric fixture (linearized cart-pendulum between elastic walls).

Random draws use the counter-based Philox generator keyed by the seed, so
instances are bit-identical across platforms and runs. Stream layout: matrices
are filled row-major, in field declaration order (c | Hbar, f, f_theta, then
A, b, W).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .geometry import Box
from .problem import MpProblem, ProblemError

GEN_VERSION = "philox-v1"
RIDGE = 1e-6


@dataclass(frozen=True)
class GenSpec:
    kind: str  # 'MILP' | 'MIQP'
    n_b: int
    seed: int

    @property
    def n_c(self) -> int:
        return self.n_b

    @property
    def n(self) -> int:
        return 2 * self.n_b

    @property
    def m(self) -> int:
        return self.n + 8

    @property
    def n_theta(self) -> int:
        return math.ceil(self.n_b / 4)

    def theta_box(self) -> Box:
        return Box.make([-0.5] * self.n_theta, [0.5] * self.n_theta)


def gen_random(spec: GenSpec) -> MpProblem:
    """Random instance: normal coefficients, b ~ U([0, 2]), binaries last."""
    if spec.n_b < 1:
        raise ProblemError("n_b must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    n, m, nth = spec.n, spec.m, spec.n_theta
    kw = {}
    if spec.kind == "MILP":
        kw["c"] = rng.standard_normal(n)
    elif spec.kind == "MIQP":
        hbar = rng.standard_normal((n, n))
        kw["H"] = hbar @ hbar.T + RIDGE * np.eye(n)
        kw["f"] = rng.standard_normal(n)
        kw["f_theta"] = rng.standard_normal((n, nth))
    else:
        raise ProblemError(f"unknown kind {spec.kind!r}")
    A = rng.standard_normal((m, n))
    b = rng.uniform(0.0, 2.0, m)
    W = rng.standard_normal((m, nth))
    return MpProblem(kind=spec.kind, n_c=spec.n_c, n_b=spec.n_b,
                     binary_set=tuple(range(spec.n_c, n)),
                     A=A, b=b, W=W, theta_box=spec.theta_box(), **kw)


def p_tiny() -> MpProblem:
    """min -x_c - 2 x_b  s.t.  x_c + x_b <= 1 + theta, x_c >= 0, x_b binary."""
    return MpProblem(
        kind="MILP", n_c=1, n_b=1, binary_set=(1,),
        A=np.array([[1.0, 1.0], [-1.0, 0.0]]),
        b=np.array([1.0, 0.0]),
        W=np.array([[1.0], [0.0]]),
        theta_box=Box.make([-0.5], [0.5]),
        c=np.array([-1.0, -2.0]),
    )


@dataclass(frozen=True)
class PendulumSpec:
    horizon: int
    fixture: Optional[str] = None  # path override; defaults to the shipped file


def _load_pendulum_fixture(path: Optional[str]) -> dict:
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ProblemError(f"pendulum fixture file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ProblemError(f"invalid pendulum fixture file: {path}") from exc
    else:
        ref = resources.files("bbcert").joinpath("data/pendulum_v1.json")
        try:
            data = json.loads(ref.read_text())
        except FileNotFoundError as exc:
            raise ProblemError(
                "pendulum fixture file not found: data/pendulum_v1.json") from exc
    required = {"version", "A", "B", "Q", "R", "P", "wall_distance",
                "stiffness", "big_m", "u1_max", "state_bounds", "tip_row"}
    missing = required - set(data)
    if missing:
        name = path or "data/pendulum_v1.json"
        raise ProblemError(f"invalid pendulum fixture {name}: missing {sorted(missing)}")
    return data


def pendulum_miqp(spec: PendulumSpec) -> MpProblem:
    """Condensed hybrid-MPC MIQP for the cart-pendulum between elastic walls.

    Per horizon step the decision variables are [u1, u2, dR, dL] (force, signed
    contact force, wall-contact binaries) and there are 19 rows: input bounds,
    the big-M contact logic, and the next-state box. The initial state is the
    parameter vector. Dimensions: n = 4N, n_b = 2N, m = 19N, n_theta = 4.
    """
    N = spec.horizon
    if N < 1:
        raise ProblemError("horizon must be >= 1")
    fx = _load_pendulum_fixture(spec.fixture)
    Ad = np.array(fx["A"], dtype=float)
    Bd = np.array(fx["B"], dtype=float)
    Q = np.array(fx["Q"], dtype=float)
    R = np.array(fx["R"], dtype=float)
    P = np.array(fx["P"], dtype=float)
    dist = float(fx["wall_distance"])
    k = float(fx["stiffness"])
    M = float(fx["big_m"])
    u1_max = float(fx["u1_max"])
    sb = np.array(fx["state_bounds"], dtype=float)
    tip = np.array(fx["tip_row"], dtype=float)

    nx = Ad.shape[0]
    nu = Bd.shape[1]
    n = 4 * N
    n_vars_step = 4

    # prediction: z_t = Ad^t theta + sum_{s<t} Ad^(t-1-s) Bd u_s
    powers = [np.linalg.matrix_power(Ad, t) for t in range(N + 1)]

    def state_maps(t):
        """z_t as (G_theta (nx x nx), G_x (nx x n)) acting on [theta; x]."""
        Gx = np.zeros((nx, n))
        for s in range(t):
            blk = powers[t - 1 - s] @ Bd
            Gx[:, n_vars_step * s: n_vars_step * s + nu] = blk
        return powers[t], Gx

    rows_A, rows_b, rows_W = [], [], []

    def add_row(ax, b0, wt):
        rows_A.append(ax)
        rows_b.append(b0)
        rows_W.append(wt)

    for t in range(N):
        base = n_vars_step * t
        e_u1 = np.zeros(n); e_u1[base] = 1.0
        e_u2 = np.zeros(n); e_u2[base + 1] = 1.0
        e_dR = np.zeros(n); e_dR[base + 2] = 1.0
        e_dL = np.zeros(n); e_dL[base + 3] = 1.0
        Gt_th, Gt_x = state_maps(t)
        tip_x = tip @ Gt_x
        tip_th = tip @ Gt_th
        # input bounds
        add_row(e_u1, u1_max, np.zeros(nx))
        add_row(-e_u1, u1_max, np.zeros(nx))
        # contact force only with the matching wall flag
        add_row(e_u2 - M * e_dR, 0.0, np.zeros(nx))
        add_row(-e_u2 - M * e_dL, 0.0, np.zeros(nx))
        # at most one wall in contact
        add_row(e_dR + e_dL, 1.0, np.zeros(nx))
        # penetration forces the flag
        add_row(tip_x - M * e_dR, dist, -tip_th)
        add_row(-tip_x - M * e_dL, dist, tip_th)
        # flagged contact pins u2 to the elastic force
        add_row(e_u2 - k * tip_x + M * e_dR, M - k * dist, -k * tip_th)
        add_row(-e_u2 + k * tip_x + M * e_dR, M + k * dist, k * tip_th)
        add_row(e_u2 - k * tip_x + M * e_dL, M + k * dist, -k * tip_th)
        add_row(-e_u2 + k * tip_x + M * e_dL, M - k * dist, k * tip_th)
        # next-state box
        G1_th, G1_x = state_maps(t + 1)
        for i in range(nx):
            add_row(G1_x[i], sb[i], -G1_th[i])
            add_row(-G1_x[i], sb[i], G1_th[i])

    A = np.vstack(rows_A)
    b = np.array(rows_b)
    W = np.vstack(rows_W)

    # condensed quadratic cost over predicted states and inputs
    E = np.zeros((nu * N, n))
    for t in range(N):
        E[nu * t: nu * (t + 1), n_vars_step * t: n_vars_step * t + nu] = np.eye(nu)
    Gamma = np.vstack([powers[t] for t in range(1, N + 1)])
    Phi = np.zeros((nx * N, nu * N))
    for t in range(1, N + 1):
        for s in range(t):
            Phi[nx * (t - 1): nx * t, nu * s: nu * (s + 1)] = powers[t - 1 - s] @ Bd
    Qt = np.kron(np.eye(N), Q)
    Qt[-nx:, -nx:] = P
    Rt = np.kron(np.eye(N), R)
    PhiE = Phi @ E
    H = 2.0 * (PhiE.T @ Qt @ PhiE + E.T @ Rt @ E) + RIDGE * np.eye(n)
    H = 0.5 * (H + H.T)
    f_theta = 2.0 * PhiE.T @ Qt @ Gamma
    f = np.zeros(n)

    binary = tuple(sorted(
        [n_vars_step * t + 2 for t in range(N)] +
        [n_vars_step * t + 3 for t in range(N)]))
    return MpProblem(kind="MIQP", n_c=2 * N, n_b=2 * N, binary_set=binary,
                     A=A, b=b, W=W,
                     theta_box=Box.make(-sb, sb),
                     H=H, f=f, f_theta=f_theta)
