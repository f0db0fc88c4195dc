"""Serial B&B complexity certification: the main worklist algorithm, the
cut-condition evaluation, and the memory-bounded serial variant.

State machine of a work tuple:
  None  -- untouched (initial tuple only)
  Fin   -- last node fully resolved; certify the next pending node on pop
  UnFin -- relaxation certification paused; resume on pop
  CC    -- relaxation certified, cut conditions pending (memory-bounded mode)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .geometry import (Region, RegionStatus, ValueFunction, affine_range,
                       minimum_with_winners, quadratic_range, region_split_affine,
                       region_split_quadratic, region_status, AffineFunction,
                       QuadraticFunction)
from .problem import (MpProblem, Node, ROOT_NODE, branch, free_binaries,
                      make_relaxation, select_branch_index)
from .relax_cert import FIN, UNFIN, EngineState, solve_cert
from .settings import CertSettings, DEFAULT_SETTINGS

STATE_NONE = "None"
STATE_FIN = "Fin"
STATE_UNFIN = "UnFin"
STATE_CC = "CC"


class CertContext:
    """Per-run immutable problem data plus a relaxation cache."""

    def __init__(self, problem: MpProblem,
                 settings: CertSettings = DEFAULT_SETTINGS):
        self.problem = problem
        self.settings = settings
        self._relax = {}

    def relaxation(self, node: Node):
        rel = self._relax.get(node)
        if rel is None:
            rel = make_relaxation(self.problem, node)
            self._relax[node] = rel
        return rel


@dataclass(frozen=True)
class RegionTuple:
    region: Region
    pending: tuple  # pending nodes, popped from the end (LIFO)
    kappa_iter: int
    kappa_node: int
    upper: ValueFunction
    lower: ValueFunction
    state: str = STATE_NONE
    current_node: Optional[Node] = None
    engine_state: Optional[EngineState] = None
    optimizer: Optional[list] = None   # lifted per-variable map for current_node
    incumbent: Optional[list] = None   # optimizer achieving the upper bound
    history: tuple = ()                # nodes certified along this lineage
    path: tuple = ()                   # lineage id, lexicographic = creation order

    @property
    def kappa(self) -> tuple:
        return (self.kappa_iter, self.kappa_node)

    def is_undecided(self) -> bool:
        return region_status(self.region) == RegionStatus.UNDECIDED


def initial_tuple(problem: MpProblem) -> RegionTuple:
    return RegionTuple(
        region=Region.from_box(problem.theta_box),
        pending=(ROOT_NODE,),
        kappa_iter=0,
        kappa_node=0,
        upper=ValueFunction.plus_infinity(),
        lower=ValueFunction.plus_infinity(),
        state=STATE_NONE,
    )


class WorkList:
    """LIFO worklist with a recorded peak size."""

    def __init__(self):
        self._items = []
        self.peak = 0
        self.pushed = 0

    def push(self, item) -> None:
        self._items.append(item)
        self.pushed += 1
        if len(self._items) > self.peak:
            self.peak = len(self._items)

    def pop(self):
        return self._items.pop()

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)


@dataclass
class LoopStats:
    outer_iters: int = 0
    series: list = field(default_factory=list)  # |S| after each outer iteration
    peak: int = 0
    pushed: int = 0
    finalized: int = 0
    distributed: int = 0


@dataclass
class CertPartition:
    tuples: list
    provenance: dict = field(default_factory=dict)
    stats: Optional[LoopStats] = None

    def __len__(self) -> int:
        return len(self.tuples)

    def sorted_by_path(self) -> list:
        return sorted(self.tuples, key=lambda t: t.path)

    def locate(self, theta, tol: float = None) -> list:
        """All tuples whose region contains theta, in creation (path) order."""
        from .geometry import TOL_FEAS
        tol = TOL_FEAS if tol is None else tol
        theta = np.asarray(theta, dtype=float)
        return [t for t in self.sorted_by_path() if t.region.contains(theta, tol)]

    def worst_kappa(self) -> dict:
        """Worst-case counts over decided-nonempty regions; undecided listed apart."""
        wi = wn = 0
        undecided = []
        for t in self.tuples:
            if t.is_undecided():
                undecided.append({"kappa_iter": t.kappa_iter,
                                  "kappa_node": t.kappa_node})
                continue
            wi = max(wi, t.kappa_iter)
            wn = max(wn, t.kappa_node)
        return {"kappa_iter": wi, "kappa_node": wn, "undecided": undecided}

    def canonical(self) -> list:
        return [(t.path, t.region.fingerprint(), t.kappa_iter, t.kappa_node)
                for t in self.sorted_by_path()]


# ---------------------------------------------------------------------------
# cut-condition evaluation
# ---------------------------------------------------------------------------

def _dominance_sides(region: Region, lower: ValueFunction, upper: ValueFunction,
                     settings: CertSettings) -> list:
    """Split a region by sign(lower - upper); the cut side (>= -tie_tol, so
    ties cut) is emitted first.

    An unbounded lower bound is never dominance-cut; an unbounded upper bound
    dominates everything.
    """
    if upper.is_plus_inf or lower.is_minus_inf:
        return [(region, False)]
    if upper.is_minus_inf:
        return [(region, True)]
    tol = settings.tie_tol
    diff = lower.difference(upper)
    box = region.outer_box
    if isinstance(diff, AffineFunction):
        if diff.is_zero():
            return [(region, True)]
        if box is not None:
            lo, hi = affine_range(diff, box)
            if lo >= -tol:
                return [(region, True)]
            if hi <= -tol:
                return [(region, False)]
        keep, cut = region_split_affine(
            region, AffineFunction(diff.coeffs, diff.offset + tol))
    else:
        if diff.is_zero():
            return [(region, True)]
        if box is not None:
            lo, hi = quadratic_range(diff, box)
            if lo >= -tol:
                return [(region, True)]
            if hi <= -tol:
                return [(region, False)]
        keep, cut = region_split_quadratic(
            region, QuadraticFunction(diff.quad, diff.coeffs, diff.offset + tol))
    out = []
    if region_status(cut) != RegionStatus.EMPTY:
        out.append((cut, True))
    if region_status(keep) != RegionStatus.EMPTY:
        out.append((keep, False))
    if not out:
        out.append((region, False))
    return out


def _integer_feasible(optimizer: Optional[list], node: Node,
                      problem: MpProblem, settings: CertSettings) -> bool:
    """True when every free binary's optimizer component is constant 0 or 1."""
    free = free_binaries(problem, node)
    if optimizer is None:
        return not free
    for i in free:
        f = optimizer[i]
        if np.max(np.abs(f.coeff_array), initial=0.0) > settings.int_coeff_tol:
            return False
        if min(abs(f.offset), abs(f.offset - 1.0)) > settings.int_value_tol:
            return False
    return True


def cut_cert(reg: RegionTuple, lower: ValueFunction, node: Node,
             worklist: WorkList, ctx: CertContext) -> WorkList:
    """Evaluate the cut conditions for a certified node over reg's region.

    Order: infeasibility, dominance, integer feasibility, else branch. The
    node is assumed already removed from reg.pending; reg.optimizer carries
    the lifted optimizer map for the node.
    """
    settings = ctx.settings
    pushes = []

    def cut_tuple(region):
        return replace(reg, region=region, lower=ValueFunction.plus_infinity(),
                       state=STATE_FIN, current_node=None, optimizer=None,
                       engine_state=None)

    if lower.is_plus_inf:
        pushes.append(cut_tuple(reg.region))
    else:
        sides = _dominance_sides(reg.region, lower, reg.upper, settings)
        continue_regions = [r for (r, is_cut) in sides if not is_cut]
        pushes.extend(cut_tuple(r) for (r, is_cut) in sides if is_cut)
        if continue_regions:
            if _integer_feasible(reg.optimizer, node, ctx.problem, settings):
                for r_side in continue_regions:
                    for piece, vf, winner in minimum_with_winners(
                            r_side, reg.upper, lower):
                        inc = reg.incumbent if winner == 0 else reg.optimizer
                        pushes.append(replace(
                            reg, region=piece, upper=vf, incumbent=inc,
                            lower=ValueFunction.plus_infinity(),
                            state=STATE_FIN, current_node=None,
                            optimizer=None, engine_state=None))
            else:
                i = select_branch_index(node, ctx.problem)
                child_one, child_zero = branch(node, i)
                new_pending = reg.pending + (child_zero, child_one)
                for r_side in continue_regions:
                    pushes.append(replace(
                        reg, region=r_side, pending=new_pending,
                        lower=ValueFunction.plus_infinity(), state=STATE_FIN,
                        current_node=None, optimizer=None, engine_state=None))

    if len(pushes) == 1:
        worklist.push(pushes[0])
    else:
        for k, t in enumerate(pushes):
            worklist.push(replace(t, path=t.path + (k,)))
    return worklist


# ---------------------------------------------------------------------------
# main certification loop
# ---------------------------------------------------------------------------

def certify_loop(reg0: RegionTuple, ctx: CertContext, *,
                 mod: bool = False, n_max: Optional[int] = None,
                 distribute: Optional[Callable] = None,
                 stats: Optional[LoopStats] = None) -> list:
    """Shared worklist loop behind the serial and dynamic algorithms.

    With mod=False this is the plain algorithm: each certified subregion goes
    straight through cut_cert. With mod=True, certification pauses after
    n_max internal regions and cut-condition evaluation is deferred to a later
    pop (states UnFin / CC).
    """
    stats = stats if stats is not None else LoopStats()
    n = ctx.problem.n
    S = WorkList()
    S.push(reg0)
    final = []
    while S:
        stats.outer_iters += 1
        reg = S.pop()
        if mod and reg.state == STATE_CC:
            cut_cert(reg, reg.lower, reg.current_node, S, ctx)
        elif not reg.pending and (not mod or reg.state == STATE_FIN):
            final.append(reg)
            stats.finalized += 1
        else:
            node = reg.pending[-1]
            rest = reg.pending[:-1]
            resume = reg.engine_state if reg.state == STATE_UNFIN else None
            rel = ctx.relaxation(node)
            outs = solve_cert(rel, reg.region, resume, n_max, ctx.settings)
            multi = len(outs) > 1
            for j, out in enumerate(outs):
                path_j = reg.path + (j,) if multi else reg.path
                if out.state == FIN:
                    lifted = (rel.lift_optimizer(out.optimizer, n, node)
                              if out.optimizer is not None else None)
                    reg_j = replace(
                        reg, region=out.region, pending=rest,
                        kappa_iter=reg.kappa_iter + out.iterations,
                        kappa_node=reg.kappa_node + 1,
                        lower=out.lower,
                        state=STATE_CC if mod else STATE_FIN,
                        current_node=node, engine_state=None,
                        optimizer=lifted, history=reg.history + (node,),
                        path=path_j)
                    if mod:
                        S.push(reg_j)
                    else:
                        cut_cert(reg_j, out.lower, node, S, ctx)
                else:
                    reg_j = replace(
                        reg, region=out.region, pending=rest + (node,),
                        kappa_iter=reg.kappa_iter + out.iterations,
                        lower=ValueFunction.plus_infinity(),
                        state=STATE_UNFIN, current_node=node,
                        engine_state=out.engine_state, optimizer=None,
                        path=path_j)
                    S.push(reg_j)
            if distribute is not None:
                distribute(S, node, stats)
        stats.series.append(len(S))
    stats.peak = S.peak
    stats.pushed = S.pushed
    return final


def _check_initial(reg0: RegionTuple) -> None:
    if (reg0.pending != (ROOT_NODE,) or reg0.kappa_iter or reg0.kappa_node
            or not reg0.upper.is_plus_inf or reg0.state != STATE_NONE):
        raise ValueError("reg0 must be the standard initial tuple")


def bnb_cert_serial(reg0: RegionTuple, problem: MpProblem,
                    settings: CertSettings = DEFAULT_SETTINGS,
                    stats: Optional[LoopStats] = None) -> CertPartition:
    """Serial certification: partitions the parameter set into regions with
    piecewise-constant (kappa_iter, kappa_node) matching the online solver."""
    _check_initial(reg0)
    ctx = CertContext(problem, settings)
    stats = stats if stats is not None else LoopStats()
    final = certify_loop(reg0, ctx, mod=False, stats=stats)
    return CertPartition(final, {"algorithm": "serial"}, stats)


def bnb_cert_serial_mod(reg0: RegionTuple, problem: MpProblem, n_max: int,
                        settings: CertSettings = DEFAULT_SETTINGS,
                        stats: Optional[LoopStats] = None) -> CertPartition:
    """Memory-bounded serial certification: relaxation certification pauses
    after n_max internal regions and cut evaluation is deferred (states
    UnFin / CC); the final partition is pointwise-equivalent to the
    unmodified algorithm."""
    _check_initial(reg0)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ctx = CertContext(problem, settings)
    stats = stats if stats is not None else LoopStats()
    final = certify_loop(reg0, ctx, mod=True, n_max=n_max, stats=stats)
    return CertPartition(final, {"algorithm": "serial-mod", "n_max": n_max}, stats)
