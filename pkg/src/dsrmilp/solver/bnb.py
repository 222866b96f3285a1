"""Best-first branch-and-bound over the dual simplex relaxation."""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LpRelaxation

PROVEN_GAP = 1e-6
FACTOR_CACHE_NODES = 256  # open nodes beyond this warm-start without a stored factor


@dataclass
class SolveReport:
    values: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    status: str  # optimal | infeasible | gap_limit | node_limit | time_limit
    lp_iterations: int = 0
    bound_trace: list[float] = field(default_factory=list, repr=False)
    incumbent_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "wall_time": self.wall_time,
            "lp_iterations": self.lp_iterations,
        }


def relative_gap(objective: float, bound: float) -> float:
    if not np.isfinite(objective):
        return np.inf
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))


def _most_fractional(x: np.ndarray, cand: np.ndarray, int_tol: float) -> int | None:
    vals = x[cand]
    frac = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
    if frac.max(initial=0.0) <= int_tol:
        return None
    best = frac.max()
    return int(cand[np.flatnonzero(frac >= best - 1e-12)[0]])


def solve_milp(model, gap_tol: float = 1e-6, time_limit: float = 300.0,
               node_limit: int | None = None, abs_gap_tol: float = 1e-6,
               int_tol: float = 1e-6) -> SolveReport:
    """Minimize `model` to the requested gap.

    Nodes are explored best bound first, deeper nodes first among equal
    bounds; the branching variable is the most fractional binary (lowest id
    on ties) and each child warm-starts from its parent's optimal basis.
    A node is discarded once it cannot beat the incumbent by more than
    ``min(gap_tol * max(1, |incumbent|), abs_gap_tol)``.
    """
    start = time.perf_counter()
    relax = LpRelaxation(model)
    bins = np.flatnonzero(relax.is_binary)
    incumbent = None
    inc_obj = np.inf
    nodes = 0
    lp_iters = 0
    bound_trace: list[float] = []
    inc_trace: list[float] = []

    def allowed(obj):
        return min(gap_tol * max(1.0, abs(obj)), abs_gap_tol)

    def report(status, bound):
        gap = relative_gap(inc_obj, bound) if incumbent is not None else np.inf
        return SolveReport(incumbent, float(inc_obj), float(bound), gap, nodes,
                           time.perf_counter() - start, status, lp_iters, bound_trace, inc_trace)

    if relax.infeasible:
        return report("infeasible", np.inf)

    seq = 0
    heap = [(-np.inf, 0, seq, relax.lb.copy(), relax.ub.copy(), None)]
    status = None
    bound = -np.inf
    pruned_floor = np.inf  # smallest bound among nodes dropped against the incumbent
    while heap:
        if time.perf_counter() - start > time_limit:
            status = "time_limit"
            break
        if node_limit is not None and nodes >= node_limit:
            status = "node_limit"
            break
        key, neg_depth, _, lb, ub, warm = heapq.heappop(heap)
        bound = max(bound, key)
        if incumbent is not None and inc_obj - key <= allowed(inc_obj):
            pruned_floor = min(pruned_floor, key)
            heap.clear()
            break
        nodes += 1
        bound_trace.append(bound)
        sol = relax.solve(lb, ub, warm)
        lp_iters += sol.iterations
        if sol.status != "optimal":
            continue
        obj = max(sol.objective, key)
        if incumbent is not None and inc_obj - obj <= allowed(inc_obj):
            pruned_floor = min(pruned_floor, obj)
            continue
        j = _most_fractional(sol.x, bins, int_tol)
        if j is None:
            if obj < inc_obj:
                incumbent = relax.expand(sol.x)
                inc_obj = model.evaluate(incumbent)
                inc_trace.append(inc_obj)
            continue
        down_ub = ub.copy()
        down_ub[j] = 0.0
        up_lb = lb.copy()
        up_lb[j] = 1.0
        children = [(lb, down_ub), (up_lb, ub)]
        if sol.x[j] >= 0.5:
            children.reverse()
        warm = sol.basis if len(heap) < FACTOR_CACHE_NODES else sol.basis[:2]
        for clb, cub in children:
            seq += 1
            heapq.heappush(heap, (obj, neg_depth - 1, seq, clb, cub, warm))

    if status is None:
        if incumbent is None:
            return report("infeasible", np.inf)
        final = min(inc_obj, pruned_floor)
        status = "optimal" if relative_gap(inc_obj, final) <= PROVEN_GAP else "gap_limit"
        return report(status, final)
    if heap:
        bound = max(bound, heap[0][0])
    return report(status, min(bound, inc_obj) if incumbent is not None else bound)
