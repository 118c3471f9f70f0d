"""Branch-and-bound over LP relaxations for problems with binary variables."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgramForm, SolverSolution, solve_lp

INT_TOL = 1e-6
DEFAULT_REL_GAP = 1e-4
DEFAULT_NODE_LIMIT = 100_000


@dataclass
class MilpForm:
    lp: LinearProgramForm
    binary_indices: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.binary_indices = frozenset(self.binary_indices)
        n = self.lp.num_vars
        for idx in self.binary_indices:
            if not 0 <= idx < n:
                raise ValueError(f"binary index {idx} out of range")
            if self.lp.lower[idx] < 0 or self.lp.upper[idx] > 1:
                raise ValueError(f"binary variable {idx} must have bounds within [0, 1]")


def _relative_gap(incumbent: float, bound: float) -> float:
    if math.isinf(bound):
        return math.inf
    return abs(bound - incumbent) / max(1.0, abs(incumbent))


def solve_milp(
    milp: MilpForm,
    rel_gap: float = DEFAULT_REL_GAP,
    node_limit: int = DEFAULT_NODE_LIMIT,
    engine: str = "builtin",
) -> SolverSolution:
    """Best-bound branch-and-bound, branching on the most fractional binary.

    Returns the incumbent with proven relative gap <= ``rel_gap``, or the best
    incumbent found within ``node_limit`` nodes (status ``iteration_limit``)
    with its residual gap in ``bound``.  ``engine="scipy"`` delegates the whole
    search to scipy's HiGHS branch-and-cut instead.
    """
    if rel_gap < 0:
        raise ValueError("rel_gap must be >= 0")
    if engine == "scipy":
        return _solve_milp_scipy(milp, rel_gap=rel_gap, node_limit=node_limit)
    if engine != "builtin":
        raise ValueError(f"unknown engine {engine!r}")
    start = time.perf_counter()
    binaries = sorted(milp.binary_indices)

    incumbent: np.ndarray | None = None
    incumbent_obj = -math.inf
    nodes_explored = 0
    lp_iterations = 0

    # Node: (-bound, tiebreak counter, lower, upper)
    counter = 0
    root = solve_lp(milp.lp, engine=engine)
    lp_iterations += root.iterations
    if root.status == "infeasible":
        return SolverSolution("infeasible", None, math.nan, lp_iterations, nodes=1,
                              wall_time=time.perf_counter() - start)
    if root.status == "unbounded":
        return SolverSolution("unbounded", None, math.inf, lp_iterations, nodes=1,
                              wall_time=time.perf_counter() - start)
    heap = [(-root.objective_value, counter, milp.lp.lower.copy(), milp.lp.upper.copy(), root)]

    while heap and nodes_explored < node_limit:
        neg_bound, _, lower, upper, relax = heapq.heappop(heap)
        bound = -neg_bound
        nodes_explored += 1
        if incumbent is not None and _relative_gap(incumbent_obj, bound) <= rel_gap:
            break  # best-bound node already within gap: proven
        x = relax.values

        # Most fractional binary.
        branch_var = -1
        worst = INT_TOL
        for idx in binaries:
            frac = abs(x[idx] - round(x[idx]))
            if frac > worst:
                worst = frac
                branch_var = idx
        if branch_var < 0:
            if relax.objective_value > incumbent_obj:
                incumbent = x
                incumbent_obj = relax.objective_value
            continue

        for fixed in (0.0, 1.0):
            child_lower = lower.copy()
            child_upper = upper.copy()
            child_lower[branch_var] = fixed
            child_upper[branch_var] = fixed
            child_lp = LinearProgramForm(
                objective=milp.lp.objective,
                row_coeffs=milp.lp.row_coeffs,
                row_relations=list(milp.lp.row_relations),
                row_rhs=milp.lp.row_rhs,
                lower=child_lower,
                upper=child_upper,
                names=list(milp.lp.names),
            )
            sol = solve_lp(child_lp, engine=engine)
            lp_iterations += sol.iterations
            if sol.status != "optimal":
                continue
            if incumbent is not None and sol.objective_value <= incumbent_obj:
                continue
            counter += 1
            heapq.heappush(heap, (-sol.objective_value, counter, child_lower, child_upper, sol))

    wall = time.perf_counter() - start
    best_bound = -heap[0][0] if heap else incumbent_obj
    if incumbent is None:
        status = "infeasible" if not heap else "iteration_limit"
        return SolverSolution(status, None, math.nan, lp_iterations, nodes=nodes_explored,
                              wall_time=wall, bound=best_bound)
    gap = _relative_gap(incumbent_obj, max(best_bound, incumbent_obj))
    status = "optimal" if gap <= rel_gap else "iteration_limit"
    return SolverSolution(status, incumbent, incumbent_obj, lp_iterations, nodes=nodes_explored,
                          wall_time=wall, bound=max(best_bound, incumbent_obj))


def _solve_milp_scipy(milp: MilpForm, rel_gap: float, node_limit: int) -> SolverSolution:
    from scipy import sparse
    from scipy.optimize import Bounds, LinearConstraint
    from scipy.optimize import milp as scipy_milp

    start = time.perf_counter()
    lp = milp.lp
    n = lp.num_vars
    integrality = np.zeros(n)
    integrality[sorted(milp.binary_indices)] = 1
    constraints = []
    if lp.num_rows:
        rel = np.array(lp.row_relations)
        lb = np.where(rel == "<=", -np.inf, lp.row_rhs)
        ub = np.where(rel == ">=", np.inf, lp.row_rhs)
        coeffs = lp.row_coeffs if sparse.issparse(lp.row_coeffs) else sparse.csr_matrix(lp.row_coeffs)
        constraints.append(LinearConstraint(coeffs, lb, ub))
    res = scipy_milp(
        -lp.objective,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lp.lower, lp.upper),
        options={"mip_rel_gap": rel_gap, "node_limit": node_limit},
    )
    wall = time.perf_counter() - start
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(
        res.status, "iteration_limit"
    )
    if res.x is None:
        objective = math.inf if status == "unbounded" else math.nan
        return SolverSolution(status, None, objective, 0,
                              nodes=int(res.mip_node_count or 0) if hasattr(res, "mip_node_count") else 0,
                              wall_time=wall)
    bound = -res.mip_dual_bound if res.mip_dual_bound is not None else -res.fun
    return SolverSolution(status, res.x, float(-res.fun), 0,
                          nodes=int(res.mip_node_count or 0),
                          wall_time=wall, bound=float(bound))
