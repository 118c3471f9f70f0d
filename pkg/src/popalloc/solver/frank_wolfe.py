"""Frank-Wolfe (conditional gradient) maximization of a concave objective
over an LP-described polytope.

Each iteration linearizes the objective at the current point and calls the
simplex solver on the gradient direction; iterates are convex combinations of
feasible points, hence always feasible.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .lp import LinearProgramForm, SolverSolution, StandardForm

DEFAULT_MAX_ITERS = 5000


def maximize_concave_separable(
    lp_domain: LinearProgramForm,
    value_and_grad,
    start: np.ndarray,
    max_iters: int = DEFAULT_MAX_ITERS,
    gap_tol: float | None = None,
) -> SolverSolution:
    """Maximize a concave differentiable function over ``lp_domain``.

    ``value_and_grad(x)`` returns ``(f(x), grad f(x))``.  ``start`` must be
    strictly feasible with finite objective.  Step size is 2/(iter+2); the
    run stops once the Frank-Wolfe duality gap drops below ``gap_tol``
    (default ``1e-6 * n``) and returns the best iterate seen.
    """
    start_time = time.perf_counter()
    x = np.asarray(start, dtype=np.float64).copy()
    n = lp_domain.num_vars
    if gap_tol is None:
        gap_tol = 1e-6 * n

    f, grad = value_and_grad(x)
    if not math.isfinite(f):
        raise ValueError("start point has non-finite objective (infeasible or on domain boundary)")

    domain = StandardForm(lp_domain)
    best_x = x.copy()
    best_f = f
    lp_iters = 0
    gap = math.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        sub = domain.solve(objective=grad)
        lp_iters += sub.iterations
        if sub.status != "optimal":
            raise RuntimeError(f"direction subproblem returned {sub.status}")
        direction = sub.values - x
        gap = float(grad @ direction)
        if gap <= gap_tol:
            break
        x = x + (2.0 / (iters + 2.0)) * direction
        f, grad = value_and_grad(x)
        if f > best_f:
            best_f = f
            best_x = x.copy()

    status = "optimal" if gap <= gap_tol else "iteration_limit"
    return SolverSolution(
        status,
        best_x,
        best_f,
        iterations=lp_iters,
        nodes=iters,
        wall_time=time.perf_counter() - start_time,
        bound=best_f + max(gap, 0.0),
    )
