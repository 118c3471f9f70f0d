"""Simplex pivot loop.

This is the hot kernel of the package: every LP, MILP node, and Frank-Wolfe
iteration funnels into :func:`simplex_iterate`.  Two implementations share one
code path; the decorated one is compiled by numba unless disabled (see
``popalloc._accel``).

Tableau layout: rows ``0..m-1`` are constraints, row ``m`` holds reduced costs
for a maximization; the last column is the right-hand side.  ``basis[i]`` is
the variable basic in row ``i``.  Bland's rule (lowest eligible index for both
entering and leaving variable) prevents cycling.
"""

import numpy as np

from .._accel import njit, NUMBA_ENABLED

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_ITER_LIMIT = 2


def _iterate(tableau, basis, n_enterable, tol, max_iters):
    m = tableau.shape[0] - 1
    rhs = tableau.shape[1] - 1
    iters = 0
    while iters < max_iters:
        # Bland: entering variable is the lowest index with positive reduced cost.
        enter = -1
        for j in range(n_enterable):
            if tableau[m, j] > tol:
                enter = j
                break
        if enter < 0:
            return STATUS_OPTIMAL, iters

        # Ratio test; ties broken by lowest basic variable index (Bland).
        leave = -1
        best_ratio = np.inf
        for i in range(m):
            coef = tableau[i, enter]
            if coef > tol:
                ratio = tableau[i, rhs] / coef
                if ratio < best_ratio - 1e-12 or (
                    ratio < best_ratio + 1e-12 and (leave < 0 or basis[i] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return STATUS_UNBOUNDED, iters

        pivot = tableau[leave, enter]
        tableau[leave, :] /= pivot
        for i in range(m + 1):
            if i != leave:
                factor = tableau[i, enter]
                if factor != 0.0:
                    tableau[i, :] -= factor * tableau[leave, :]
        basis[leave] = enter
        iters += 1
    return STATUS_ITER_LIMIT, iters


simplex_iterate_py = _iterate
simplex_iterate = njit(_iterate) if NUMBA_ENABLED else _iterate
