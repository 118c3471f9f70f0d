"""Two-phase dense simplex with Bland's anti-cycling rule.

``LinearProgramForm`` is the canonical carrier for every problem formulation
in this package: maximize ``c @ x`` subject to rows ``(a, rel, b)`` with
``rel`` one of ``<=``, ``>=``, ``=``, and per-variable bounds.  ``solve_lp``
is deterministic for identical input.

An optional scipy backend (``engine="scipy"``, sparse HiGHS) sits behind the
same interface for instances too large for a dense tableau; the built-in
simplex is the reference implementation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._kernels import (
    STATUS_ITER_LIMIT,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    simplex_iterate,
)

PIVOT_TOL = 1e-9

LE, GE, EQ = "<=", ">=", "="
_RELATIONS = (LE, GE, EQ)


@dataclass
class LinearProgramForm:
    """Maximize ``objective @ x`` subject to constraint rows and bounds."""

    objective: np.ndarray
    row_coeffs: np.ndarray  # (m, n)
    row_relations: list[str]
    row_rhs: np.ndarray  # (m,)
    lower: np.ndarray  # (n,), -inf allowed
    upper: np.ndarray  # (n,), +inf allowed
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        if sparse.issparse(self.row_coeffs):
            self.row_coeffs = self.row_coeffs.tocsr().astype(np.float64)
        else:
            coeffs = np.asarray(self.row_coeffs, dtype=np.float64)
            if coeffs.size == 0:
                coeffs = coeffs.reshape(len(self.row_relations), self.objective.size)
            self.row_coeffs = coeffs.reshape(-1, self.objective.size) if coeffs.size else coeffs
        self.row_rhs = np.asarray(self.row_rhs, dtype=np.float64)
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if not self.names:
            self.names = [f"x{i}" for i in range(self.objective.size)]
        self.validate()

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.row_coeffs.shape[0]

    def validate(self):
        n = self.num_vars
        if self.row_coeffs.shape != (len(self.row_relations), n):
            raise ValueError("constraint matrix shape mismatch")
        if self.row_rhs.shape != (len(self.row_relations),):
            raise ValueError("rhs length mismatch")
        if not np.all(np.isfinite(self.row_rhs)):
            raise ValueError("rhs must be finite")
        for rel in self.row_relations:
            if rel not in _RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds length mismatch")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if len(self.names) != n:
            raise ValueError("names length mismatch")

    def with_objective(self, objective: np.ndarray) -> "LinearProgramForm":
        return LinearProgramForm(
            objective=np.asarray(objective, dtype=np.float64),
            row_coeffs=self.row_coeffs,
            row_relations=list(self.row_relations),
            row_rhs=self.row_rhs,
            lower=self.lower,
            upper=self.upper,
            names=list(self.names),
        )


@dataclass
class SolverSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    values: np.ndarray | None
    objective_value: float
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    bound: float = math.nan  # best dual/relaxation bound, where meaningful


class StandardForm:
    """Cached conversion of an LP to equality standard form.

    Shifted/split variables map the general form onto ``A y = b, y >= 0``.
    Reused by Frank-Wolfe, which re-solves the same polytope under many
    objectives.
    """

    def __init__(self, lp: LinearProgramForm):
        self.lp = lp
        n = lp.num_vars
        lower, upper = lp.lower, lp.upper

        # Column build: finite-lower vars are shifted (x = l + y); free vars
        # are split (x = y+ - y-).
        cols = []  # (var index, sign, shift)
        self._var_cols: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        self._shift = np.zeros(n)
        for j in range(n):
            if math.isfinite(lower[j]):
                self._shift[j] = lower[j]
                self._var_cols[j].append((len(cols), 1.0))
                cols.append(j)
            else:
                self._var_cols[j].append((len(cols), 1.0))
                cols.append(j)
                self._var_cols[j].append((len(cols), -1.0))
                cols.append(j)

        n_struct = len(cols)
        # the dense tableau is only for modest sizes, so sparse input densifies
        coeffs = lp.row_coeffs.toarray() if sparse.issparse(lp.row_coeffs) else lp.row_coeffs
        rows_a = []
        rows_b = []
        slack_rel = []
        for r in range(lp.num_rows):
            a = np.zeros(n_struct)
            for j in range(n):
                coef = coeffs[r, j]
                if coef != 0.0:
                    for col, sign in self._var_cols[j]:
                        a[col] = coef * sign
            b = lp.row_rhs[r] - coeffs[r] @ self._shift
            rows_a.append(a)
            rows_b.append(b)
            slack_rel.append(lp.row_relations[r])
        # Finite upper bounds become rows y_j <= u - l (or split pair <= u).
        for j in range(n):
            if math.isfinite(upper[j]):
                a = np.zeros(n_struct)
                for col, sign in self._var_cols[j]:
                    a[col] = sign
                rows_a.append(a)
                rows_b.append(upper[j] - self._shift[j])
                slack_rel.append(LE)

        m = len(rows_a)
        A = np.vstack(rows_a) if m else np.zeros((0, n_struct))
        b = np.asarray(rows_b)

        # Slack / surplus columns.
        slack_cols = []
        for r, rel in enumerate(slack_rel):
            if rel == LE:
                slack_cols.append((r, 1.0))
            elif rel == GE:
                slack_cols.append((r, -1.0))
        n_slack = len(slack_cols)
        full = np.zeros((m, n_struct + n_slack))
        full[:, :n_struct] = A
        for idx, (r, sign) in enumerate(slack_cols):
            full[r, n_struct + idx] = sign

        # Normalize to b >= 0 so a full artificial basis is feasible.
        neg = b < 0
        full[neg] *= -1.0
        b = np.where(neg, -b, b)

        self.A = full
        self.b = b
        self.n_struct = n_struct
        self.n_cols = n_struct + n_slack
        self.m = m
        self._cols = cols

        self._obj_const_base = float(lp.objective @ self._shift)

    def _std_objective(self, objective: np.ndarray) -> np.ndarray:
        c = np.zeros(self.n_cols)
        for j in range(self.lp.num_vars):
            coef = objective[j]
            if coef != 0.0:
                for col, sign in self._var_cols[j]:
                    c[col] += coef * sign
        return c

    def solve(self, objective: np.ndarray | None = None, max_iters: int | None = None) -> SolverSolution:
        start = time.perf_counter()
        lp_obj = self.lp.objective if objective is None else np.asarray(objective, dtype=np.float64)
        obj_const = float(lp_obj @ self._shift)
        m, n_cols = self.m, self.n_cols
        if max_iters is None:
            max_iters = 50 * (m + n_cols + 1)

        n_total = n_cols + m  # + artificials
        tableau = np.zeros((m + 1, n_total + 1))
        tableau[:m, :n_cols] = self.A
        tableau[:m, n_cols:n_total] = np.eye(m)
        tableau[:m, n_total] = self.b
        basis = np.arange(n_cols, n_total, dtype=np.int64)

        # Phase 1: maximize -sum(artificials); reduced costs after pricing out
        # the artificial basis are the column sums of A.
        tableau[m, :n_cols] = tableau[:m, :n_cols].sum(axis=0)
        tableau[m, n_total] = self.b.sum()

        status, it1 = simplex_iterate(tableau, basis, n_cols, PIVOT_TOL, max_iters)
        total_iters = it1
        elapsed = lambda: time.perf_counter() - start  # noqa: E731
        if status == STATUS_ITER_LIMIT:
            return SolverSolution("iteration_limit", None, math.nan, total_iters, wall_time=elapsed())
        # Objective-row rhs cell holds -z; phase 1 maximizes -sum(artificials),
        # so a positive residual means no feasible point exists.
        if tableau[m, n_total] > 1e-7 * max(1.0, abs(self.b).max() if m else 1.0):
            return SolverSolution("infeasible", None, math.nan, total_iters, wall_time=elapsed())

        # Drive leftover (degenerate) artificials out of the basis.
        drop_rows = []
        for i in range(m):
            if basis[i] >= n_cols:
                pivot_col = -1
                for j in range(n_cols):
                    if abs(tableau[i, j]) > PIVOT_TOL:
                        pivot_col = j
                        break
                if pivot_col < 0:
                    drop_rows.append(i)  # redundant constraint
                    continue
                piv = tableau[i, pivot_col]
                tableau[i, :] /= piv
                for r in range(m + 1):
                    if r != i and tableau[r, pivot_col] != 0.0:
                        tableau[r, :] -= tableau[r, pivot_col] * tableau[i, :]
                basis[i] = pivot_col
        if drop_rows:
            keep = [i for i in range(m) if i not in set(drop_rows)]
            tableau = tableau[keep + [m], :]
            basis = basis[keep]
            m = len(keep)

        # Phase 2: rebuild the objective row with the real costs.
        c_std = self._std_objective(lp_obj)
        tableau[m, :] = 0.0
        tableau[m, :n_cols] = c_std
        for i in range(m):
            coef = tableau[m, basis[i]]
            if coef != 0.0:
                tableau[m, :] -= coef * tableau[i, :]

        status, it2 = simplex_iterate(tableau, basis, n_cols, PIVOT_TOL, max_iters)
        total_iters += it2
        if status == STATUS_UNBOUNDED:
            return SolverSolution("unbounded", None, math.inf, total_iters, wall_time=elapsed())
        if status == STATUS_ITER_LIMIT:
            return SolverSolution("iteration_limit", None, math.nan, total_iters, wall_time=elapsed())

        y = np.zeros(self.n_cols)
        for i in range(m):
            if basis[i] < self.n_cols:
                y[basis[i]] = tableau[i, -1]
        x = self._shift.copy()
        for col, j in enumerate(self._cols):
            sign = next(s for c, s in self._var_cols[j] if c == col)
            x[j] += sign * y[col]
        objective_value = float(lp_obj @ x)
        return SolverSolution("optimal", x, objective_value, total_iters, wall_time=elapsed())


def solve_lp(lp: LinearProgramForm, max_iters: int | None = None, engine: str = "builtin") -> SolverSolution:
    """Solve an LP to optimality, or report infeasible/unbounded.

    The default engine is the built-in two-phase simplex.  ``engine="scipy"``
    delegates to scipy's sparse HiGHS solver through the same interface.
    """
    if engine == "scipy":
        return _solve_lp_scipy(lp)
    if engine != "builtin":
        raise ValueError(f"unknown engine {engine!r}")
    return StandardForm(lp).solve(max_iters=max_iters)


def _solve_lp_scipy(lp: LinearProgramForm) -> SolverSolution:
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    start = time.perf_counter()
    rel = np.array(lp.row_relations)
    ub_mask = rel == LE
    ge_mask = rel == GE
    eq_mask = rel == EQ
    coeffs = lp.row_coeffs if sparse.issparse(lp.row_coeffs) else csr_matrix(lp.row_coeffs)
    A_ub_rows = []
    b_ub = []
    if ub_mask.any():
        A_ub_rows.append(coeffs[np.flatnonzero(ub_mask)])
        b_ub.append(lp.row_rhs[ub_mask])
    if ge_mask.any():
        A_ub_rows.append(-coeffs[np.flatnonzero(ge_mask)])
        b_ub.append(-lp.row_rhs[ge_mask])
    A_ub = sparse.vstack(A_ub_rows, format="csr") if A_ub_rows else None
    b_ub = np.concatenate(b_ub) if b_ub else None
    A_eq = coeffs[np.flatnonzero(eq_mask)] if eq_mask.any() else None
    b_eq = lp.row_rhs[eq_mask] if eq_mask.any() else None
    # HiGHS's interior-point method (with crossover) is far faster than dual
    # simplex on large sparse path LPs; simplex stays the default at small
    # sizes where its vertex pivoting is cheap and IPM overhead dominates.
    method = "highs-ipm" if coeffs.nnz >= 5000 else "highs"
    kwargs = dict(
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=list(zip(lp.lower, lp.upper)),
    )
    res = linprog(-lp.objective, method=method, **kwargs)
    if method == "highs-ipm" and res.status not in (0, 2, 3):
        res = linprog(-lp.objective, method="highs", **kwargs)
    wall = time.perf_counter() - start
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "iteration_limit")
    values = res.x if res.status == 0 else None
    objective = float(-res.fun) if res.status == 0 else (math.inf if res.status == 3 else math.nan)
    iterations = int(getattr(res, "nit", 0) or 0)
    return SolverSolution(status, values, objective, iterations, wall_time=wall)
