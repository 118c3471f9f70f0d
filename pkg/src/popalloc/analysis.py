"""Concentration bounds for random partitioning and their empirical check.

The simple assignment model: n jobs, r server types with counts n_s summing
to n, each job assigned one server, utility u[i, s].  Randomly dealing jobs
into k sub-problems loses at most the misplaced jobs times the largest
utility gap; the tail of that loss has a closed-form Chernoff/union bound.
A Monte Carlo simulator validates the bound, and a polynomial model predicts
solver speedup from sub-problem size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix


def chernoff_tail(delta: float, n_s: int, k: int) -> float:
    """Upper bound on P(type-s job count in one sub-problem exceeds its
    expectation n_s/k by a factor 1+delta): exp(-delta^2 n_s / ((2+delta) k))."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if n_s < 1 or k < 1:
        raise ValueError("n_s and k must be >= 1")
    return math.exp(-(delta**2) * n_s / ((2.0 + delta) * k))


def pop_gap_bound(delta: float, n: int, r: int, k: int) -> float:
    """Union bound over r types and k sub-problems on the probability that the
    partitioned optimality gap exceeds delta * u_maxgap * n.  Values above 1
    are returned as-is (the bound is vacuous there)."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if n < 1 or r < 1 or k < 1:
        raise ValueError("n, r, k must be >= 1")
    return r * k * math.exp(-(delta**2) * n / ((2.0 + delta) * r * k))


def speedup_model(k: int, var_degree: int = 2, parallel: bool = False, a: float = 2.373) -> float:
    """Predicted solver speedup at k sub-problems, assuming solve time grows
    as (variable count)^a and variables scale with size^var_degree."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if var_degree not in (2, 3):
        raise ValueError("var_degree must be 2 or 3")
    exponent = var_degree * a - (0 if parallel else 1)
    return float(k**exponent)


@dataclass(frozen=True)
class SimpleAssignmentInstance:
    """n jobs to be matched to r server types with fixed counts."""

    counts: tuple[int, ...]  # servers per type, sums to n
    utilities: np.ndarray  # (n, r)

    def __post_init__(self):
        u = np.asarray(self.utilities, dtype=np.float64)
        object.__setattr__(self, "utilities", u)
        if u.ndim != 2 or u.shape != (sum(self.counts), len(self.counts)):
            raise ValueError(
                f"utilities shape {u.shape} does not match counts {self.counts}"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("utilities must be finite")
        if any(c < 1 for c in self.counts):
            raise ValueError("every type count must be >= 1")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def r(self) -> int:
        return len(self.counts)

    @property
    def u_maxgap(self) -> float:
        u = self.utilities
        return float((u.max(axis=1) - u.min(axis=1)).max())


def two_point_instance(
    n: int, r: int, seed: int = 0, low: float = 0.0, high: float = 1.0
) -> SimpleAssignmentInstance:
    """Utilities drawn from {low, high}: each job likes each type or not."""
    if n % r:
        raise ValueError("n must be divisible by r")
    rng = np.random.default_rng(seed)
    u = np.where(rng.random((n, r)) < 0.5, low, high)
    # every job must like at least one type, else u_maxgap misses it
    flat = np.flatnonzero(u.max(axis=1) == low)
    u[flat, rng.integers(r, size=flat.size)] = high
    return SimpleAssignmentInstance(tuple([n // r] * r), u)


def _solve_assignment(utilities: np.ndarray, counts: np.ndarray) -> float:
    """Optimal total utility of the fractional assignment LP; the constraint
    polytope is a transportation polytope, so the LP optimum is integral."""
    n, r = utilities.shape
    if n == 0:
        return 0.0
    cols = n * r
    # per-job convexity rows (equality), then per-type capacity rows
    job_rows = csr_matrix(
        (np.ones(cols), (np.repeat(np.arange(n), r), np.arange(cols))), shape=(n, cols)
    )
    type_rows = csr_matrix(
        (np.ones(cols), (np.tile(np.arange(r), n), np.arange(cols))), shape=(r, cols)
    )
    res = linprog(
        c=-utilities.reshape(-1),
        A_ub=type_rows,
        b_ub=counts.astype(np.float64),
        A_eq=job_rows,
        b_eq=np.ones(n),
        bounds=(0, 1),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"assignment LP failed: {res.message}")
    return -float(res.fun)


@dataclass
class SimulationResult:
    trials: int
    gaps: np.ndarray  # optimality gap per trial
    exceedance: dict[float, float]  # delta -> empirical exceedance fraction
    bound: dict[float, float]  # delta -> closed-form bound
    mean_misplaced: float  # mean of sum_{s,t} q_{s,t} over trials
    u_maxgap: float = 0.0
    per_trial_misplaced: list = field(default_factory=list)


def simulate_simple_assignment(
    instance: SimpleAssignmentInstance,
    k: int,
    trials: int,
    delta,
    seed: int = 0,
) -> SimulationResult:
    """Deal jobs uniformly into k sub-problems, solve each optimally, and
    compare the summed utility against the full-problem optimum.

    Type-s server counts are split as evenly as possible (remainders spread
    round-robin).  Per-trial randomness comes from a counter-derived seed so
    results do not depend on execution order.  ``delta`` may be a float or a
    sequence; the result maps each value to its empirical exceedance of the
    threshold delta * u_maxgap * n and to the closed-form bound.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    deltas = [float(delta)] if np.isscalar(delta) else [float(d) for d in delta]
    for d in deltas:
        if d <= 0:
            raise ValueError("delta must be > 0")

    n, r = instance.n, instance.r
    u = instance.utilities
    u_maxgap = instance.u_maxgap
    full_opt = _solve_assignment(u, np.array(instance.counts))
    preferred = np.argmax(u, axis=1)

    # per-sub server counts: even split, remainder dealt round-robin
    sub_counts = np.zeros((k, r), dtype=np.int64)
    for s, count in enumerate(instance.counts):
        base, extra = divmod(count, k)
        sub_counts[:, s] = base
        for t in range(extra):
            sub_counts[t, s] += 1

    # each sub receives exactly as many jobs as it has seats, so the per-job
    # assignment constraint stays feasible even when counts do not divide k
    seats = sub_counts.sum(axis=1)
    boundaries = np.concatenate(([0], np.cumsum(seats)))

    gaps = np.empty(trials)
    misplaced_totals = np.empty(trials)
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        order = rng.permutation(n)
        total = 0.0
        q_total = 0.0
        for t in range(k):
            members = order[boundaries[t]:boundaries[t + 1]]
            total += _solve_assignment(u[members], sub_counts[t])
            # misplaced jobs: those preferring type s beyond the sub's share
            x = np.bincount(preferred[members], minlength=r)
            q_total += np.maximum(0, x - np.asarray(instance.counts) / k).sum()
        gap = full_opt - total
        if gap > q_total * u_maxgap + 1e-6 * max(1.0, abs(full_opt)):
            raise AssertionError(
                f"trial {trial}: gap {gap} exceeds misplacement bound {q_total * u_maxgap}"
            )
        gaps[trial] = gap
        misplaced_totals[trial] = q_total

    threshold_scale = u_maxgap * n
    exceedance = {
        d: float(np.mean(gaps >= d * threshold_scale)) if threshold_scale > 0 else 0.0
        for d in deltas
    }
    bound = {d: pop_gap_bound(d, n, r, k) for d in deltas}
    return SimulationResult(
        trials=trials,
        gaps=gaps,
        exceedance=exceedance,
        bound=bound,
        mean_misplaced=float(misplaced_totals.mean()),
        u_maxgap=u_maxgap,
        per_trial_misplaced=misplaced_totals.tolist(),
    )
