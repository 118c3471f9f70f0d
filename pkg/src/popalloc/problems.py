"""Per-objective compilation to solver forms plus solve drivers.

Each allocation objective is compiled to a :class:`LinearProgramForm` or
:class:`MilpForm` and handed to the built-in solvers.  Max-min style
objectives use epigraph reformulations so the solver module stays
objective-agnostic.  Heuristic baselines (CSPF, greedy shard balancing) and
the load-balancing rebalance pass live here too.
"""

from __future__ import annotations

import heapq
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix

from .core import (
    Allocation,
    ClientRecord,
    ClientKind,
    CommodityPayload,
    LoadBalanceParams,
    Objective,
    PRESENCE_EPS,
    ProblemInstance,
    ResourceRecord,
    SolveReport,
    Topology,
    effective_throughput,
    evaluate_objective,
)
from .solver import EQ, GE, LE, LinearProgramForm, MilpForm, maximize_concave_separable, solve_lp, solve_milp

VALUE_EPS = 1e-12  # drop allocation entries below this


# ---------------------------------------------------------------------------
# Cluster scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EqualShareAllocation:
    """Reference allocation giving every job an equal time share of each
    worker type, used to normalize max-min fairness."""

    fractions: dict[tuple[str, str], float]  # (job id, type tag) -> time fraction

    def get(self, job_id: str, type_tag: str) -> float:
        return self.fractions.get((job_id, type_tag), 0.0)

    def throughput(self, instance: ProblemInstance, client: ClientRecord) -> float:
        return sum(
            client.payload.throughputs[r.type_tag] * self.get(client.id, r.type_tag)
            for r in instance.resources
        )


def compute_equal_allocation(instance: ProblemInstance) -> EqualShareAllocation:
    """Equal time share: each job gets share_i * min(1, C/Z) of its unit time
    on type i, where share_i is type i's fraction of cluster capacity, C the
    total worker count and Z the total requested GPU count."""
    total_workers = sum(r.capacity for r in instance.resources)
    if total_workers <= 0:
        raise ValueError("instance has no workers")
    total_gpus = sum(c.demand for c in instance.clients)
    cap = 1.0 if total_gpus == 0 else min(1.0, total_workers / total_gpus)
    fractions = {}
    for client in instance.clients:
        for res in instance.resources:
            fractions[(client.id, res.type_tag)] = (res.capacity / total_workers) * cap
    return EqualShareAllocation(fractions)


def _scheduling_polytope(instance: ProblemInstance):
    """Shared constraint set: per-job time budget and per-type worker
    capacity.  Variables are A[job, type] in instance order."""
    jobs = instance.clients
    types = instance.resources
    n = len(jobs) * len(types)
    names = [f"A[{j.id},{r.id}]" for j in jobs for r in types]

    rows, rels, rhs = [], [], []
    for ji, job in enumerate(jobs):
        a = np.zeros(n)
        a[ji * len(types):(ji + 1) * len(types)] = 1.0
        rows.append(a)
        rels.append(LE)
        rhs.append(1.0)
    for ri, res in enumerate(types):
        a = np.zeros(n)
        for ji, job in enumerate(jobs):
            a[ji * len(types) + ri] = job.demand
        rows.append(a)
        rels.append(LE)
        rhs.append(res.capacity)
    return jobs, types, n, names, rows, rels, rhs


def _extract_scheduling_alloc(instance, values, names_offset=0):
    jobs, types = instance.clients, instance.resources
    entries = {}
    idx = names_offset
    for job in jobs:
        for res in types:
            v = values[idx]
            idx += 1
            if v > VALUE_EPS:
                entries[(job.id, res.id, None)] = min(float(v), 1.0)
    return Allocation(entries)


def build_maxmin_lp(instance: ProblemInstance, equal: EqualShareAllocation) -> LinearProgramForm:
    """Epigraph form of max-min normalized effective throughput: maximize the
    floor variable subject to every job's weighted throughput ratio reaching
    it, plus the scheduling polytope."""
    jobs, types, n, names, rows, rels, rhs = _scheduling_polytope(instance)
    lam = n  # floor variable index
    for ji, job in enumerate(jobs):
        thr_eq = equal.throughput(instance, job)
        if thr_eq <= 0:
            raise ValueError(f"job {job.id}: zero equal-share throughput")
        a = np.zeros(n + 1)
        scale = job.demand / (job.weight * thr_eq)
        for ri, res in enumerate(types):
            a[ji * len(types) + ri] = scale * job.payload.throughputs[res.type_tag]
        a[lam] = -1.0
        rows.append(a)
        rels.append(GE)
        rhs.append(0.0)
    row_matrix = np.zeros((len(rows), n + 1))
    for i, row in enumerate(rows):
        row_matrix[i, : row.size] = row
    objective = np.zeros(n + 1)
    objective[lam] = 1.0
    return LinearProgramForm(
        objective=objective,
        row_coeffs=row_matrix,
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n + 1),
        upper=np.full(n + 1, np.inf),
        names=names + ["lambda"],
    )


def build_makespan_lp(instance: ProblemInstance) -> LinearProgramForm:
    """Reciprocal epigraph: maximize the minimum throughput-per-step rate; the
    makespan is its reciprocal.  Equivalent to minimizing the max duration
    since throughputs are positive at any useful optimum."""
    for job in instance.clients:
        if job.payload.num_steps <= 0:
            raise ValueError(f"job {job.id}: num_steps must be > 0")
    jobs, types, n, names, rows, rels, rhs = _scheduling_polytope(instance)
    mu = n
    for ji, job in enumerate(jobs):
        a = np.zeros(n + 1)
        for ri, res in enumerate(types):
            a[ji * len(types) + ri] = job.payload.throughputs[res.type_tag]
        a[mu] = -job.payload.num_steps
        rows.append(a)
        rels.append(GE)
        rhs.append(0.0)
    row_matrix = np.zeros((len(rows), n + 1))
    for i, row in enumerate(rows):
        row_matrix[i, : row.size] = row
    objective = np.zeros(n + 1)
    objective[mu] = 1.0
    return LinearProgramForm(
        objective=objective,
        row_coeffs=row_matrix,
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n + 1),
        upper=np.full(n + 1, np.inf),
        names=names + ["mu"],
    )


def solve_max_min_fairness(instance, engine="builtin"):
    equal = compute_equal_allocation(instance)
    lp = build_maxmin_lp(instance, equal)
    sol = solve_lp(lp, engine=engine)
    if sol.status != "optimal":
        return Allocation({}), _failed_report(sol)
    alloc = _extract_scheduling_alloc(instance, sol.values)
    return alloc, SolveReport(
        objective_value=float(sol.objective_value),
        feasible=True,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        solver_stats={"iterations": sol.iterations},
    )


def solve_makespan(instance, engine="builtin"):
    lp = build_makespan_lp(instance)
    sol = solve_lp(lp, engine=engine)
    if sol.status != "optimal":
        return Allocation({}), _failed_report(sol, sense="min")
    mu = float(sol.values[-1])
    alloc = _extract_scheduling_alloc(instance, sol.values)
    starved = mu <= 0
    return alloc, SolveReport(
        objective_value=math.inf if starved else 1.0 / mu,
        feasible=not starved,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        sense="min",
        solver_stats={"iterations": sol.iterations},
    )


def solve_proportional_fairness(instance, engine="builtin", max_iters=5000, gap_tol=None):
    """Frank-Wolfe on sum of log effective throughputs over the scheduling
    polytope, started strictly inside at 0.9x the equal-share allocation."""
    jobs, types, n, names, rows, rels, rhs = _scheduling_polytope(instance)
    row_matrix = np.vstack(rows) if rows else np.zeros((0, n))
    domain = LinearProgramForm(
        objective=np.zeros(n),
        row_coeffs=row_matrix,
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n),
        upper=np.full(n, np.inf),
        names=names,
    )
    throughput_matrix = np.array(
        [[job.payload.throughputs[r.type_tag] for r in types] for job in jobs]
    )
    if np.any(throughput_matrix.sum(axis=1) <= 0):
        raise ValueError("a job has zero throughput on every type; log objective undefined")

    equal = compute_equal_allocation(instance)
    start = 0.9 * np.array([equal.get(j.id, r.type_tag) for j in jobs for r in types])

    T = throughput_matrix
    n_types = len(types)

    def value_and_grad(x):
        A = x.reshape(len(jobs), n_types)
        thr = (T * A).sum(axis=1)
        if np.any(thr <= 0):
            return -math.inf, np.zeros_like(x)
        return float(np.log(thr).sum()), (T / thr[:, None]).reshape(-1)

    start_time = time.perf_counter()
    sol = maximize_concave_separable(domain, value_and_grad, start, max_iters=max_iters, gap_tol=gap_tol)
    wall = time.perf_counter() - start_time
    alloc = _extract_scheduling_alloc(instance, sol.values)
    return alloc, SolveReport(
        objective_value=float(sol.objective_value),
        feasible=True,
        runtime_total=wall,
        runtime_subproblems=[wall],
        solver_stats={"fw_iterations": sol.nodes, "lp_iterations": sol.iterations},
    )


# ---------------------------------------------------------------------------
# Traffic engineering
# ---------------------------------------------------------------------------

DEFAULT_MAX_PATHS = 4


def _lex_shortest_path(adj, src, dst, banned_edges, banned_nodes):
    """Fewest-hop path, ties broken by lexicographically smallest edge-id
    sequence.  Returns a node list or None."""
    heap = [(0, (), src, (src,))]
    best_seen = {}
    while heap:
        hops, edge_key, node, path = heapq.heappop(heap)
        if node == dst:
            return list(path)
        seen = best_seen.get(node)
        if seen is not None and seen <= (hops, edge_key):
            continue
        best_seen[node] = (hops, edge_key)
        for neighbor, edge_id in adj.get(node, ()):
            if edge_id in banned_edges or neighbor in banned_nodes or neighbor in path:
                continue
            heapq.heappush(
                heap, (hops + 1, edge_key + (edge_id,), neighbor, path + (neighbor,))
            )
    return None


def k_shortest_paths(topology: Topology, src: str, dst: str, p_max: int = DEFAULT_MAX_PATHS):
    """Yen's algorithm over hop count; returns up to ``p_max`` simple paths as
    edge-id tuples, shortest first.  Disconnected pairs yield an empty list."""
    adj: dict[str, list] = {}
    for s, d, _ in topology.edges:
        adj.setdefault(s, []).append((d, topology.edge_id(s, d)))
    for node in adj:
        adj[node].sort(key=lambda item: item[1])

    first = _lex_shortest_path(adj, src, dst, frozenset(), frozenset())
    if first is None:
        return []
    accepted = [first]
    candidates: list[tuple[int, tuple, tuple]] = []
    seen_candidates = set()

    while len(accepted) < p_max:
        prev = accepted[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned_edges = set()
            for path in accepted:
                if path[: i + 1] == root and len(path) > i + 1:
                    banned_edges.add(topology.edge_id(path[i], path[i + 1]))
            banned_nodes = frozenset(root[:-1])
            tail = _lex_shortest_path(adj, spur, dst, frozenset(banned_edges), banned_nodes)
            if tail is None:
                continue
            candidate = tuple(root[:-1]) + tuple(tail)
            if candidate in seen_candidates:
                continue
            seen_candidates.add(candidate)
            edge_key = tuple(
                topology.edge_id(candidate[j], candidate[j + 1])
                for j in range(len(candidate) - 1)
            )
            heapq.heappush(candidates, (len(edge_key), edge_key, candidate))
        while candidates:
            _, edge_key, candidate = heapq.heappop(candidates)
            if list(candidate) not in accepted:
                accepted.append(list(candidate))
                break
        else:
            break

    out = []
    for path in accepted:
        out.append(
            tuple(topology.edge_id(path[j], path[j + 1]) for j in range(len(path) - 1))
        )
    return out


def build_flow_instance(
    topology: Topology,
    demands: list[tuple[str, str, float]],
    objective: Objective = Objective.TOTAL_FLOW,
    p_max: int = DEFAULT_MAX_PATHS,
    concurrent_flow_fractional: bool = True,
) -> ProblemInstance:
    """Assemble a traffic-engineering instance with precomputed path sets."""
    path_cache: dict[tuple[str, str], tuple] = {}
    clients = []
    for i, (src, dst, demand) in enumerate(demands):
        key = (src, dst)
        if key not in path_cache:
            path_cache[key] = tuple(k_shortest_paths(topology, src, dst, p_max))
        clients.append(
            ClientRecord(
                id=f"c{i}",
                kind=ClientKind.COMMODITY,
                demand=demand,
                payload=CommodityPayload(src=src, dst=dst, paths=path_cache[key]),
            )
        )
    resources = tuple(
        ResourceRecord(id=topology.edge_id(s, d), type_tag="edge", capacity=c)
        for s, d, c in topology.edges
    )
    return ProblemInstance(
        objective=objective,
        clients=tuple(clients),
        resources=resources,
        topology=topology,
        concurrent_flow_fractional=concurrent_flow_fractional,
    )


def _usable_paths(instance):
    """(client, path index, edge tuple) for paths fully inside the topology."""
    present = set(instance.topology.edge_capacities())
    usable = []
    for client in instance.clients:
        for pidx, path in enumerate(client.payload.paths):
            if all(edge in present for edge in path):
                usable.append((client, pidx, path))
    return usable


def _flow_lp_parts(instance):
    usable = _usable_paths(instance)
    n = len(usable)
    names = [f"x[{client.id},{pidx}]" for client, pidx, _ in usable]
    edge_caps = instance.topology.edge_capacities()

    by_client: dict[str, list[int]] = {}
    by_edge: dict[str, list[int]] = {}
    for col, (client, pidx, path) in enumerate(usable):
        by_client.setdefault(client.id, []).append(col)
        for edge in path:
            by_edge.setdefault(edge, []).append(col)
    return usable, n, names, edge_caps, by_client, by_edge


def build_total_flow_lp(instance: ProblemInstance) -> LinearProgramForm:
    """Maximize total satisfied demand over the precomputed path sets."""
    usable, n, names, edge_caps, by_client, by_edge = _flow_lp_parts(instance)
    data, row_idx, col_idx, rels, rhs = [], [], [], [], []
    demand_of = {c.id: c.demand for c in instance.clients}
    row = 0
    for cid in sorted(by_client):
        for col in by_client[cid]:
            data.append(1.0)
            row_idx.append(row)
            col_idx.append(col)
        rels.append(LE)
        rhs.append(demand_of[cid])
        row += 1
    for edge in sorted(by_edge):
        for col in by_edge[edge]:
            data.append(1.0)
            row_idx.append(row)
            col_idx.append(col)
        rels.append(LE)
        rhs.append(edge_caps[edge])
        row += 1
    return LinearProgramForm(
        objective=np.ones(n),
        row_coeffs=coo_matrix((data, (row_idx, col_idx)), shape=(row, n)).tocsr(),
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n),
        upper=np.full(n, np.inf),
        names=names,
    )


def build_concurrent_flow_lp(instance: ProblemInstance) -> LinearProgramForm:
    """Epigraph of the max-concurrent-flow objective.  In fractional mode the
    floor variable is the worst demand-satisfaction ratio; otherwise it is the
    worst absolute flow, matching the literal min-flow objective."""
    usable, n, names, edge_caps, by_client, by_edge = _flow_lp_parts(instance)
    alpha = n
    data, row_idx, col_idx, rels, rhs = [], [], [], [], []
    demand_of = {c.id: c.demand for c in instance.clients}
    routable = set(by_client)
    row = 0

    def put(r, c, v):
        data.append(v)
        row_idx.append(r)
        col_idx.append(c)

    for cid in sorted(by_client):
        for col in by_client[cid]:
            put(row, col, 1.0)
        rels.append(LE)
        rhs.append(demand_of[cid])
        row += 1
        for col in by_client[cid]:
            put(row, col, 1.0)
        put(row, alpha, -demand_of[cid] if instance.concurrent_flow_fractional else -1.0)
        rels.append(GE)
        rhs.append(0.0)
        row += 1
    for client in instance.clients:
        if client.id not in routable:
            put(row, alpha, 1.0)
            rels.append(LE)
            rhs.append(0.0)
            row += 1
            break  # one unroutable commodity pins the floor to zero
    for edge in sorted(by_edge):
        for col in by_edge[edge]:
            put(row, col, 1.0)
        rels.append(LE)
        rhs.append(edge_caps[edge])
        row += 1
    objective = np.zeros(n + 1)
    objective[alpha] = 1.0
    return LinearProgramForm(
        objective=objective,
        row_coeffs=coo_matrix((data, (row_idx, col_idx)), shape=(row, n + 1)).tocsr(),
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n + 1),
        upper=np.full(n + 1, np.inf),
        names=names + ["alpha"],
    )


def _extract_flow_alloc(instance, lp, values):
    entries = {}
    for name, value in zip(lp.names, values):
        if not name.startswith("x[") or value <= VALUE_EPS:
            continue
        cid, pidx = name[2:-1].rsplit(",", 1)
        entries[(cid, None, int(pidx))] = float(value)
    return Allocation(entries)


def solve_total_flow(instance, engine="builtin"):
    lp = build_total_flow_lp(instance)
    if lp.num_vars == 0:  # no commodity has a usable path
        return Allocation({}), SolveReport(0.0, True, 0.0)
    sol = solve_lp(lp, engine=engine)
    if sol.status != "optimal":
        return Allocation({}), _failed_report(sol)
    alloc = _extract_flow_alloc(instance, lp, sol.values)
    return alloc, SolveReport(
        objective_value=float(sol.objective_value),
        feasible=True,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        solver_stats={"iterations": sol.iterations},
    )


def solve_concurrent_flow(instance, engine="builtin"):
    lp = build_concurrent_flow_lp(instance)
    sol = solve_lp(lp, engine=engine)
    if sol.status != "optimal":
        return Allocation({}), _failed_report(sol)
    alloc = _extract_flow_alloc(instance, lp, sol.values)
    return alloc, SolveReport(
        objective_value=float(sol.values[-1]),
        feasible=True,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        solver_stats={"iterations": sol.iterations},
    )


def baseline_cspf(instance, engine="builtin"):
    """Constrained-shortest-path-first heuristic: commodities in demand order,
    each routed on its first precomputed path with residual capacity."""
    del engine
    start = time.perf_counter()
    residual = dict(instance.topology.edge_capacities())
    entries = {}
    order = sorted(instance.clients, key=lambda c: (-c.demand, c.id))
    for client in order:
        for pidx, path in enumerate(client.payload.paths):
            if not path or any(e not in residual for e in path):
                continue
            bottleneck = min(residual[e] for e in path)
            if bottleneck <= VALUE_EPS:
                continue
            amount = min(client.demand, bottleneck)
            entries[(client.id, None, pidx)] = amount
            for e in path:
                residual[e] -= amount
            break
    alloc = Allocation(entries)
    wall = time.perf_counter() - start
    return alloc, SolveReport(
        objective_value=evaluate_objective(instance, alloc),
        feasible=True,
        runtime_total=wall,
        runtime_subproblems=[wall],
        method="cspf",
    )


# ---------------------------------------------------------------------------
# Shard load balancing
# ---------------------------------------------------------------------------


def _lb_window(instance):
    params = instance.lb_params or LoadBalanceParams()
    total = sum(c.demand for c in instance.clients)
    avg = params.average_load
    if avg is None:
        avg = total / len(instance.resources)
    return avg, params.tolerance * avg


def build_load_balance_milp(instance: ProblemInstance) -> MilpForm:
    """Minimize moved footprint subject to the per-server load window, full
    assignment of every shard's queries, and server memory.  The movement
    indicator is linked by A <= A' with A' binary."""
    shards = instance.clients
    servers = instance.resources
    ns, nv = len(shards), len(servers)
    n = 2 * ns * nv  # A block then A' block
    avg, eps = _lb_window(instance)

    def a_idx(i, j):
        return i * nv + j

    def ab_idx(i, j):
        return ns * nv + i * nv + j

    names = [f"A[{s.id},{v.id}]" for s in shards for v in servers] + [
        f"Ab[{s.id},{v.id}]" for s in shards for v in servers
    ]
    rows, rels, rhs = [], [], []
    for i, shard in enumerate(shards):
        a = np.zeros(n)
        for j in range(nv):
            a[a_idx(i, j)] = 1.0
        rows.append(a)
        rels.append(EQ)
        rhs.append(1.0)
    for j, server in enumerate(servers):
        a = np.zeros(n)
        for i, shard in enumerate(shards):
            a[a_idx(i, j)] = shard.demand
        rows.append(a.copy())
        rels.append(LE)
        rhs.append(avg + eps)
        rows.append(a)
        rels.append(GE)
        rhs.append(avg - eps)
        mem = np.zeros(n)
        for i, shard in enumerate(shards):
            mem[ab_idx(i, j)] = shard.payload.footprint
        rows.append(mem)
        rels.append(LE)
        rhs.append(server.capacity)
    for i in range(ns):
        for j in range(nv):
            a = np.zeros(n)
            a[a_idx(i, j)] = 1.0
            a[ab_idx(i, j)] = -1.0
            rows.append(a)
            rels.append(LE)
            rhs.append(0.0)

    objective = np.zeros(n)
    for i, shard in enumerate(shards):
        for j, server in enumerate(servers):
            if server.id != shard.payload.home_server:
                objective[ab_idx(i, j)] = -shard.payload.footprint  # maximize -cost
    lp = LinearProgramForm(
        objective=objective,
        row_coeffs=np.vstack(rows),
        row_relations=rels,
        row_rhs=np.array(rhs),
        lower=np.zeros(n),
        upper=np.ones(n),
        names=names,
    )
    return MilpForm(lp, frozenset(range(ns * nv, n)))


def solve_load_balance(instance, engine="builtin", rel_gap=1e-4, node_limit=100_000):
    milp = build_load_balance_milp(instance)
    sol = solve_milp(milp, rel_gap=rel_gap, node_limit=node_limit, engine=engine)
    if sol.values is None:
        return Allocation({}), _failed_report(sol, sense="min")
    entries = {}
    idx = 0
    for shard in instance.clients:
        for server in instance.resources:
            v = sol.values[idx]
            idx += 1
            if v > VALUE_EPS:
                entries[(shard.id, server.id, None)] = min(float(v), 1.0)
    alloc = Allocation(entries)
    return alloc, SolveReport(
        objective_value=-float(sol.objective_value),
        feasible=True,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        sense="min",
        solver_stats={"nodes": sol.nodes, "iterations": sol.iterations},
    )


def rebalance_shards(plan, coalesced: Allocation, instance: ProblemInstance) -> Allocation:
    """Cross-sub-problem post-pass: sub-problems balance around their own
    average, so the coalesced placement can sit outside the global window.
    Greedily shift the cheapest (smallest-footprint) shard fractions from the
    most to the least loaded server until the window holds."""
    del plan
    avg, eps = _lb_window(instance)
    entries = dict(coalesced.entries)
    servers = {r.id: r for r in instance.resources}
    shards = {c.id: c for c in instance.clients}

    def server_load(sid):
        return sum(
            value * shards[cid].demand
            for (cid, rid, _), value in entries.items()
            if rid == sid
        )

    loads = {sid: server_load(sid) for sid in servers}

    def server_mem(sid):
        return sum(
            shards[cid].payload.footprint
            for (cid, rid, _), value in entries.items()
            if rid == sid and value > PRESENCE_EPS
        )

    slack = 1e-9 * max(avg, 1.0)
    evictions = 0
    for _ in range(max(1, len(shards) * len(servers))):
        hot = max(loads, key=lambda s: (loads[s], s))
        coldest = min(loads, key=lambda s: (loads[s], s))
        if loads[hot] <= avg + eps + slack and loads[coldest] >= avg - eps - slack:
            break
        moved = False
        # Receivers in increasing load order: the coldest server can be
        # memory-full, in which case a warmer under-loaded one still helps.
        for cold in sorted(servers, key=lambda s: (loads[s], s)):
            if cold == hot or loads[cold] >= loads[hot] - slack:
                break
            amount = min(loads[hot] - avg, avg - loads[cold])
            if amount <= 0:
                amount = (loads[hot] - loads[cold]) / 2.0

            # Candidate shards on the hot server, cheapest footprint first;
            # drain the full transfer amount across as many as needed.
            candidates = sorted(
                (
                    (shards[cid].payload.footprint, cid, value)
                    for (cid, rid, _), value in entries.items()
                    if rid == hot and value > PRESENCE_EPS
                ),
                key=lambda item: (item[0], item[1]),
            )
            for footprint, cid, value in candidates:
                if amount <= slack:
                    break
                shard = shards[cid]
                already_on_cold = entries.get((cid, cold, None), 0.0) > PRESENCE_EPS
                if not already_on_cold and server_mem(cold) + footprint > servers[cold].capacity:
                    continue
                movable_load = value * shard.demand
                take = min(amount, movable_load)
                if take <= 0:
                    continue
                frac = take / shard.demand if shard.demand > 0 else value
                frac = min(frac, value)
                entries[(cid, hot, None)] = value - frac
                if entries[(cid, hot, None)] <= VALUE_EPS:
                    del entries[(cid, hot, None)]
                entries[(cid, cold, None)] = entries.get((cid, cold, None), 0.0) + frac
                loads[hot] -= frac * shard.demand
                loads[cold] += frac * shard.demand
                amount -= take
                moved = True
            if moved:
                break
        if not moved:
            # A load-starved server can be memory-full, blocking every direct
            # move into it.  Evict its smallest-load shard to the least loaded
            # server with room, freeing memory for a heavier inbound fraction.
            if evictions >= len(shards):
                break
            victims = sorted(
                (
                    (value * shards[cid].demand, shards[cid].payload.footprint, cid, value)
                    for (cid, rid, _), value in entries.items()
                    if rid == coldest and value > PRESENCE_EPS
                ),
            )
            for vload, footprint, cid, value in victims:
                targets = sorted(
                    (
                        s
                        for s in servers
                        if s != coldest
                        and (
                            entries.get((cid, s, None), 0.0) > PRESENCE_EPS
                            or server_mem(s) + footprint <= servers[s].capacity
                        )
                        and loads[s] + vload <= avg + eps + slack
                    ),
                    key=lambda s: (loads[s], s),
                )
                if not targets:
                    continue
                tgt = targets[0]
                entries[(cid, tgt, None)] = entries.get((cid, tgt, None), 0.0) + value
                del entries[(cid, coldest, None)]
                loads[coldest] -= vload
                loads[tgt] += vload
                evictions += 1
                moved = True
                break
            if not moved:
                break

    hot = max(loads, key=loads.get)
    cold = min(loads, key=loads.get)
    if loads[hot] > avg + eps + slack or loads[cold] < avg - eps - slack:
        warnings.warn(
            f"rebalance left residual load-window violation "
            f"(max {loads[hot]:.4g}, min {loads[cold]:.4g}, window {avg:.4g}+-{eps:.4g})"
        )
    return Allocation(entries)


def baseline_greedy_balance(instance, engine="builtin"):
    """Greedy whole-shard rebalancing: keep moving the highest-load shard off
    the most loaded server onto the least loaded one while that improves the
    worst deviation."""
    del engine
    start = time.perf_counter()
    avg, eps = _lb_window(instance)
    servers = {r.id: r for r in instance.resources}
    placement = {c.id: c.payload.home_server for c in instance.clients}
    loads = {sid: 0.0 for sid in servers}
    mems = {sid: 0.0 for sid in servers}
    for c in instance.clients:
        loads[placement[c.id]] += c.demand
        mems[placement[c.id]] += c.payload.footprint

    max_iters = len(instance.clients) * len(servers)
    for _ in range(max_iters):
        hot = max(loads, key=lambda s: (loads[s], s))
        cold = min(loads, key=lambda s: (loads[s], s))
        if loads[hot] <= avg + eps and loads[cold] >= avg - eps:
            break
        worst = max(loads[hot] - avg, avg - loads[cold])
        moved = False
        for shard in sorted(
            (c for c in instance.clients if placement[c.id] == hot),
            key=lambda c: (-c.demand, c.id),
        ):
            if mems[cold] + shard.payload.footprint > servers[cold].capacity:
                continue
            new_hot = loads[hot] - shard.demand
            new_cold = loads[cold] + shard.demand
            if max(abs(new_hot - avg), abs(new_cold - avg)) >= worst:
                continue
            placement[shard.id] = cold
            loads[hot] = new_hot
            loads[cold] = new_cold
            mems[hot] -= shard.payload.footprint
            mems[cold] += shard.payload.footprint
            moved = True
            break
        if not moved:
            break

    alloc = Allocation({(cid, sid, None): 1.0 for cid, sid in placement.items()})
    wall = time.perf_counter() - start
    return alloc, SolveReport(
        objective_value=evaluate_objective(instance, alloc),
        feasible=not _lb_violated(loads, avg, eps),
        runtime_total=wall,
        runtime_subproblems=[wall],
        method="greedy",
        sense="min",
    )


def _lb_violated(loads, avg, eps):
    slack = 1e-9 * max(avg, 1.0)
    return any(l > avg + eps + slack or l < avg - eps - slack for l in loads.values())


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

_DRIVERS = {
    Objective.MAX_MIN_FAIRNESS: solve_max_min_fairness,
    Objective.PROPORTIONAL_FAIRNESS: solve_proportional_fairness,
    Objective.MINIMIZE_MAKESPAN: solve_makespan,
    Objective.TOTAL_FLOW: solve_total_flow,
    Objective.CONCURRENT_FLOW: solve_concurrent_flow,
    Objective.MIN_SHARD_MOVEMENT: solve_load_balance,
}


def solve_instance(instance: ProblemInstance, engine: str = "builtin", **options):
    """Solve an instance exactly with its native formulation."""
    if not instance.clients:
        return Allocation({}), SolveReport(0.0, True, 0.0, method="exact")
    return _DRIVERS[instance.objective](instance, engine=engine, **options)


def _failed_report(sol, sense="max"):
    return SolveReport(
        objective_value=math.nan,
        feasible=False,
        runtime_total=sol.wall_time,
        runtime_subproblems=[sol.wall_time],
        sense=sense,
        solver_stats={"status": sol.status},
    )
