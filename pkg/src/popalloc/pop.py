"""Partition / map / reduce decomposition of granular allocation problems.

The pipeline: optionally granularize (client splitting by repeated demand
halving, resource splitting into per-sub-problem capacity shares), deal
clients and resources into k sub-instances, solve each with the original
formulation, and coalesce the sub-allocations.  Concatenated sub-allocations
are feasible for the original instance by construction.

All randomness flows through splitmix64 + Fisher-Yates below so that a seed
pins the partition exactly, independent of worker count or platform.
"""

from __future__ import annotations

import heapq
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .core import (
    Allocation,
    ClientRecord,
    check_feasibility,
    FLOW_OBJECTIVES,
    MINIMIZE_OBJECTIVES,
    Objective,
    ProblemInstance,
    ResourceRecord,
    SolveReport,
)

SHARD_RESOURCES = "shard_resources"
SPLIT_RESOURCES = "split_resources"

_MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class SplitMix:
    """Tiny deterministic PRNG used for all partitioning decisions."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state, out = splitmix64(self.state)
        return out

    def randrange(self, n: int) -> int:
        # Rejection sampling keeps the draw unbiased.
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class VirtualClientMap:
    """real client id -> virtual clients carrying shares of its demand."""

    mapping: dict[str, tuple[ClientRecord, ...]]

    def virtual_clients(self) -> list[ClientRecord]:
        out = []
        for real_id in self.mapping:
            out.extend(self.mapping[real_id])
        return out

    def parent_of(self) -> dict[str, str]:
        return {v.id: real for real, vs in self.mapping.items() for v in vs}


@dataclass
class PartitionPlan:
    k: int
    sub_instances: list[ProblemInstance]
    client_assignment: dict[str, int]  # virtual client id -> sub-problem index
    resource_mode: str
    seed: int
    virtual_map: VirtualClientMap
    resource_parent: dict[str, str] = field(default_factory=dict)  # virtual res id -> real


def split_clients(clients: list[ClientRecord], t: float) -> VirtualClientMap:
    """Granularize by halving the largest demands.

    Repeatedly pops the client with the largest splitting attribute off a
    max-heap and replaces it with two half-demand copies, until the number of
    virtual clients would exceed ``(1 + t) * n``.  ``t = 0`` disables
    splitting.  Heap ties break toward the smaller client id.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0 or not clients:
        return VirtualClientMap({c.id: (c,) for c in clients})

    n = len(clients)
    for c in clients:
        if "~" in c.id:
            raise ValueError(f"client id {c.id!r}: '~' is reserved for virtual clients")
    heap = [(-c.demand, c.id, c) for c in clients]
    heapq.heapify(heap)
    counters: dict[str, int] = {}
    while len(heap) <= (1 + t) * n:
        neg_demand, vid, client = heapq.heappop(heap)
        half = -neg_demand / 2.0
        root = vid.split("~", 1)[0]
        serial = counters.get(root, 0)
        for offset in range(2):
            copy = ClientRecord(
                id=f"{root}~{serial + offset}",
                kind=client.kind,
                demand=half,
                weight=client.weight,
                payload=client.payload,
            )
            heapq.heappush(heap, (-half, copy.id, copy))
        counters[root] = serial + 2

    by_root: dict[str, list[ClientRecord]] = {c.id: [] for c in clients}
    for _, vid, client in heap:
        by_root[vid.split("~", 1)[0]].append(client)
    mapping = {c.id: tuple(sorted(by_root[c.id], key=lambda v: v.id)) for c in clients}
    return VirtualClientMap(mapping)


def split_resources(resources: list[ResourceRecord], k: int) -> list[ResourceRecord]:
    """Replace each resource with k virtual children at 1/k capacity."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return list(resources)
    out = []
    for res in resources:
        for i in range(k):
            out.append(
                ResourceRecord(
                    id=f"{res.id}#{i}",
                    type_tag=res.type_tag,
                    capacity=res.capacity / k,
                    is_virtual=True,
                    parent_id=res.id,
                )
            )
    return out


def default_resource_mode(objective: Objective) -> str:
    # Links may need to be used by any commodity, so traffic engineering keeps
    # every edge in every sub-problem at reduced capacity.
    return SPLIT_RESOURCES if objective in FLOW_OBJECTIVES else SHARD_RESOURCES


def _deal_resources(instance, k, mode, rng):
    """Per-sub-problem resource lists (and topologies for flow instances)."""
    resource_parent: dict[str, str] = {}
    if instance.objective in FLOW_OBJECTIVES:
        if mode == SPLIT_RESOURCES:
            topo = instance.topology.scaled(1.0 / k)
            subs = []
            for i in range(k):
                res = [
                    ResourceRecord(f"{r.id}#{i}", r.type_tag, r.capacity / k, True, r.id)
                    for r in instance.resources
                ]
                subs.append((res, topo))
                for r in res:
                    resource_parent[r.id] = r.parent_id
            return subs, resource_parent
        # Disjoint-link mode: each edge lands in exactly one sub-problem.
        edges = list(instance.topology.edges)
        rng.shuffle(edges)
        sub_edges = [[] for _ in range(k)]
        for i, edge in enumerate(edges):
            sub_edges[i % k].append(edge)
        subs = []
        from .core import Topology

        for i in range(k):
            topo = Topology(instance.topology.name, instance.topology.nodes, tuple(sub_edges[i]))
            present = set(topo.edge_capacities())
            res = [r for r in instance.resources if r.id in present]
            subs.append((res, topo))
        return subs, resource_parent

    # Group physical resources by type and deal them round-robin; a single
    # record with integer capacity (e.g. a GPU-type worker pool) is dealt as
    # that many units.
    sub_resources = [[] for _ in range(k)]
    by_type: dict[str, list[ResourceRecord]] = {}
    for r in instance.resources:
        by_type.setdefault(r.type_tag, []).append(r)
    for type_tag in sorted(by_type):
        group = by_type[type_tag]
        if mode == SPLIT_RESOURCES:
            for r in group:
                for i in range(k):
                    vid = f"{r.id}#{i}"
                    sub_resources[i].append(
                        ResourceRecord(vid, r.type_tag, r.capacity / k, True, r.id)
                    )
                    resource_parent[vid] = r.id
            continue
        if len(group) == 1 and float(group[0].capacity).is_integer() and group[0].capacity >= k:
            r = group[0]
            units = int(r.capacity)
            base, extra = divmod(units, k)
            order = list(range(k))
            rng.shuffle(order)
            for rank, i in enumerate(order):
                cap = base + (1 if rank < extra else 0)
                if cap > 0:
                    vid = f"{r.id}#{i}"
                    sub_resources[i].append(ResourceRecord(vid, r.type_tag, float(cap), True, r.id))
                    resource_parent[vid] = r.id
        else:
            group = sorted(group, key=lambda r: r.id)
            rng.shuffle(group)
            for i, r in enumerate(group):
                sub_resources[i % k].append(r)
    return [(res, None) for res in sub_resources], resource_parent


def _assemble(instance, k, assignment, virtual_clients, dealt, resource_parent, mode, seed, vmap):
    sub_clients = [[] for _ in range(k)]
    for client in virtual_clients:
        sub_clients[assignment[client.id]].append(client)
    sub_instances = []
    for i in range(k):
        resources, topo = dealt[i]
        sub_instances.append(
            ProblemInstance(
                objective=instance.objective,
                clients=tuple(sub_clients[i]),
                resources=tuple(resources),
                topology=topo,
                lb_params=instance.lb_params,
                concurrent_flow_fractional=instance.concurrent_flow_fractional,
            )
        )
    return PartitionPlan(
        k=k,
        sub_instances=sub_instances,
        client_assignment=assignment,
        resource_mode=mode,
        seed=seed,
        virtual_map=vmap,
        resource_parent=resource_parent,
    )


def _max_shard_k(instance, mode):
    """Largest k for which every sub-problem gets at least one resource.

    Disjoint dealing cannot populate more sub-problems than there are
    indivisible units (servers, worker-pool units, edges); a sub-problem
    with clients but no resources is infeasible by construction.
    """
    if mode != SHARD_RESOURCES:
        return sys.maxsize
    if instance.objective in FLOW_OBJECTIVES:
        return max(1, len(instance.topology.edges))
    best = 1
    by_type: dict[str, list[ResourceRecord]] = {}
    for r in instance.resources:
        by_type.setdefault(r.type_tag, []).append(r)
    for group in by_type.values():
        if len(group) == 1 and float(group[0].capacity).is_integer() and group[0].capacity >= 1:
            best = max(best, int(group[0].capacity))
        else:
            best = max(best, len(group))
    return best


def _prepare(instance, k, seed, t, resource_mode):
    if k < 1:
        raise ValueError("k must be >= 1")
    mode = resource_mode or default_resource_mode(instance.objective)
    limit = _max_shard_k(instance, mode)
    if k > limit:
        warnings.warn(
            f"k={k} exceeds the {limit} indivisible resource units available in "
            f"{SHARD_RESOURCES} mode; using k={limit} so every sub-problem "
            "receives at least one resource"
        )
        k = limit
    vmap = split_clients(list(instance.clients), t)
    virtual_clients = sorted(vmap.virtual_clients(), key=lambda c: c.id)
    if k > len(virtual_clients):
        raise ValueError(f"k={k} exceeds the number of virtual clients ({len(virtual_clients)})")
    rng = SplitMix(seed)
    dealt, resource_parent = _deal_resources(instance, k, mode, rng)
    return k, mode, vmap, virtual_clients, rng, dealt, resource_parent


def partition_random(
    instance: ProblemInstance,
    k: int,
    seed: int = 0,
    t: float = 0.0,
    resource_mode: str | None = None,
) -> PartitionPlan:
    """Shuffle virtual clients and deal them round-robin into k sub-problems."""
    k, mode, vmap, clients, rng, dealt, parents = _prepare(instance, k, seed, t, resource_mode)
    rng.shuffle(clients)
    assignment = {c.id: i % k for i, c in enumerate(clients)}
    return _assemble(instance, k, assignment, clients, dealt, parents, mode, seed, vmap)


def partition_power_of_two(
    instance: ProblemInstance,
    k: int,
    seed: int = 0,
    t: float = 0.0,
    resource_mode: str | None = None,
) -> PartitionPlan:
    """Two-choice placement: each client goes to whichever of two random
    candidate sub-problems keeps the running demand total closer to the
    fair per-sub-problem share.  Ties break toward the lower index."""
    k, mode, vmap, clients, rng, dealt, parents = _prepare(instance, k, seed, t, resource_mode)
    rng.shuffle(clients)
    target = sum(c.demand for c in clients) / k
    totals = [0.0] * k
    assignment = {}
    for client in clients:
        a = rng.randrange(k)
        b = rng.randrange(k)
        lo, hi = min(a, b), max(a, b)

        def deviation(i):
            return abs(totals[i] + client.demand - target)

        choice = lo if deviation(lo) <= deviation(hi) else hi
        assignment[client.id] = choice
        totals[choice] += client.demand
    return _assemble(instance, k, assignment, clients, dealt, parents, mode, seed, vmap)


def partition_skewed(
    instance: ProblemInstance,
    k: int,
    seed: int = 0,
    t: float = 0.0,
    resource_mode: str | None = None,
) -> PartitionPlan:
    """Adversarial control: sorted contiguous blocks, largest demands first."""
    k, mode, vmap, clients, rng, dealt, parents = _prepare(instance, k, seed, t, resource_mode)
    ordered = sorted(clients, key=lambda c: (-c.demand, c.id))
    block = math.ceil(len(ordered) / k)
    assignment = {c.id: min(i // block, k - 1) for i, c in enumerate(ordered)}
    return _assemble(instance, k, assignment, clients, dealt, parents, mode, seed, vmap)


PARTITIONERS = {
    "random": partition_random,
    "power2": partition_power_of_two,
    "skewed": partition_skewed,
}


def coalesce(plan: PartitionPlan, sub_allocs: list[Allocation]) -> Allocation:
    """Reduce step: concatenate sub-allocations, remap virtual resources to
    their parents, and combine each real client's virtual shares.

    Combination happens in demand-scaled space: a virtual client's share of
    the splitting attribute weighs its allocation.  For flow objectives the
    allocation value is the absolute flow, so this reduces to a plain sum;
    for fraction-valued allocations (time shares, query fractions) the
    weighting keeps the coalesced fractions within the parent's budget, which
    a plain sum would overshoot whenever a client was split.
    """
    if len(sub_allocs) != plan.k:
        raise ValueError(f"expected {plan.k} sub-allocations, got {len(sub_allocs)}")
    parent_client = plan.virtual_map.parent_of()

    fraction_valued = plan.sub_instances[0].objective not in FLOW_OBJECTIVES
    weight: dict[str, float] = {}
    if fraction_valued:
        for children in plan.virtual_map.mapping.values():
            if len(children) == 1:
                continue
            total = sum(c.demand for c in children)
            for child in children:
                weight[child.id] = child.demand / total if total > 0 else 1.0 / len(children)

    entries: dict = {}
    for alloc in sub_allocs:
        for (cid, rid, pidx), value in alloc.entries.items():
            if value == 0.0:
                continue
            real_client = parent_client.get(cid, cid)
            real_resource = plan.resource_parent.get(rid, rid) if rid is not None else None
            key = (real_client, real_resource, pidx)
            entries[key] = entries.get(key, 0.0) + value * weight.get(cid, 1.0)
    return Allocation(entries)


def run_pop(
    instance: ProblemInstance,
    k: int,
    t: float = 0.0,
    partitioner: str = "random",
    seed: int = 0,
    parallelism: int = 1,
    resource_mode: str | None = None,
    engine: str = "builtin",
    solver_options: dict | None = None,
) -> tuple[Allocation, SolveReport]:
    """Full POP pipeline: granularize, partition, solve sub-problems (the map
    step, parallel up to ``parallelism``), coalesce, and for load balancing
    apply the cross-sub-problem rebalance pass.

    The result is deterministic for a fixed seed regardless of parallelism.
    """
    from . import problems

    try:
        partition = PARTITIONERS[partitioner]
    except KeyError:
        raise ValueError(f"unknown partitioner {partitioner!r}") from None

    attempt_seed = seed
    widen = 1.0
    last_error = None
    fresh_retries = 3
    max_attempts = fresh_retries + 3
    for attempt in range(max_attempts):
        plan = partition(instance, k, attempt_seed, t, resource_mode)
        if widen > 1.0:
            plan = _widen_lb_tolerance(plan, widen)
        try:
            alloc, report = _map_reduce(plan, parallelism, engine, solver_options, problems)
        except SubProblemInfeasible as exc:
            # A sub-cluster can randomly receive an unluckily skewed share of
            # load or of memory footprint; re-deal with fresh seeds first,
            # then widen the window (re-dealing each time as well).
            last_error = exc
            if instance.objective is not Objective.MIN_SHARD_MOVEMENT:
                raise
            attempt_seed += 1
            if attempt >= fresh_retries - 1:
                widen *= 2.0
                warnings.warn(
                    f"load-balance sub-problems infeasible after re-dealing; "
                    f"widening tolerance x{widen}"
                )
            continue
        if instance.objective is not Objective.MIN_SHARD_MOVEMENT:
            break
        # Sub-problems balance around their own averages, so the coalesced
        # placement can sit outside the global window; rebalance, and if the
        # greedy pass cannot restore the window for this deal, re-deal.
        final = attempt == max_attempts - 1
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            candidate = problems.rebalance_shards(plan, alloc, instance)
        if not check_feasibility(instance, candidate) or final:
            for item in caught:
                warnings.warn_explicit(
                    item.message, item.category, item.filename, item.lineno
                )
            alloc = candidate
            break
        attempt_seed += 1
    else:
        raise last_error

    report.method = f"pop-k{k}-t{t}-{partitioner}"
    report.objective_value = _safe_objective(instance, alloc)
    if instance.objective in MINIMIZE_OBJECTIVES:
        report.sense = "min"
    if instance.objective is Objective.MINIMIZE_MAKESPAN and math.isinf(report.objective_value):
        report.feasible = False  # some job was starved of all resources
    return alloc, report


class SubProblemInfeasible(RuntimeError):
    def __init__(self, index: int, detail: str = ""):
        super().__init__(f"sub-problem {index} infeasible{': ' + detail if detail else ''}")
        self.index = index


def _widen_lb_tolerance(plan: PartitionPlan, factor: float) -> PartitionPlan:
    from dataclasses import replace

    from .core import LoadBalanceParams

    subs = []
    for sub in plan.sub_instances:
        params = sub.lb_params or LoadBalanceParams()
        subs.append(replace(sub, lb_params=LoadBalanceParams(params.tolerance * factor, params.average_load)))
    plan.sub_instances = subs
    return plan


def _solve_sub(args):
    """Solve one sub-problem; module-level so it pickles for worker processes."""
    from . import problems

    sub, engine, options = args
    if not sub.clients:
        return Allocation({}), 0.0, True
    start = time.perf_counter()
    alloc, sub_report = problems.solve_instance(sub, engine=engine, **options)
    return alloc, time.perf_counter() - start, sub_report.feasible


def _map_reduce(plan, parallelism, engine, solver_options, problems):
    options = solver_options or {}
    jobs = [(sub, engine, options) for sub in plan.sub_instances]

    start = time.perf_counter()
    if parallelism <= 1:
        results = [_solve_sub(job) for job in jobs]
    else:
        # Processes, not threads: the LP solvers hold the GIL for the whole
        # solve, so threads would serialize the map step.
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_solve_sub, jobs))
    total = time.perf_counter() - start

    for idx, (_, _, feasible) in enumerate(results):
        if not feasible:
            raise SubProblemInfeasible(idx)
    sub_allocs = [r[0] for r in results]
    times = [r[1] for r in results]
    alloc = coalesce(plan, sub_allocs)
    report = SolveReport(
        objective_value=math.nan,
        feasible=True,
        runtime_total=total,
        runtime_subproblems=times,
        solver_stats={"k": plan.k, "resource_mode": plan.resource_mode},
    )
    return alloc, report


def _safe_objective(instance, alloc):
    from .core import evaluate_objective

    try:
        return evaluate_objective(instance, alloc)
    except ValueError:
        return math.nan
