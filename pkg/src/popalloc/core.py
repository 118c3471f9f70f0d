"""Domain model for allocation problems.

Clients (jobs, commodities, shards) request resources (GPU types, links,
servers).  An :class:`Allocation` maps (client, resource[, path]) to a
nonnegative quantity.  Everything here is immutable and pure so instances can
be shared freely across solver workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Objective(enum.Enum):
    MAX_MIN_FAIRNESS = "max_min_fairness"
    PROPORTIONAL_FAIRNESS = "proportional_fairness"
    MINIMIZE_MAKESPAN = "minimize_makespan"
    TOTAL_FLOW = "total_flow"
    CONCURRENT_FLOW = "concurrent_flow"
    MIN_SHARD_MOVEMENT = "min_shard_movement"


SCHEDULING_OBJECTIVES = frozenset(
    {Objective.MAX_MIN_FAIRNESS, Objective.PROPORTIONAL_FAIRNESS, Objective.MINIMIZE_MAKESPAN}
)
FLOW_OBJECTIVES = frozenset({Objective.TOTAL_FLOW, Objective.CONCURRENT_FLOW})

#: Objectives where smaller values are better.
MINIMIZE_OBJECTIVES = frozenset({Objective.MINIMIZE_MAKESPAN, Objective.MIN_SHARD_MOVEMENT})


class ClientKind(enum.Enum):
    JOB = "job"
    COMMODITY = "commodity"
    SHARD = "shard"


class StructuralError(ValueError):
    """An allocation references ids that do not exist in the instance."""


@dataclass(frozen=True)
class JobPayload:
    throughputs: dict[str, float]  # raw throughput keyed by resource type tag
    num_steps: float


@dataclass(frozen=True)
class CommodityPayload:
    src: str
    dst: str
    paths: tuple[tuple[str, ...], ...] = ()  # each path is a sequence of edge ids


@dataclass(frozen=True)
class ShardPayload:
    footprint: float
    home_server: str


@dataclass(frozen=True)
class ClientRecord:
    id: str
    kind: ClientKind
    demand: float  # splitting attribute: GPU count, commodity demand, or shard load
    weight: float = 1.0
    payload: object = None

    def __post_init__(self):
        if self.demand < 0:
            raise ValueError(f"client {self.id}: demand must be >= 0, got {self.demand}")
        if self.weight <= 0:
            raise ValueError(f"client {self.id}: weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class ResourceRecord:
    id: str
    type_tag: str
    capacity: float
    is_virtual: bool = False
    parent_id: str | None = None

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"resource {self.id}: capacity must be > 0, got {self.capacity}")
        if self.is_virtual and self.parent_id is None:
            raise ValueError(f"resource {self.id}: virtual resource needs parent_id")


@dataclass(frozen=True)
class Topology:
    name: str
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]  # (src, dst, capacity), directed

    def __post_init__(self):
        node_set = set(self.nodes)
        for src, dst, cap in self.edges:
            if src == dst:
                raise ValueError(f"topology {self.name}: self-loop at {src}")
            if cap <= 0:
                raise ValueError(f"topology {self.name}: edge {src}->{dst} capacity {cap}")
            if src not in node_set or dst not in node_set:
                raise ValueError(f"topology {self.name}: edge {src}->{dst} uses unknown node")

    def edge_id(self, src: str, dst: str) -> str:
        return f"{src}->{dst}"

    def edge_capacities(self) -> dict[str, float]:
        return {self.edge_id(s, d): c for s, d, c in self.edges}

    def scaled(self, factor: float) -> "Topology":
        return Topology(
            name=self.name,
            nodes=self.nodes,
            edges=tuple((s, d, c * factor) for s, d, c in self.edges),
        )


@dataclass(frozen=True)
class LoadBalanceParams:
    tolerance: float = 0.05  # window half-width as a fraction of average load
    average_load: float | None = None  # derived from shard loads when None


#: Allocation entry key: (client id, resource id or None, path index or None).
AllocKey = tuple[str, str | None, int | None]


@dataclass(frozen=True)
class Allocation:
    entries: dict[AllocKey, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.entries.items():
            if value < 0:
                raise ValueError(f"allocation entry {key} is negative: {value}")

    def get(self, client_id, resource_id=None, path_index=None) -> float:
        return self.entries.get((client_id, resource_id, path_index), 0.0)

    def client_total(self, client_id: str) -> float:
        return sum(v for (c, _, _), v in self.entries.items() if c == client_id)


@dataclass(frozen=True)
class ProblemInstance:
    objective: Objective
    clients: tuple[ClientRecord, ...]
    resources: tuple[ResourceRecord, ...]
    topology: Topology | None = None
    lb_params: LoadBalanceParams | None = None
    concurrent_flow_fractional: bool = True

    def __post_init__(self):
        expected_kind = {
            Objective.MAX_MIN_FAIRNESS: ClientKind.JOB,
            Objective.PROPORTIONAL_FAIRNESS: ClientKind.JOB,
            Objective.MINIMIZE_MAKESPAN: ClientKind.JOB,
            Objective.TOTAL_FLOW: ClientKind.COMMODITY,
            Objective.CONCURRENT_FLOW: ClientKind.COMMODITY,
            Objective.MIN_SHARD_MOVEMENT: ClientKind.SHARD,
        }[self.objective]
        for client in self.clients:
            if client.kind is not expected_kind:
                raise ValueError(
                    f"objective {self.objective.value} expects {expected_kind.value} clients, "
                    f"client {client.id} is a {client.kind.value}"
                )
        if (self.topology is not None) != (self.objective in FLOW_OBJECTIVES):
            raise ValueError("topology must be present exactly for flow objectives")

    def client(self, client_id: str) -> ClientRecord:
        for c in self.clients:
            if c.id == client_id:
                return c
        raise KeyError(client_id)

    def resource_ids(self) -> set[str]:
        return {r.id for r in self.resources}

    def client_ids(self) -> set[str]:
        return {c.id for c in self.clients}


@dataclass
class SolveReport:
    objective_value: float
    feasible: bool
    runtime_total: float
    runtime_subproblems: list[float] = field(default_factory=list)
    method: str = "exact"
    sense: str = "max"  # "max" or "min"
    solver_stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    constraint: str
    ids: tuple[str, ...]
    slack: float  # amount by which the constraint is exceeded

    def __str__(self):
        return f"{self.constraint}[{','.join(self.ids)}]: excess {self.slack:.3g}"


# Presence threshold for binary indicators derived from fractional values
# (e.g. "shard i touches server j").
PRESENCE_EPS = 1e-9


def effective_throughput(instance: ProblemInstance, alloc: Allocation, client: ClientRecord) -> float:
    """Progress rate of a job under ``alloc``: sum of per-type throughput times
    the time fraction spent on that type."""
    total = 0.0
    for res in instance.resources:
        a = alloc.get(client.id, res.id)
        if a:
            total += client.payload.throughputs[res.type_tag] * a
    return total


def _check_ids(instance: ProblemInstance, alloc: Allocation) -> None:
    clients_by_id = {c.id: c for c in instance.clients}
    resource_ids = instance.resource_ids()
    flow = instance.objective in FLOW_OBJECTIVES
    for cid, rid, pidx in alloc.entries:
        if cid not in clients_by_id:
            raise StructuralError(f"allocation references unknown client {cid!r}")
        if rid is not None and rid not in resource_ids:
            raise StructuralError(f"allocation references unknown resource {rid!r}")
        if flow and pidx is not None:
            client = clients_by_id[cid]
            if pidx >= len(client.payload.paths):
                raise StructuralError(
                    f"allocation references path {pidx} of commodity {cid!r}, "
                    f"which has {len(client.payload.paths)} paths"
                )


def check_feasibility(instance: ProblemInstance, alloc: Allocation, tol: float = 1e-6) -> list[Violation]:
    """Return all constraint violations of ``alloc`` beyond ``tol``.

    An empty list means the allocation is feasible for the instance's
    objective family.  Unknown ids raise :class:`StructuralError` instead of
    being reported as violations.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    _check_ids(instance, alloc)
    violations: list[Violation] = []

    def check(lhs, rhs, constraint, ids, scale=1.0):
        excess = (lhs - rhs) / max(scale, 1.0)
        if excess > tol:
            violations.append(Violation(constraint, ids, excess))

    for key, value in alloc.entries.items():
        if value < -tol:
            violations.append(Violation("nonnegative", (str(key[0]),), -value))

    if instance.objective in SCHEDULING_OBJECTIVES:
        for client in instance.clients:
            time_total = sum(alloc.get(client.id, r.id) for r in instance.resources)
            check(time_total, 1.0, "job_time_budget", (client.id,))
            for res in instance.resources:
                check(alloc.get(client.id, res.id), 1.0, "time_fraction", (client.id, res.id))
        for res in instance.resources:
            used = sum(alloc.get(c.id, res.id) * c.demand for c in instance.clients)
            check(used, res.capacity, "worker_capacity", (res.id,), scale=res.capacity)

    elif instance.objective in FLOW_OBJECTIVES:
        edge_caps = instance.topology.edge_capacities()
        edge_flow = {e: 0.0 for e in edge_caps}
        for client in instance.clients:
            flow = 0.0
            for pidx, path in enumerate(client.payload.paths):
                f = alloc.get(client.id, None, pidx)
                flow += f
                if f <= 0:
                    continue
                for edge in path:
                    if edge in edge_flow:
                        edge_flow[edge] += f
                    else:
                        violations.append(Violation("edge_absent", (client.id, edge), f))
            check(flow, client.demand, "demand_cap", (client.id,), scale=client.demand)
        for edge, used in edge_flow.items():
            check(used, edge_caps[edge], "edge_capacity", (edge,), scale=edge_caps[edge])

    else:  # MIN_SHARD_MOVEMENT
        params = instance.lb_params or LoadBalanceParams()
        total_load = sum(c.demand for c in instance.clients)
        avg = params.average_load
        if avg is None:
            avg = total_load / len(instance.resources)
        eps = params.tolerance * avg
        for client in instance.clients:
            assigned = sum(alloc.get(client.id, r.id) for r in instance.resources)
            check(assigned, 1.0, "query_fraction_upper", (client.id,))
            check(1.0, assigned, "query_fraction_lower", (client.id,))
        for res in instance.resources:
            load = sum(alloc.get(c.id, res.id) * c.demand for c in instance.clients)
            check(load, avg + eps, "load_window_upper", (res.id,), scale=avg)
            check(avg - eps, load, "load_window_lower", (res.id,), scale=avg)
            mem = sum(
                c.payload.footprint
                for c in instance.clients
                if alloc.get(c.id, res.id) > PRESENCE_EPS
            )
            check(mem, res.capacity, "memory_capacity", (res.id,), scale=res.capacity)

    return violations


def evaluate_objective(instance: ProblemInstance, alloc: Allocation) -> float:
    """Scalar objective value of ``alloc``.

    The caller is responsible for feasibility; this only evaluates the
    objective expression.  For makespan and shard movement smaller is better.
    """
    _check_ids(instance, alloc)
    obj = instance.objective

    if obj is Objective.MAX_MIN_FAIRNESS:
        from .problems import compute_equal_allocation

        equal = compute_equal_allocation(instance)
        best = math.inf
        for client in instance.clients:
            thr = effective_throughput(instance, alloc, client)
            thr_eq = equal.throughput(instance, client)
            if thr_eq <= 0:
                raise ValueError(f"job {client.id}: zero equal-share throughput")
            best = min(best, (thr / thr_eq) * client.demand / client.weight)
        return best

    if obj is Objective.PROPORTIONAL_FAIRNESS:
        total = 0.0
        for client in instance.clients:
            thr = effective_throughput(instance, alloc, client)
            if thr <= 0:
                raise ValueError(f"job {client.id}: log of nonpositive throughput {thr}")
            total += math.log(thr)
        return total

    if obj is Objective.MINIMIZE_MAKESPAN:
        worst = 0.0
        for client in instance.clients:
            thr = effective_throughput(instance, alloc, client)
            if thr <= 0:
                return math.inf  # starved job: infinite makespan
            worst = max(worst, client.payload.num_steps / thr)
        return worst

    if obj is Objective.TOTAL_FLOW:
        return sum(alloc.entries.values())

    if obj is Objective.CONCURRENT_FLOW:
        worst = math.inf
        for client in instance.clients:
            flow = sum(
                alloc.get(client.id, None, pidx) for pidx in range(len(client.payload.paths))
            )
            if instance.concurrent_flow_fractional:
                worst = min(worst, flow / client.demand if client.demand > 0 else math.inf)
            else:
                worst = min(worst, flow)
        return 0.0 if worst is math.inf else worst

    # MIN_SHARD_MOVEMENT: footprint of shards placed away from their home server
    moved = 0.0
    for client in instance.clients:
        for res in instance.resources:
            if res.id != client.payload.home_server and alloc.get(client.id, res.id) > PRESENCE_EPS:
                moved += client.payload.footprint
    return moved
