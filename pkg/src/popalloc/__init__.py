"""Resource-allocation toolkit built around partitioned optimization.

Large allocation problems (traffic engineering, GPU cluster scheduling,
shard load balancing) are split into k random sub-problems, each solved with
the original formulation, and the sub-allocations are coalesced into a
feasible global allocation.
"""

from .core import (
    Allocation,
    ClientKind,
    ClientRecord,
    CommodityPayload,
    JobPayload,
    LoadBalanceParams,
    Objective,
    ProblemInstance,
    ResourceRecord,
    ShardPayload,
    SolveReport,
    StructuralError,
    Topology,
    Violation,
    check_feasibility,
    effective_throughput,
    evaluate_objective,
)
from .pop import (
    PartitionPlan,
    SHARD_RESOURCES,
    SPLIT_RESOURCES,
    VirtualClientMap,
    coalesce,
    run_pop,
    split_clients,
    split_resources,
)
from .problems import (
    baseline_cspf,
    baseline_greedy_balance,
    build_flow_instance,
    compute_equal_allocation,
    k_shortest_paths,
    rebalance_shards,
    solve_instance,
)
from .analysis import (
    SimpleAssignmentInstance,
    chernoff_tail,
    pop_gap_bound,
    simulate_simple_assignment,
    speedup_model,
)
from .workloads import (
    TrafficMatrix,
    gen_jobs,
    gen_shards,
    gen_topology,
    gen_traffic,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ClientKind",
    "ClientRecord",
    "CommodityPayload",
    "JobPayload",
    "LoadBalanceParams",
    "Objective",
    "PartitionPlan",
    "ProblemInstance",
    "ResourceRecord",
    "SHARD_RESOURCES",
    "SPLIT_RESOURCES",
    "ShardPayload",
    "SimpleAssignmentInstance",
    "SolveReport",
    "StructuralError",
    "Topology",
    "TrafficMatrix",
    "Violation",
    "VirtualClientMap",
    "baseline_cspf",
    "baseline_greedy_balance",
    "build_flow_instance",
    "chernoff_tail",
    "check_feasibility",
    "coalesce",
    "compute_equal_allocation",
    "effective_throughput",
    "evaluate_objective",
    "gen_jobs",
    "gen_shards",
    "gen_topology",
    "gen_traffic",
    "k_shortest_paths",
    "pop_gap_bound",
    "rebalance_shards",
    "run_pop",
    "simulate_simple_assignment",
    "solve_instance",
    "speedup_model",
    "split_clients",
    "split_resources",
]
