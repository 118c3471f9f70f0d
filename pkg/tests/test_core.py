"""Domain model: validation, feasibility checking, objective evaluation."""

import math

import numpy as np
import pytest

from popalloc.core import (
    Allocation,
    ClientKind,
    ClientRecord,
    CommodityPayload,
    JobPayload,
    Objective,
    ProblemInstance,
    ResourceRecord,
    StructuralError,
    Topology,
    check_feasibility,
    effective_throughput,
    evaluate_objective,
)

from conftest import (
    flow_instance,
    lb_instance,
    make_job,
    make_shard,
    scheduling_instance,
    triangle_topology,
)


class TestValidation:
    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError, match="demand"):
            ClientRecord(id="j", kind=ClientKind.JOB, demand=-1.0)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError, match="weight"):
            ClientRecord(id="j", kind=ClientKind.JOB, demand=1.0, weight=0.0)

    def test_nonpositive_capacity_rejected(self):
        with pytest.raises(ValueError, match="capacity"):
            ResourceRecord(id="r", type_tag="t", capacity=0.0)

    def test_virtual_resource_needs_parent(self):
        with pytest.raises(ValueError, match="parent"):
            ResourceRecord(id="r", type_tag="t", capacity=1.0, is_virtual=True)

    def test_topology_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Topology(name="bad", nodes=("A",), edges=(("A", "A", 1.0),))

    def test_topology_rejects_unknown_node(self):
        with pytest.raises(ValueError, match="unknown node"):
            Topology(name="bad", nodes=("A", "B"), edges=(("A", "C", 1.0),))

    def test_objective_client_kind_mismatch(self):
        job = make_job("j0", {"t": 1.0})
        with pytest.raises(ValueError, match="expects commodity"):
            ProblemInstance(
                objective=Objective.TOTAL_FLOW,
                clients=(job,),
                resources=(),
                topology=triangle_topology(),
            )

    def test_topology_required_exactly_for_flow(self):
        job = make_job("j0", {"t": 1.0})
        with pytest.raises(ValueError, match="topology"):
            ProblemInstance(
                objective=Objective.MAX_MIN_FAIRNESS,
                clients=(job,),
                resources=(ResourceRecord(id="p", type_tag="t", capacity=1.0),),
                topology=triangle_topology(),
            )

    def test_negative_allocation_entry_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            Allocation({("c", "r", None): -0.5})


class TestStructuralChecks:
    def test_unknown_client_raises(self):
        inst = scheduling_instance([make_job("j0", {"t": 1.0})], {"t": 1})
        with pytest.raises(StructuralError, match="unknown client"):
            check_feasibility(inst, Allocation({("ghost", "pool_t", None): 0.5}))

    def test_unknown_resource_raises(self):
        inst = scheduling_instance([make_job("j0", {"t": 1.0})], {"t": 1})
        with pytest.raises(StructuralError, match="unknown resource"):
            check_feasibility(inst, Allocation({("j0", "ghost", None): 0.5}))

    def test_out_of_range_path_index_raises(self):
        topo = triangle_topology()
        inst = flow_instance(topo, [("A", "C", 5.0)])
        with pytest.raises(StructuralError, match="path"):
            check_feasibility(inst, Allocation({("c0", None, 99): 1.0}))

    def test_nonpositive_tol_rejected(self):
        inst = scheduling_instance([make_job("j0", {"t": 1.0})], {"t": 1})
        with pytest.raises(ValueError, match="tol"):
            check_feasibility(inst, Allocation({}), tol=0.0)


class TestSchedulingFeasibility:
    def test_feasible_allocation_passes(self):
        inst = scheduling_instance(
            [make_job("j0", {"t": 1.0}), make_job("j1", {"t": 1.0})], {"t": 2}
        )
        alloc = Allocation({("j0", "pool_t", None): 1.0, ("j1", "pool_t", None): 1.0})
        assert check_feasibility(inst, alloc) == []

    def test_time_budget_violation(self):
        inst = scheduling_instance([make_job("j0", {"t": 1.0, "u": 1.0})], {"t": 1, "u": 1})
        alloc = Allocation({("j0", "pool_t", None): 0.8, ("j0", "pool_u", None): 0.5})
        names = {v.constraint for v in check_feasibility(inst, alloc)}
        assert "job_time_budget" in names

    def test_capacity_violation(self):
        # two 4-GPU jobs fully on a 4-worker pool: usage 8 > capacity 4
        jobs = [make_job("j0", {"t": 1.0}, gpus=4.0), make_job("j1", {"t": 1.0}, gpus=4.0)]
        inst = scheduling_instance(jobs, {"t": 4})
        alloc = Allocation({("j0", "pool_t", None): 1.0, ("j1", "pool_t", None): 1.0})
        violations = check_feasibility(inst, alloc)
        assert any(v.constraint == "worker_capacity" for v in violations)


class TestFlowFeasibility:
    def test_edge_capacity_violation_has_expected_slack(self):
        topo = triangle_topology(cap=10.0)
        inst = flow_instance(topo, [("A", "C", 20.0)])
        direct = next(
            pidx
            for pidx, path in enumerate(inst.clients[0].payload.paths)
            if path == ("A->C",)
        )
        alloc = Allocation({("c0", None, direct): 10.5})
        violations = check_feasibility(inst, alloc)
        cap = [v for v in violations if v.constraint == "edge_capacity"]
        assert len(cap) == 1
        # slack is normalized by capacity: 0.5 excess on a 10-capacity edge
        assert cap[0].slack == pytest.approx(0.05)

    def test_demand_cap_violation(self):
        topo = triangle_topology(cap=10.0)
        inst = flow_instance(topo, [("A", "C", 1.0)])
        alloc = Allocation({("c0", None, 0): 2.0})
        assert any(
            v.constraint == "demand_cap" for v in check_feasibility(inst, alloc)
        )


class TestLoadBalanceFeasibility:
    def test_balanced_placement_passes(self):
        shards = [make_shard("s0", 10.0, 1.0, "srv0"), make_shard("s1", 10.0, 1.0, "srv1")]
        inst = lb_instance(shards, [("srv0", 10.0), ("srv1", 10.0)])
        alloc = Allocation({("s0", "srv0", None): 1.0, ("s1", "srv1", None): 1.0})
        assert check_feasibility(inst, alloc) == []

    def test_load_window_violation(self):
        shards = [make_shard("s0", 10.0, 1.0, "srv0"), make_shard("s1", 10.0, 1.0, "srv0")]
        inst = lb_instance(shards, [("srv0", 10.0), ("srv1", 10.0)], tolerance=0.05)
        alloc = Allocation({("s0", "srv0", None): 1.0, ("s1", "srv0", None): 1.0})
        names = {v.constraint for v in check_feasibility(inst, alloc)}
        assert "load_window_upper" in names and "load_window_lower" in names

    def test_query_fraction_must_sum_to_one(self):
        shards = [make_shard("s0", 10.0, 1.0, "srv0")]
        inst = lb_instance(shards, [("srv0", 10.0)], tolerance=1.0)
        alloc = Allocation({("s0", "srv0", None): 0.4})
        assert any(
            v.constraint == "query_fraction_lower"
            for v in check_feasibility(inst, alloc)
        )

    def test_memory_capacity_counts_footprints(self):
        shards = [make_shard("s0", 5.0, 8.0, "srv0"), make_shard("s1", 5.0, 8.0, "srv0")]
        inst = lb_instance(shards, [("srv0", 10.0)], tolerance=1.0)
        alloc = Allocation({("s0", "srv0", None): 1.0, ("s1", "srv0", None): 1.0})
        assert any(
            v.constraint == "memory_capacity" for v in check_feasibility(inst, alloc)
        )


class TestTolMonotonicity:
    def test_violations_shrink_as_tol_grows(self, rng):
        jobs = [make_job(f"j{i}", {"t": 1.0, "u": 2.0}, gpus=2.0) for i in range(6)]
        inst = scheduling_instance(jobs, {"t": 3, "u": 3})
        entries = {}
        for j in jobs:
            entries[(j.id, "pool_t", None)] = float(rng.uniform(0, 0.9))
            entries[(j.id, "pool_u", None)] = float(rng.uniform(0, 0.9))
        alloc = Allocation(entries)
        loose = {(v.constraint, v.ids) for v in check_feasibility(inst, alloc, tol=1e-2)}
        tight = {(v.constraint, v.ids) for v in check_feasibility(inst, alloc, tol=1e-8)}
        assert loose <= tight


class TestEvaluateObjective:
    def test_total_flow_sums_entries(self):
        topo = triangle_topology(cap=100.0)
        inst = flow_instance(topo, [("A", "C", 10.0), ("B", "C", 5.0)])
        alloc = Allocation({("c0", None, 0): 10.0, ("c1", None, 0): 5.0})
        assert evaluate_objective(inst, alloc) == pytest.approx(15.0)

    def test_proportional_fairness_log_sum(self):
        jobs = [make_job("j0", {"t": 1.0}), make_job("j1", {"t": 1.0})]
        inst = scheduling_instance(jobs, {"t": 1}, Objective.PROPORTIONAL_FAIRNESS)
        alloc = Allocation({("j0", "pool_t", None): 0.5, ("j1", "pool_t", None): 0.5})
        assert evaluate_objective(inst, alloc) == pytest.approx(2 * math.log(0.5))

    def test_proportional_fairness_rejects_zero_throughput(self):
        jobs = [make_job("j0", {"t": 1.0})]
        inst = scheduling_instance(jobs, {"t": 1}, Objective.PROPORTIONAL_FAIRNESS)
        with pytest.raises(ValueError, match="log"):
            evaluate_objective(inst, Allocation({}))

    def test_makespan_is_max_duration(self):
        jobs = [
            make_job("j0", {"t": 1.0}, steps=100.0),
            make_job("j1", {"t": 1.0}, steps=50.0),
        ]
        inst = scheduling_instance(jobs, {"t": 2}, Objective.MINIMIZE_MAKESPAN)
        alloc = Allocation({("j0", "pool_t", None): 1.0, ("j1", "pool_t", None): 1.0})
        assert evaluate_objective(inst, alloc) == pytest.approx(100.0)

    def test_makespan_starved_job_is_infinite(self):
        jobs = [make_job("j0", {"t": 1.0}, steps=10.0)]
        inst = scheduling_instance(jobs, {"t": 1}, Objective.MINIMIZE_MAKESPAN)
        assert evaluate_objective(inst, Allocation({})) == math.inf

    def test_concurrent_flow_fractional_min(self):
        topo = triangle_topology(cap=100.0)
        inst = flow_instance(topo, [("A", "C", 10.0), ("B", "C", 5.0)])
        from dataclasses import replace

        inst = replace(inst, objective=Objective.CONCURRENT_FLOW)
        alloc = Allocation({("c0", None, 0): 5.0, ("c1", None, 0): 5.0})
        # c0 gets 5/10 of demand, c1 gets 5/5; minimum fraction is 0.5
        assert evaluate_objective(inst, alloc) == pytest.approx(0.5)

    def test_shard_movement_counts_off_home_footprint(self):
        shards = [make_shard("s0", 10.0, 3.0, "srv0"), make_shard("s1", 10.0, 2.0, "srv1")]
        inst = lb_instance(shards, [("srv0", 10.0), ("srv1", 10.0)], tolerance=1.0)
        alloc = Allocation(
            {
                ("s0", "srv0", None): 0.5,
                ("s0", "srv1", None): 0.5,
                ("s1", "srv1", None): 1.0,
            }
        )
        # only s0 touches a non-home server; its footprint is 3
        assert evaluate_objective(inst, alloc) == pytest.approx(3.0)

    def test_permutation_invariance(self, rng):
        jobs = [make_job(f"j{i}", {"t": 1.0 + i, "u": 2.0}, gpus=1.0 + i % 3) for i in range(5)]
        inst = scheduling_instance(jobs, {"t": 3, "u": 3})
        entries = {}
        for j in jobs:
            entries[(j.id, "pool_t", None)] = float(rng.uniform(0, 0.5))
            entries[(j.id, "pool_u", None)] = float(rng.uniform(0, 0.5))
        alloc = Allocation(entries)
        shuffled = ProblemInstance(
            objective=inst.objective,
            clients=tuple(reversed(inst.clients)),
            resources=tuple(reversed(inst.resources)),
        )
        assert evaluate_objective(inst, alloc) == pytest.approx(
            evaluate_objective(shuffled, alloc), rel=1e-12
        )


class TestEffectiveThroughput:
    def test_weighted_sum_over_types(self):
        job = make_job("j0", {"t": 2.0, "u": 4.0})
        inst = scheduling_instance([job], {"t": 1, "u": 1})
        alloc = Allocation({("j0", "pool_t", None): 0.5, ("j0", "pool_u", None): 0.25})
        assert effective_throughput(inst, alloc, job) == pytest.approx(2.0 * 0.5 + 4.0 * 0.25)
