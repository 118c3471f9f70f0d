"""Workload generators and line-oriented file formats."""

import csv
import math

import numpy as np
import pytest

from popalloc import workloads
from popalloc.core import Objective, Topology
from popalloc.workloads import (
    RESULTS_COLUMNS,
    TrafficMatrix,
    WorkloadFormatError,
    gen_jobs,
    gen_shards,
    gen_topology,
    gen_traffic,
    load_jobs,
    load_shards,
    load_topology,
    load_traffic,
    save_jobs,
    save_shards,
    save_topology,
    save_traffic,
    write_results,
)


class TestGenTopology:
    def test_ring4_has_eight_directed_edges(self):
        topo = gen_topology("ring", 4, seed=0)
        assert len(topo.edges) == 8
        assert len(topo.nodes) == 4

    def test_ring_edges_are_symmetric_pairs(self):
        topo = gen_topology("ring", 5, seed=3)
        caps = {(src, dst): cap for src, dst, cap in topo.edges}
        for (src, dst), cap in caps.items():
            assert caps[(dst, src)] == cap

    def test_grid_edge_count(self):
        # size x size grid: 2*size*(size-1) undirected adjacencies, doubled.
        size = 3
        topo = gen_topology("grid", size, seed=0)
        assert len(topo.nodes) == size * size
        assert len(topo.edges) == 2 * 2 * size * (size - 1)

    def test_erdos_renyi_always_connected(self):
        for seed in range(10):
            topo = gen_topology("erdos_renyi", 50, seed=seed, p=0.1)
            adj = {n: [] for n in topo.nodes}
            for src, dst, _ in topo.edges:
                adj[src].append(dst)
            seen = {topo.nodes[0]}
            stack = [topo.nodes[0]]
            while stack:
                for nbr in adj[stack.pop()]:
                    if nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
            assert len(seen) == len(topo.nodes)

    def test_determinism(self):
        a = gen_topology("erdos_renyi", 20, seed=7, p=0.2)
        b = gen_topology("erdos_renyi", 20, seed=7, p=0.2)
        assert a == b

    def test_capacities_positive(self):
        topo = gen_topology("ring", 6, seed=1)
        assert all(cap > 0 for _, _, cap in topo.edges)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            gen_topology("torus", 4)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="size"):
            gen_topology("ring", 1)


class TestGenTraffic:
    def test_scale_ratio_exact(self):
        topo = gen_topology("ring", 6, seed=2)
        total_cap = sum(cap for _, _, cap in topo.edges)
        for scale in (0.25, 1.0, 4.0):
            tm = gen_traffic(topo, "uniform", seed=0, scale=scale)
            total_demand = sum(d for _, _, d in tm.demands)
            assert total_demand / total_cap == pytest.approx(scale, rel=1e-9)

    def test_gravity_symmetric_three_cycle_equal(self):
        # Equal-capacity 3-cycle: every node has the same outgoing capacity,
        # so gravity weights are all equal.
        nodes = ("a", "b", "c")
        edges = []
        for i in range(3):
            src, dst = nodes[i], nodes[(i + 1) % 3]
            edges.append((src, dst, 10.0))
            edges.append((dst, src, 10.0))
        topo = Topology("tri", nodes, tuple(edges))
        tm = gen_traffic(topo, "gravity", seed=0, scale=1.0)
        values = [d for _, _, d in tm.demands]
        assert len(values) == 6
        assert max(values) == pytest.approx(min(values), rel=1e-12)

    def test_determinism(self):
        topo = gen_topology("ring", 8, seed=0)
        a = gen_traffic(topo, "bimodal", seed=5, scale=1.0)
        b = gen_traffic(topo, "bimodal", seed=5, scale=1.0)
        assert a == b

    def test_poisson_top_percent_dominates(self):
        # Heavy-tail check: top 1% of commodities carry >= 30% of demand,
        # measured as the mean share across 20 seeds.
        topo = gen_topology("erdos_renyi", 100, seed=0, p=0.1)
        shares = []
        for seed in range(20):
            tm = gen_traffic(topo, "poisson", seed=seed, scale=1.0)
            values = sorted((d for _, _, d in tm.demands), reverse=True)
            top = max(1, round(0.01 * len(values)))
            shares.append(sum(values[:top]) / sum(values))
        assert np.mean(shares) >= 0.30

    def test_num_pairs_subsampling(self):
        topo = gen_topology("ring", 6, seed=0)
        tm = gen_traffic(topo, "uniform", seed=0, scale=1.0, num_pairs=10)
        assert len(tm.demands) == 10
        assert len({(a, b) for a, b, _ in tm.demands}) == 10

    def test_invalid_scale_rejected(self):
        topo = gen_topology("ring", 4, seed=0)
        with pytest.raises(ValueError, match="scale"):
            gen_traffic(topo, "uniform", seed=0, scale=0.0)

    def test_unknown_model_rejected(self):
        topo = gen_topology("ring", 4, seed=0)
        with pytest.raises(ValueError, match="model"):
            gen_traffic(topo, "lognormal", seed=0)

    def test_num_pairs_out_of_range(self):
        topo = gen_topology("ring", 4, seed=0)
        with pytest.raises(ValueError, match="num_pairs"):
            gen_traffic(topo, "uniform", num_pairs=100)


class TestGenJobs:
    def test_single_type_no_jitter_constant_ratio(self):
        inst = gen_jobs(10, num_types=1, seed=0, jitter=False)
        # With one type and no jitter, T_j = base_j; the ratio T_j / base_j
        # is the constant type multiplier 2^0 = 1.
        for job in inst.clients:
            assert len(job.payload.throughputs) == 1

    def test_three_types_multiplier_doubles_without_jitter(self):
        inst = gen_jobs(5, num_types=3, seed=1, jitter=False)
        for job in inst.clients:
            thr = job.payload.throughputs
            assert thr["type1"] == pytest.approx(2 * thr["type0"], rel=1e-12)
            assert thr["type2"] == pytest.approx(4 * thr["type0"], rel=1e-12)

    def test_determinism(self):
        assert gen_jobs(8, seed=4) == gen_jobs(8, seed=4)

    def test_gpu_requests_from_choices(self):
        inst = gen_jobs(50, seed=2)
        assert {job.demand for job in inst.clients} <= {1.0, 2.0, 4.0, 8.0}

    def test_granularity_at_scale(self):
        # Desk-scale granularity check: no single request exceeds 1% of the
        # cluster once there are >= 1000 jobs.
        inst = gen_jobs(1000, num_types=3, seed=0)
        total_workers = sum(r.capacity for r in inst.resources)
        max_request = max(job.demand for job in inst.clients)
        assert max_request / total_workers < 0.01

    def test_invalid_args_rejected(self):
        with pytest.raises(ValueError):
            gen_jobs(0)
        with pytest.raises(ValueError):
            gen_jobs(5, num_types=0)


class TestGenShards:
    def test_alpha_zero_equal_loads(self):
        inst = gen_shards(12, 4, zipf_alpha=0.0, seed=0)
        loads = [c.demand for c in inst.clients]
        assert max(loads) == pytest.approx(min(loads), rel=1e-12)
        assert np.mean(loads) == pytest.approx(100.0, rel=1e-12)

    def test_determinism(self):
        assert gen_shards(10, 3, seed=5) == gen_shards(10, 3, seed=5)

    def test_zipf_skew_at_scale(self):
        inst = gen_shards(1024, 16, zipf_alpha=1.5, seed=0)
        loads = sorted((c.demand for c in inst.clients), reverse=True)
        assert loads[0] >= 10 * float(np.median(loads))

    def test_round_robin_homes(self):
        inst = gen_shards(7, 3, seed=0)
        for i, shard in enumerate(inst.clients):
            assert shard.payload.home_server == f"srv{i % 3}"

    def test_memory_is_twice_fair_share(self):
        inst = gen_shards(9, 3, seed=1)
        total_fp = sum(c.payload.footprint for c in inst.clients)
        for server in inst.resources:
            assert server.capacity == pytest.approx(2.0 * total_fp / 3, rel=1e-12)

    def test_footprints_in_range(self):
        inst = gen_shards(40, 4, seed=3)
        for shard in inst.clients:
            assert 1.0 <= shard.payload.footprint <= 4.0

    def test_invalid_args_rejected(self):
        with pytest.raises(ValueError):
            gen_shards(0, 3)
        with pytest.raises(ValueError):
            gen_shards(3, 3, zipf_alpha=-1.0)


class TestTopologyFiles:
    def test_round_trip_identity(self, tmp_path):
        topo = gen_topology("erdos_renyi", 12, seed=9, p=0.3)
        path = tmp_path / "topo.txt"
        save_topology(topo, str(path))
        loaded = load_topology(str(path))
        assert loaded.nodes == topo.nodes
        assert loaded.edges == topo.edges
        assert loaded.name == topo.name

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("node a\nnode b\n")
        with pytest.raises(WorkloadFormatError, match=r"bad\.txt:1"):
            load_topology(str(path))

    def test_malformed_edge_line_has_lineno(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("format_version: 1\nnode a\nnode b\nedge a b\n")
        with pytest.raises(WorkloadFormatError, match=r"bad\.txt:4"):
            load_topology(str(path))

    def test_invalid_capacity_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("format_version: 1\nnode a\nnode b\nedge a b fast\n")
        with pytest.raises(WorkloadFormatError, match="capacity"):
            load_topology(str(path))

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "topo.txt"
        path.write_text(
            "format_version: 1\n\n# comment\nnode a\nnode b\nedge a b 5.0\n"
        )
        topo = load_topology(str(path))
        assert topo.nodes == ("a", "b")
        assert topo.edges == (("a", "b", 5.0),)


class TestTrafficFiles:
    def test_round_trip_identity(self, tmp_path):
        topo = gen_topology("ring", 6, seed=1)
        tm = gen_traffic(topo, "gravity", seed=3, scale=2.0)
        path = tmp_path / "tm.txt"
        save_traffic(tm, str(path))
        loaded = load_traffic(str(path), topology=topo)
        assert loaded == tm

    def test_unknown_endpoint_rejected_with_topology(self, tmp_path):
        topo = gen_topology("ring", 4, seed=0)
        path = tmp_path / "tm.txt"
        path.write_text("format_version: 1\ndemand n0 n9 1.0\n")
        with pytest.raises(WorkloadFormatError, match="endpoint"):
            load_traffic(str(path), topology=topo)

    def test_self_pair_rejected(self, tmp_path):
        path = tmp_path / "tm.txt"
        path.write_text("format_version: 1\ndemand a a 1.0\n")
        with pytest.raises(WorkloadFormatError, match="self-pair"):
            load_traffic(str(path))

    def test_nonpositive_demand_rejected(self, tmp_path):
        path = tmp_path / "tm.txt"
        path.write_text("format_version: 1\ndemand a b -2.0\n")
        with pytest.raises(WorkloadFormatError, match=r"tm\.txt:2"):
            load_traffic(str(path))


class TestJobFiles:
    def test_round_trip_identity(self, tmp_path):
        inst = gen_jobs(6, num_types=3, seed=8)
        path = tmp_path / "jobs.txt"
        save_jobs(inst, str(path))
        loaded = load_jobs(str(path))
        assert loaded.clients == inst.clients
        assert loaded.resources == inst.resources

    def test_round_trip_with_objective(self, tmp_path):
        inst = gen_jobs(4, seed=0)
        path = tmp_path / "jobs.txt"
        save_jobs(inst, str(path))
        loaded = load_jobs(str(path), objective=Objective.MINIMIZE_MAKESPAN)
        assert loaded.objective is Objective.MINIMIZE_MAKESPAN

    def test_wrong_throughput_count_rejected(self, tmp_path):
        path = tmp_path / "jobs.txt"
        path.write_text("format_version: 1\ntypes 2\njob j0 1.0 2.0 100 1.5\n")
        with pytest.raises(WorkloadFormatError, match=r"jobs\.txt:3"):
            load_jobs(str(path))

    def test_missing_types_line_rejected(self, tmp_path):
        path = tmp_path / "jobs.txt"
        path.write_text("format_version: 1\njob j0 1.0 2.0 100 1.5\n")
        with pytest.raises(WorkloadFormatError, match="types"):
            load_jobs(str(path))


class TestShardFiles:
    def test_round_trip_identity(self, tmp_path):
        inst = gen_shards(8, 3, seed=2, tolerance=0.07)
        path = tmp_path / "shards.txt"
        save_shards(inst, str(path))
        loaded = load_shards(str(path))
        assert loaded.clients == inst.clients
        assert loaded.resources == inst.resources
        assert loaded.lb_params.tolerance == inst.lb_params.tolerance

    def test_undefined_home_server_rejected(self, tmp_path):
        path = tmp_path / "shards.txt"
        path.write_text(
            "format_version: 1\nserver s0 10.0\nshard a 5.0 1.0 s9\n"
        )
        with pytest.raises(WorkloadFormatError, match="home server"):
            load_shards(str(path))

    def test_malformed_shard_line_rejected(self, tmp_path):
        path = tmp_path / "shards.txt"
        path.write_text("format_version: 1\nserver s0 10.0\nshard a 5.0\n")
        with pytest.raises(WorkloadFormatError, match=r"shards\.txt:3"):
            load_shards(str(path))


class TestWriteResults:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results(
            str(path),
            [{"method": "exact", "k": 1, "seed": 0, "objective": 1.5}],
        )
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["method"] == "exact"
        assert rows[0]["objective"] == "1.5"
        assert tuple(rows[0].keys()) == RESULTS_COLUMNS

    def test_append_does_not_duplicate_header(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results(str(path), [{"method": "a"}])
        write_results(str(path), [{"method": "b"}])
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["method"] for r in rows] == ["a", "b"]

    def test_extra_columns(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results(str(path), [{"method": "x", "note": "hi"}], extra_columns=("note",))
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["note"] == "hi"
