"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from popalloc.core import (
    ClientKind,
    ClientRecord,
    CommodityPayload,
    JobPayload,
    LoadBalanceParams,
    Objective,
    ProblemInstance,
    ResourceRecord,
    ShardPayload,
    Topology,
)
from popalloc.problems import build_flow_instance


def make_job(jid, throughputs, gpus=1.0, steps=100.0, weight=1.0):
    return ClientRecord(
        id=jid,
        kind=ClientKind.JOB,
        demand=gpus,
        weight=weight,
        payload=JobPayload(throughputs=dict(throughputs), num_steps=steps),
    )


def make_workers(counts):
    """One ResourceRecord per worker type; counts maps type tag -> worker count."""
    return tuple(
        ResourceRecord(id=f"pool_{tag}", type_tag=tag, capacity=float(count))
        for tag, count in counts.items()
    )


def scheduling_instance(jobs, counts, objective=Objective.MAX_MIN_FAIRNESS):
    return ProblemInstance(
        objective=objective, clients=tuple(jobs), resources=make_workers(counts)
    )


def triangle_topology(cap=10.0):
    nodes = ("A", "B", "C")
    edges = []
    for src, dst in (("A", "B"), ("B", "C"), ("A", "C")):
        edges.append((src, dst, cap))
        edges.append((dst, src, cap))
    return Topology(name="triangle", nodes=nodes, edges=tuple(edges))


def flow_instance(topology, demands, objective=Objective.TOTAL_FLOW, p_max=4, **kwargs):
    return build_flow_instance(topology, list(demands), objective, p_max=p_max, **kwargs)


def make_shard(sid, load, footprint, home):
    return ClientRecord(
        id=sid,
        kind=ClientKind.SHARD,
        demand=load,
        payload=ShardPayload(footprint=footprint, home_server=home),
    )


def lb_instance(shards, servers, tolerance=0.05):
    resources = tuple(
        ResourceRecord(id=name, type_tag="server", capacity=mem) for name, mem in servers
    )
    return ProblemInstance(
        objective=Objective.MIN_SHARD_MOVEMENT,
        clients=tuple(shards),
        resources=resources,
        lb_params=LoadBalanceParams(tolerance=tolerance),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
