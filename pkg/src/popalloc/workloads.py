"""Synthetic workload generators and on-disk formats.

Every generator is a pure function of its parameters and seed.  Files are
line-oriented text with a ``format_version: 1`` header so fixtures stay
diff-able; loaders report malformed input with file and line number.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .core import (
    ClientKind,
    ClientRecord,
    JobPayload,
    LoadBalanceParams,
    Objective,
    ProblemInstance,
    ResourceRecord,
    ShardPayload,
    Topology,
)
from dataclasses import dataclass

FORMAT_VERSION = 1

#: columns of the benchmark results CSV, in order
RESULTS_COLUMNS = (
    "method",
    "objective_kind",
    "k",
    "t",
    "partitioner",
    "seed",
    "objective",
    "objective_ratio",
    "runtime_ms",
    "subproblem_max_ms",
)

#: mean GPU request when drawn uniformly from {1, 2, 4, 8}
_MEAN_GPUS = 3.75
_GPU_CHOICES = (1, 2, 4, 8)


class WorkloadFormatError(ValueError):
    """A workload file failed validation; message carries file:line."""


@dataclass(frozen=True)
class TrafficMatrix:
    demands: tuple[tuple[str, str, float], ...]  # (src, dst, demand > 0)
    model: str
    seed: int

    def __post_init__(self):
        for src, dst, d in self.demands:
            if src == dst:
                raise ValueError(f"traffic entry {src}->{dst}: self-pair")
            if d <= 0:
                raise ValueError(f"traffic entry {src}->{dst}: demand {d} must be > 0")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def gen_topology(kind: str, size: int, seed: int = 0, p: float = 0.1) -> Topology:
    """Deterministic random topology.

    ``ring``: cycle of ``size`` nodes, both directions.  ``grid``: square
    ``size`` x ``size`` 4-neighbor mesh.  ``erdos_renyi``: G(size, p) with
    symmetric directed edges, redrawn until connected (at most 100 redraws).
    Capacities are drawn uniformly from [10, 100].
    """
    if size < 2:
        raise ValueError("size must be >= 2")
    rng = np.random.default_rng(seed)

    if kind == "ring":
        nodes = tuple(f"n{i}" for i in range(size))
        pairs = [(nodes[i], nodes[(i + 1) % size]) for i in range(size)]
    elif kind == "grid":
        nodes = tuple(f"n{i}_{j}" for i in range(size) for j in range(size))
        pairs = []
        for i in range(size):
            for j in range(size):
                if j + 1 < size:
                    pairs.append((f"n{i}_{j}", f"n{i}_{j + 1}"))
                if i + 1 < size:
                    pairs.append((f"n{i}_{j}", f"n{i + 1}_{j}"))
    elif kind == "erdos_renyi":
        nodes = tuple(f"n{i}" for i in range(size))
        for _ in range(100):
            pairs = [
                (nodes[i], nodes[j])
                for i in range(size)
                for j in range(i + 1, size)
                if rng.random() < p
            ]
            if _connected(nodes, pairs):
                break
        else:
            raise RuntimeError(f"no connected G({size}, {p}) draw in 100 attempts")
    else:
        raise ValueError(f"unknown topology kind {kind!r}")

    edges = []
    for src, dst in pairs:
        cap = float(rng.uniform(10.0, 100.0))
        edges.append((src, dst, cap))
        edges.append((dst, src, cap))
    return Topology(name=f"{kind}{size}-s{seed}", nodes=nodes, edges=tuple(edges))


def _connected(nodes, pairs) -> bool:
    if not nodes:
        return True
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for nbr in adj[stack.pop()]:
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    return len(seen) == len(nodes)


def gen_traffic(
    topology: Topology,
    model: str,
    seed: int = 0,
    scale: float = 1.0,
    num_pairs: int | None = None,
) -> TrafficMatrix:
    """Traffic matrix scaled so total demand / total capacity equals ``scale``.

    Models: ``gravity`` (demand proportional to the product of endpoint
    outgoing capacities), ``uniform`` (i.i.d. U(0,1)), ``bimodal`` (80% of
    pairs U(0,1), 20% U(5,10)), ``poisson`` (1% heavy pairs with exponential
    demands at 50x the light mean).  ``num_pairs`` samples that many distinct
    ordered pairs instead of taking all of them.
    """
    if scale <= 0:
        raise ValueError("scale must be > 0")
    rng = np.random.default_rng(seed)
    nodes = list(topology.nodes)
    all_pairs = [(a, b) for a in nodes for b in nodes if a != b]
    if num_pairs is not None:
        if not 1 <= num_pairs <= len(all_pairs):
            raise ValueError(f"num_pairs must be in [1, {len(all_pairs)}]")
        idx = rng.choice(len(all_pairs), size=num_pairs, replace=False)
        pairs = [all_pairs[i] for i in sorted(idx)]
    else:
        pairs = all_pairs
    m = len(pairs)

    if model == "gravity":
        out_cap = {n: 0.0 for n in nodes}
        for src, _, cap in topology.edges:
            out_cap[src] += cap
        demands = np.array([out_cap[a] * out_cap[b] for a, b in pairs])
    elif model == "uniform":
        demands = rng.uniform(0.0, 1.0, size=m)
    elif model == "bimodal":
        demands = rng.uniform(0.0, 1.0, size=m)
        heavy = rng.random(m) < 0.2
        demands[heavy] = rng.uniform(5.0, 10.0, size=int(heavy.sum()))
    elif model == "poisson":
        demands = rng.exponential(1.0, size=m)
        num_heavy = max(1, round(0.01 * m))
        heavy_idx = rng.choice(m, size=num_heavy, replace=False)
        demands[heavy_idx] = rng.exponential(50.0, size=num_heavy)
    else:
        raise ValueError(f"unknown traffic model {model!r}")

    demands = np.maximum(demands, 1e-12)
    total_cap = sum(c for _, _, c in topology.edges)
    demands *= scale * total_cap / demands.sum()
    entries = tuple((a, b, float(d)) for (a, b), d in zip(pairs, demands))
    return TrafficMatrix(entries, model=model, seed=seed)


def gen_jobs(num_jobs: int, num_types: int = 3, seed: int = 0, jitter: bool = True) -> ProblemInstance:
    """Scheduling instance with heterogeneous worker types.

    Throughput T_ji = base_j * mult_i * (1 + jitter), base U(0.5, 2), type
    multiplier 2^i, jitter U(-0.1, 0.1).  GPU requests from {1,2,4,8},
    steps U(1e2, 1e4).  Worker counts size the cluster to roughly full
    subscription.
    """
    if num_jobs < 1 or num_types < 1:
        raise ValueError("num_jobs and num_types must be >= 1")
    rng = np.random.default_rng(seed)
    type_tags = [f"type{i}" for i in range(num_types)]
    clients = []
    for j in range(num_jobs):
        base = rng.uniform(0.5, 2.0)
        thr = {}
        for i, tag in enumerate(type_tags):
            jit = rng.uniform(-0.1, 0.1) if jitter else 0.0
            thr[tag] = float(base * (2.0**i) * (1.0 + jit))
        gpus = float(_GPU_CHOICES[rng.integers(len(_GPU_CHOICES))])
        steps = float(rng.uniform(1e2, 1e4))
        clients.append(
            ClientRecord(
                id=f"job{j}",
                kind=ClientKind.JOB,
                demand=gpus,
                weight=1.0,
                payload=JobPayload(throughputs=thr, num_steps=steps),
            )
        )
    workers = math.ceil(num_jobs * _MEAN_GPUS / num_types)
    resources = tuple(
        ResourceRecord(id=tag, type_tag=tag, capacity=float(workers)) for tag in type_tags
    )
    return ProblemInstance(
        objective=Objective.MAX_MIN_FAIRNESS, clients=tuple(clients), resources=resources
    )


def gen_shards(
    num_shards: int,
    num_servers: int,
    zipf_alpha: float = 1.1,
    seed: int = 0,
    tolerance: float = 0.05,
) -> ProblemInstance:
    """Load-balancing instance with Zipf-skewed shard loads.

    Load of the rank-i shard is proportional to 1/i^alpha (alpha=0 gives
    equal loads), normalized to a mean of 100 queries.  Footprints U(1, 4);
    home placement round-robin; server memory is twice the fair footprint
    share.
    """
    if num_shards < 1 or num_servers < 1:
        raise ValueError("num_shards and num_servers must be >= 1")
    if zipf_alpha < 0:
        raise ValueError("zipf_alpha must be >= 0")
    rng = np.random.default_rng(seed)
    raw = np.array([1.0 / (i + 1) ** zipf_alpha for i in range(num_shards)])
    loads = raw * (100.0 * num_shards / raw.sum())
    footprints = rng.uniform(1.0, 4.0, size=num_shards)
    memory = 2.0 * footprints.sum() / num_servers
    clients = tuple(
        ClientRecord(
            id=f"shard{i}",
            kind=ClientKind.SHARD,
            demand=float(loads[i]),
            payload=ShardPayload(
                footprint=float(footprints[i]), home_server=f"srv{i % num_servers}"
            ),
        )
        for i in range(num_shards)
    )
    servers = tuple(
        ResourceRecord(id=f"srv{j}", type_tag="server", capacity=float(memory))
        for j in range(num_servers)
    )
    return ProblemInstance(
        objective=Objective.MIN_SHARD_MOVEMENT,
        clients=clients,
        resources=servers,
        lb_params=LoadBalanceParams(tolerance=tolerance),
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _parse_lines(path):
    """Yield (lineno, fields) for non-empty lines after a validated header."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines or lines[0].strip() != f"format_version: {FORMAT_VERSION}":
        raise WorkloadFormatError(f"{path}:1: expected header 'format_version: {FORMAT_VERSION}'")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            out.append((lineno, stripped.split()))
    return out


def _fail(path, lineno, msg):
    raise WorkloadFormatError(f"{path}:{lineno}: {msg}")


def _parse_float(path, lineno, token, what):
    try:
        return float(token)
    except ValueError:
        _fail(path, lineno, f"invalid {what} {token!r}")


def save_topology(topology: Topology, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"format_version: {FORMAT_VERSION}\n")
        fh.write(f"name {topology.name}\n")
        for node in topology.nodes:
            fh.write(f"node {node}\n")
        for src, dst, cap in topology.edges:
            fh.write(f"edge {src} {dst} {cap!r}\n")


def load_topology(path: str) -> Topology:
    name = os.path.basename(path)
    nodes, edges = [], []
    for lineno, fields in _parse_lines(path):
        if fields[0] == "name" and len(fields) == 2:
            name = fields[1]
        elif fields[0] == "node" and len(fields) == 2:
            nodes.append(fields[1])
        elif fields[0] == "edge" and len(fields) == 4:
            cap = _parse_float(path, lineno, fields[3], "capacity")
            edges.append((fields[1], fields[2], cap))
        else:
            _fail(path, lineno, f"unrecognized line {' '.join(fields)!r}")
    try:
        return Topology(name=name, nodes=tuple(nodes), edges=tuple(edges))
    except ValueError as exc:
        raise WorkloadFormatError(f"{path}: {exc}") from exc


def save_traffic(traffic: TrafficMatrix, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"format_version: {FORMAT_VERSION}\n")
        fh.write(f"model {traffic.model}\n")
        fh.write(f"seed {traffic.seed}\n")
        for src, dst, demand in traffic.demands:
            fh.write(f"demand {src} {dst} {demand!r}\n")


def load_traffic(path: str, topology: Topology | None = None) -> TrafficMatrix:
    model, seed, demands = "unknown", 0, []
    nodes = set(topology.nodes) if topology is not None else None
    for lineno, fields in _parse_lines(path):
        if fields[0] == "model" and len(fields) == 2:
            model = fields[1]
        elif fields[0] == "seed" and len(fields) == 2:
            try:
                seed = int(fields[1])
            except ValueError:
                _fail(path, lineno, f"invalid seed {fields[1]!r}")
        elif fields[0] == "demand" and len(fields) == 4:
            src, dst = fields[1], fields[2]
            value = _parse_float(path, lineno, fields[3], "demand")
            if src == dst:
                _fail(path, lineno, f"self-pair {src}")
            if value <= 0:
                _fail(path, lineno, f"demand must be > 0, got {value}")
            if nodes is not None and (src not in nodes or dst not in nodes):
                _fail(path, lineno, f"endpoint not in topology: {src}->{dst}")
            demands.append((src, dst, value))
        else:
            _fail(path, lineno, f"unrecognized line {' '.join(fields)!r}")
    return TrafficMatrix(tuple(demands), model=model, seed=seed)


def save_jobs(instance: ProblemInstance, path: str) -> None:
    types = [r.type_tag for r in instance.resources]
    with open(path, "w") as fh:
        fh.write(f"format_version: {FORMAT_VERSION}\n")
        caps = " ".join(repr(r.capacity) for r in instance.resources)
        fh.write(f"types {len(types)} {caps}\n")
        for job in instance.clients:
            thr = " ".join(repr(job.payload.throughputs[t]) for t in types)
            fh.write(
                f"job {job.id} {job.weight!r} {job.demand!r} {job.payload.num_steps!r} {thr}\n"
            )


def load_jobs(path: str, objective: Objective = Objective.MAX_MIN_FAIRNESS) -> ProblemInstance:
    lines = _parse_lines(path)
    if not lines or lines[0][1][0] != "types":
        _fail(path, lines[0][0] if lines else 2, "expected 'types <n> [capacities...]' first")
    lineno, fields = lines[0]
    try:
        num_types = int(fields[1])
    except (IndexError, ValueError):
        _fail(path, lineno, "invalid types count")
    if len(fields) == 2 + num_types:
        caps = [_parse_float(path, lineno, tok, "capacity") for tok in fields[2:]]
    elif len(fields) == 2:
        caps = None  # derived after jobs are read
    else:
        _fail(path, lineno, f"expected {num_types} capacities, got {len(fields) - 2}")
    type_tags = [f"type{i}" for i in range(num_types)]

    clients = []
    for lineno, fields in lines[1:]:
        if fields[0] != "job" or len(fields) != 5 + num_types:
            _fail(path, lineno, f"expected 'job <id> <weight> <gpus> <steps> <{num_types} throughputs>'")
        weight = _parse_float(path, lineno, fields[2], "weight")
        gpus = _parse_float(path, lineno, fields[3], "gpus")
        steps = _parse_float(path, lineno, fields[4], "steps")
        thr = {
            tag: _parse_float(path, lineno, tok, "throughput")
            for tag, tok in zip(type_tags, fields[5:])
        }
        try:
            clients.append(
                ClientRecord(
                    id=fields[1],
                    kind=ClientKind.JOB,
                    demand=gpus,
                    weight=weight,
                    payload=JobPayload(throughputs=thr, num_steps=steps),
                )
            )
        except ValueError as exc:
            _fail(path, lineno, str(exc))
    if caps is None:
        workers = math.ceil(len(clients) * _MEAN_GPUS / num_types)
        caps = [float(workers)] * num_types
    resources = tuple(
        ResourceRecord(id=tag, type_tag=tag, capacity=cap) for tag, cap in zip(type_tags, caps)
    )
    return ProblemInstance(objective=objective, clients=tuple(clients), resources=resources)


def save_shards(instance: ProblemInstance, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"format_version: {FORMAT_VERSION}\n")
        params = instance.lb_params or LoadBalanceParams()
        fh.write(f"tolerance {params.tolerance!r}\n")
        for server in instance.resources:
            fh.write(f"server {server.id} {server.capacity!r}\n")
        for shard in instance.clients:
            fh.write(
                f"shard {shard.id} {shard.demand!r} {shard.payload.footprint!r} "
                f"{shard.payload.home_server}\n"
            )


def load_shards(path: str) -> ProblemInstance:
    servers, shards = [], []
    tolerance = LoadBalanceParams().tolerance
    for lineno, fields in _parse_lines(path):
        if fields[0] == "tolerance" and len(fields) == 2:
            tolerance = _parse_float(path, lineno, fields[1], "tolerance")
        elif fields[0] == "server" and len(fields) == 3:
            cap = _parse_float(path, lineno, fields[2], "memory")
            try:
                servers.append(ResourceRecord(id=fields[1], type_tag="server", capacity=cap))
            except ValueError as exc:
                _fail(path, lineno, str(exc))
        elif fields[0] == "shard" and len(fields) == 5:
            load = _parse_float(path, lineno, fields[2], "load")
            size = _parse_float(path, lineno, fields[3], "size")
            try:
                shards.append(
                    ClientRecord(
                        id=fields[1],
                        kind=ClientKind.SHARD,
                        demand=load,
                        payload=ShardPayload(footprint=size, home_server=fields[4]),
                    )
                )
            except ValueError as exc:
                _fail(path, lineno, str(exc))
        else:
            _fail(path, lineno, f"unrecognized line {' '.join(fields)!r}")
    server_ids = {s.id for s in servers}
    for shard in shards:
        if shard.payload.home_server not in server_ids:
            raise WorkloadFormatError(
                f"{path}: shard {shard.id} home server {shard.payload.home_server!r} undefined"
            )
    return ProblemInstance(
        objective=Objective.MIN_SHARD_MOVEMENT,
        clients=tuple(shards),
        resources=tuple(servers),
        lb_params=LoadBalanceParams(tolerance=tolerance),
    )


def write_results(path: str, rows: list[dict], extra_columns: tuple[str, ...] = ()) -> None:
    """Append-style results CSV writer; creates the header on first write."""
    columns = RESULTS_COLUMNS + extra_columns
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        if new_file:
            writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})
