"""Packet routing with return, the semi-oblivious router and the virtual-graph wrapper.

Edges are machines: a packet on path ``p`` at node index ``i`` waits for
edge ``p[i]``.  A weak call with return runs ``4 L l`` steps.  The first
half forwards exactly like the stateless weak scheduler.  The second half
replays the large steps backwards so any packet that did not reach its sink
walks back to its source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import networkx as nx

from .hashing import HashFamily, HashLike, Knobs, derive_params, hash_path, sample_hash_set
from .model import (
    ContractViolation,
    Demand,
    PacketSpec,
    ParameterError,
    Path,
    ReciprocalGraph,
    read_json,
    write_json,
)
from .schedulers import Event, SchedulerParams, SimTrace, SubRun, next_pow2, noisy_threshold


class RoutingRejected(ContractViolation):
    """Inputs to a router failed a precondition."""


class ProviderError(RuntimeError):
    """A path-set provider failed; the message names the provider."""


# -------- path sets --------


@dataclass(frozen=True)
class PathSet:
    alpha: int
    paths: Mapping[tuple[int, int], tuple[Path, ...]]

    def get(self, s: int, t: int) -> tuple[Path, ...]:
        return tuple(self.paths.get((s, t), ()))

    def union(self) -> frozenset[tuple[int, ...]]:
        return frozenset(p.edges for ps in self.paths.values() for p in ps)

    def validate(self, graph: ReciprocalGraph) -> list[str]:
        problems = []
        for (s, t), ps in sorted(self.paths.items()):
            if len(ps) > self.alpha:
                problems.append(f"P({s},{t}) has {len(ps)} paths, alpha is {self.alpha}")
            for p in ps:
                if not p.is_valid(graph):
                    problems.append(f"P({s},{t}) holds an invalid path {list(p.edges)}")
                    continue
                ns = p.nodes(graph, s)
                if ns[0] != s or ns[-1] != t:
                    problems.append(f"P({s},{t}) path {list(p.edges)} runs {ns[0]}->{ns[-1]}")
                if not p.is_node_simple(graph):
                    problems.append(f"P({s},{t}) path {list(p.edges)} is not node-simple")
        return problems

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "entries": [
                {"s": s, "t": t, "paths": [list(p.edges) for p in ps]}
                for (s, t), ps in sorted(self.paths.items())
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PathSet":
        try:
            paths = {
                (int(e["s"]), int(e["t"])): tuple(Path(tuple(p)) for p in e["paths"])
                for e in doc["entries"]
            }
            return cls(int(doc["alpha"]), paths)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed path-set document: {exc!r}") from exc


def save_path_set(path, ps: PathSet) -> None:
    write_json(path, ps.to_dict())


def load_path_set(path, graph: ReciprocalGraph | None = None) -> PathSet:
    ps = PathSet.from_dict(read_json(path, "path set"))
    if graph is not None:
        problems = ps.validate(graph)
        if problems:
            raise ParameterError("; ".join(problems))
    return ps


def _digraph(graph: ReciprocalGraph) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(graph.n))
    for e, (u, v) in enumerate(graph.edges):
        if not g.has_edge(u, v):
            g.add_edge(u, v, eid=e)
    return g


def build_tree_path_set(graph: ReciprocalGraph, pairs: Iterable[tuple[int, int]] | None = None) -> PathSet:
    """Unique tree paths for every ordered pair (or just ``pairs``)."""
    if not graph.is_tree():
        raise ParameterError("tree path set needs a connected acyclic graph")
    # parent pointers from root 0, then splice the two root paths
    parent = {0: None}
    up_edge: dict[int, int] = {}
    depth = {0: 0}
    order = [0]
    for u in order:
        for e in graph.out_edges(u):
            v = graph.tail(e)
            if v not in parent:
                parent[v] = u
                up_edge[v] = e ^ 1
                depth[v] = depth[u] + 1
                order.append(v)

    def tree_path(s: int, t: int) -> Path:
        a, b = s, t
        left, right = [], []
        while depth[a] > depth[b]:
            left.append(up_edge[a])
            a = parent[a]
        while depth[b] > depth[a]:
            right.append(up_edge[b] ^ 1)
            b = parent[b]
        while a != b:
            left.append(up_edge[a])
            a = parent[a]
            right.append(up_edge[b] ^ 1)
            b = parent[b]
        return Path(tuple(left + right[::-1]))

    if pairs is None:
        pairs = [(s, t) for s in range(graph.n) for t in range(graph.n)]
    return PathSet(1, {(s, t): (tree_path(s, t),) for s, t in pairs})


def simple_path_edges(g: nx.DiGraph, nodes: Sequence[int]) -> Path:
    return Path(tuple(g.edges[a, b]["eid"] for a, b in zip(nodes, nodes[1:])))


def build_ksp_path_set(
    graph: ReciprocalGraph, alpha: int, pairs: Iterable[tuple[int, int]] | None = None
) -> PathSet:
    """Up to ``alpha`` shortest simple paths per pair, shortest first."""
    if alpha < 1:
        raise ParameterError(f"alpha must be >= 1, got {alpha}")
    g = _digraph(graph)
    if pairs is None:
        pairs = [(s, t) for s in range(graph.n) for t in range(graph.n)]
    out: dict[tuple[int, int], tuple[Path, ...]] = {}
    for s, t in pairs:
        if s == t:
            out[(s, t)] = (Path(()),)
            continue
        found = []
        try:
            for nodes in nx.shortest_simple_paths(g, s, t):
                found.append(simple_path_edges(g, nodes))
                if len(found) == alpha:
                    break
        except nx.NetworkXNoPath:
            pass
        out[(s, t)] = tuple(found)
    return PathSet(alpha, out)


# -------- weak step with return --------


@dataclass(frozen=True)
class Routed:
    packet: PacketSpec
    path: Path
    nodes: tuple[int, ...]

    def index(self, v: int) -> int:
        try:
            return self.nodes.index(v)
        except ValueError:
            raise ContractViolation(f"packet {self.packet.ind} at node {v}, which is not on its path")


def _path_delay(h: HashLike, r: Routed) -> int:
    if isinstance(h, HashFamily):
        return hash_path(h, r.path)
    return h[r.packet.ind]


def weak_return_step(
    graph: ReciprocalGraph,
    node: int,
    t: int,
    L: int,
    l: int,
    h: HashLike,
    queue: Iterable[Routed],
) -> dict[int, int]:
    """Forwarding decisions at ``node``: out-edge id -> packet ind (lowest id wins)."""
    if not 0 <= t < 4 * L * l:
        raise ContractViolation(f"t={t} outside [0, 4Ll={4 * L * l})")
    buckets: dict[int, list[int]] = {}
    forward = t < 2 * L * l
    T = t // l if forward else (4 * L * l - 1 - t) // l
    for r in queue:
        i = r.index(node)
        last = len(r.nodes) - 1
        if i == last:
            continue  # delivered
        d = _path_delay(h, r)
        if forward:
            if d + i == T:
                buckets.setdefault(r.path.edges[i], []).append(r.packet.ind)
        elif i >= 1 and d + i - 1 == T:
            buckets.setdefault(graph.rev(r.path.edges[i - 1]), []).append(r.packet.ind)
    out = {}
    for e, inds in buckets.items():
        if graph.head(e) != node:
            raise ContractViolation(f"edge {e} does not leave node {node}")
        if not forward or len(inds) <= l:
            out[e] = min(inds)
    return out


# -------- engine --------


class RoutingEngine:
    """Packet positions (node indices on the assigned path) across weak calls."""

    def __init__(
        self,
        graph: ReciprocalGraph,
        packets: Sequence[PacketSpec],
        positions: Mapping[int, int] | None = None,
    ):
        self.graph = graph
        self.packets = {p.ind: p for p in packets}
        if len(self.packets) != len(packets):
            raise RoutingRejected("duplicate packet identifiers")
        for p in packets:
            if not (0 <= p.source < graph.n and 0 <= p.sink < graph.n):
                raise RoutingRejected(f"packet {p.ind} endpoint outside the graph")
        self.at = {p.ind: p.source for p in packets}
        self.at.update(positions or {})
        self.clock = 0
        self.trace = SimTrace(total=len(packets))
        self.undelivered = set()
        for p in packets:
            if self.at[p.ind] == p.sink:
                self._deliver(p.ind, 0, None)
            else:
                self.undelivered.add(p.ind)

    @property
    def done(self) -> bool:
        return not self.undelivered

    def _deliver(self, ind: int, when: int, sub) -> None:
        self.undelivered.discard(ind)
        self.trace.completions[ind] = when
        self.trace.events.append(Event(when, "deliver", ind, 0, None, sub))

    def check_assignment(
        self, assignment: Mapping[int, Path], domain: frozenset | None = None
    ) -> dict[int, Routed]:
        g = self.graph
        routed: dict[int, Routed] = {}
        # keyed by node sequence: empty paths at different nodes are distinct
        seen: dict[tuple[int, ...], int] = {}
        for ind in sorted(assignment):
            p = self.packets.get(ind)
            if p is None:
                raise RoutingRejected(f"assignment names unknown packet {ind}")
            path = assignment[ind]
            if not path.is_valid(g):
                raise RoutingRejected(f"packet {ind}: path {list(path.edges)} is not a walk in the graph")
            nodes = path.nodes(g, p.source)
            if nodes[0] != p.source or nodes[-1] != p.sink:
                raise RoutingRejected(f"packet {ind}: path runs {nodes[0]}->{nodes[-1]}, not {p.source}->{p.sink}")
            if len(set(nodes)) != len(nodes):
                raise RoutingRejected(f"packet {ind}: path is not node-simple")
            if domain is not None and path.edges not in domain:
                raise RoutingRejected(f"packet {ind}: path {list(path.edges)} not in the path domain")
            if nodes in seen:
                raise RoutingRejected(f"packets {seen[nodes]} and {ind} share a path")
            seen[nodes] = ind
            here = self.at[ind]
            if here not in (nodes[0], nodes[-1]):
                raise RoutingRejected(f"packet {ind} at node {here}, not an endpoint of its path")
            routed[ind] = Routed(p, path, nodes)
        return routed

    def weak_call(self, routed: Mapping[int, Routed], delays: Mapping[int, int], L: int, l: int, **meta) -> SubRun:
        """One ``4 L l``-step call.  Idle stretches are skipped exactly."""
        g = self.graph
        steps = 4 * L * l
        half = 2 * L * l
        sub = len(self.trace.subruns)
        rec = SubRun(sub, self.clock, steps, L, l, dict(delays), **meta)
        self.trace.subruns.append(rec)
        events = self.trace.events
        idx = {}
        for ind, r in routed.items():
            if ind in self.undelivered:
                idx[ind] = r.index(self.at[ind])
        live = {ind for ind in idx if idx[ind] < len(routed[ind].nodes) - 1}
        t = 0
        while t < steps and live:
            forward = t < half
            if forward:
                T = t // l
            else:
                T = (steps - 1 - t) // l
            buckets: dict[int, list[int]] = {}
            nxt = None
            for ind in live:
                i = idx[ind]
                d = delays[ind]
                r = routed[ind]
                if forward:
                    v = d + i
                    if v == T:
                        buckets.setdefault(r.path.edges[i], []).append(ind)
                    elif v > T and (nxt is None or v < nxt):
                        nxt = v
                elif i >= 1:
                    v = d + i - 1
                    if v == T:
                        buckets.setdefault(g.rev(r.path.edges[i - 1]), []).append(ind)
                    elif v < T and (nxt is None or v > nxt):
                        nxt = v
            moves = []
            for e in sorted(buckets):
                inds = buckets[e]
                if not forward or len(inds) <= l:
                    moves.append((e, min(inds)))
            g_t = self.clock + t
            for e, ind in moves:
                i = idx[ind]
                events.append(Event(g_t, "forward" if forward else "return", ind, i, e, sub))
                if forward:
                    idx[ind] = i + 1
                    if idx[ind] == len(routed[ind].nodes) - 1:
                        live.discard(ind)
                        self.at[ind] = routed[ind].nodes[-1]
                        self._deliver(ind, g_t + 1, sub)
                else:
                    idx[ind] = i - 1
            if moves:
                t += 1
                continue
            # nothing moved: jump to the next large step that has candidates
            if forward:
                if nxt is None or nxt >= 2 * L:
                    t = half
                else:
                    t = max(nxt * l, t + 1)
            else:
                if nxt is None:
                    break
                t = max(steps - (nxt + 1) * l, t + 1)
        for ind, i in idx.items():
            if ind in self.undelivered:
                self.at[ind] = routed[ind].nodes[i]
        self.clock += steps
        return rec

    def endpoint_violations(self, routed: Mapping[int, Routed]) -> list[str]:
        out = []
        for ind, r in routed.items():
            here = self.at[ind]
            if ind in self.undelivered and here != r.nodes[0]:
                out.append(f"undelivered packet {ind} at node {here}, not its source {r.nodes[0]}")
            elif ind not in self.undelivered and here != r.nodes[-1]:
                out.append(f"delivered packet {ind} at node {here}, not its sink {r.nodes[-1]}")
        return out

    def finish(self, total_steps: int, params_used: dict) -> SimTrace:
        tr = self.trace
        tr.total_steps = total_steps
        tr.final_positions = {ind: self.at[ind] for ind in sorted(self.packets)}
        tr.params_used = params_used
        return tr


# -------- noisy scheduling with return --------


def _routing_params(graph: ReciprocalGraph, params: SchedulerParams, node_count: int | None = None):
    n = node_count if node_count is not None else graph.n
    return derive_params(max(graph.m, 2), params.c, params.b, params.knobs, l_size=max(n, 2))


def _noisy_call(eng, routed, beta, L, lp, k, master_seed, key, **meta) -> list[str]:
    hs = sample_hash_set(master_seed, k, L)
    for j, fam in enumerate(hs):
        if eng.done or not (routed.keys() & eng.undelivered):
            eng.clock += 4 * L * lp
            continue
        delays = {ind: hash_path(fam, key(r.path)) for ind, r in routed.items()}
        eng.weak_call(routed, delays, L, lp, scale=hs.scale, member=j, seed=fam.seed, **meta)
    return eng.endpoint_violations(routed)


def run_return_noisy_scheduler(
    graph: ReciprocalGraph,
    packets: Sequence[PacketSpec],
    beta: float,
    domain_paths: Iterable | None,
    T_bound: int,
    master_seed: int = 0,
    assignment: Mapping[int, Path] | None = None,
    params: SchedulerParams | None = None,
    positions: Mapping[int, int] | None = None,
) -> SimTrace:
    """``k`` weak calls with return, each ``4 L l'`` steps with ``l' = ceil(4 beta l)``.

    ``assignment`` maps packet ind to its path.  Without one, a packet whose
    ``domain_paths`` hold exactly one ``source -> sink`` path gets that path.
    """
    params = params or SchedulerParams()
    if beta <= 1:
        raise ParameterError(f"beta must exceed 1, got {beta}")
    if T_bound < 1:
        raise ParameterError(f"T_bound must be >= 1, got {T_bound}")
    domain = None
    if domain_paths is not None:
        if isinstance(domain_paths, PathSet):
            domain = domain_paths.union()
        else:
            domain = frozenset(p.edges if isinstance(p, Path) else tuple(p) for p in domain_paths)
    eng = RoutingEngine(graph, packets, positions)
    if assignment is None:
        if not isinstance(domain_paths, PathSet):
            raise ParameterError("an assignment is needed unless domain_paths is a PathSet")
        assignment = {}
        for p in packets:
            ps = domain_paths.get(p.source, p.sink)
            if len(ps) != 1:
                raise RoutingRejected(f"packet {p.ind}: {len(ps)} candidate paths, need an explicit assignment")
            assignment[p.ind] = ps[0]
    missing = [p.ind for p in packets if p.ind not in assignment]
    if missing:
        raise RoutingRejected(f"packets without a path: {missing}")
    routed = eng.check_assignment(assignment, domain)
    dp = _routing_params(graph, params)
    L = next_pow2(T_bound)
    lp = noisy_threshold(dp.l, beta)
    eng.trace.violations.extend(_noisy_call(eng, routed, beta, L, lp, dp.k, master_seed, lambda p: p))
    used = {
        "algorithm": "return-noisy",
        "nodes": graph.n,
        "edges": graph.m,
        "L": L,
        "l": dp.l,
        "l_prime": lp,
        "k": dp.k,
        "beta": beta,
        "T_bound": T_bound,
        "master_seed": master_seed,
        "flags": list(dp.flags),
        "knobs": params.knobs.to_dict(),
    }
    return eng.finish(dp.k * 4 * L * lp, used)


# -------- semi-oblivious router --------


def sweep_top(n: int, knobs: Knobs) -> int:
    top = n**10
    return min(top, knobs.max_L) if knobs.max_L is not None else top


def router_reps(n: int, knobs: Knobs) -> int:
    if knobs.reps is not None:
        return int(knobs.reps)
    return 18 * math.ceil(math.log2(max(n, 2))) + 1


def semi_obl_router(
    graph: ReciprocalGraph,
    packets: Sequence[PacketSpec],
    path_set: PathSet,
    master_seed: int = 0,
    params: SchedulerParams | None = None,
    node_count: int | None = None,
    hash_key: Callable[[Path], Sequence[int]] | None = None,
) -> SimTrace:
    """Sweep ``L = 4, 8, ...``; each scale repeats all ``alpha`` path indices.

    ``node_count`` overrides ``n`` in the parameter formulas (the virtual
    graph is much larger than what gets materialized).  ``hash_key`` maps a
    path to the edge list that is hashed.
    """
    params = params or SchedulerParams()
    pairs = [(p.source, p.sink) for p in packets]
    if not Demand(tuple(pairs)).is_01():
        raise RoutingRejected("demand is not a {0,1}-demand: a (source, sink) pair repeats")
    empty = sorted({pr for pr in pairs if not path_set.get(*pr)})
    if empty:
        raise RoutingRejected(f"no candidate path for pairs {empty}")
    n = node_count if node_count is not None else graph.n
    key = hash_key or (lambda p: p)
    alpha = path_set.alpha
    beta = 2 * alpha
    dp = _routing_params(graph, params, n)
    lp = noisy_threshold(dp.l, beta)
    reps = router_reps(n, params.knobs)
    top = sweep_top(n, params.knobs)
    domain = path_set.union()
    eng = RoutingEngine(graph, packets)
    phases = []
    delivered_at: dict[int, int] = {ind: 0 for ind in eng.trace.completions}
    remaining_sizes = [len(eng.undelivered)]
    total = 0
    L = 4
    while L <= top:
        call = dp.k * 4 * L * lp
        if eng.done:
            # remaining phases only burn clock; account for them in closed form
            left = 0
            LL = L
            while LL <= top:
                left += reps * alpha * dp.k * 4 * LL * lp
                LL *= 2
            total += left
            eng.clock += left
            break
        for i in range(reps):
            for j in range(alpha):
                total += call
                if eng.done:
                    eng.clock += call
                    continue
                assignment = {}
                for ind in sorted(eng.undelivered):
                    p = eng.packets[ind]
                    ps = path_set.get(p.source, p.sink)
                    if j < len(ps):
                        assignment[ind] = ps[j]
                before = len(eng.undelivered)
                if not assignment:
                    eng.clock += call
                    phases.append({"L": L, "i": i, "j": j, "attempted": 0, "delivered": 0})
                    continue
                routed = eng.check_assignment(assignment, domain)
                eng.trace.violations.extend(
                    _noisy_call(eng, routed, beta, L, lp, dp.k, master_seed, key, rep=i)
                )
                got = before - len(eng.undelivered)
                for ind in assignment:
                    if ind not in eng.undelivered and ind not in delivered_at:
                        delivered_at[ind] = L
                phases.append({"L": L, "i": i, "j": j, "attempted": len(assignment), "delivered": got})
                remaining_sizes.append(len(eng.undelivered))
        L *= 2
    if any(b > a for a, b in zip(remaining_sizes, remaining_sizes[1:])):
        eng.trace.violations.append("remaining demand grew between phases")
    eng.trace.extra["phases"] = phases
    eng.trace.extra["delivered_at_L"] = {str(k): v for k, v in sorted(delivered_at.items())}
    used = {
        "algorithm": "semi-oblivious",
        "nodes": n,
        "edges": graph.m,
        "alpha": alpha,
        "beta": beta,
        "l": dp.l,
        "l_prime": lp,
        "k": dp.k,
        "reps": reps,
        "max_L": top,
        "master_seed": master_seed,
        "flags": list(dp.flags),
        "knobs": params.knobs.to_dict(),
        "c": params.c,
        "b": params.b,
    }
    return eng.finish(total, used)


# -------- virtual graph wrapper --------


@dataclass
class VirtualGraph:
    """``base`` plus ``n^c`` leaves per node; only the leaves in use are built.

    Leaf ``(b, i)`` gets a canonical undirected edge index
    ``m/2 + b * I + (i - 1)`` with ``I = n^c``, so hashed paths do not depend
    on which leaves happen to be materialized.
    """

    base: ReciprocalGraph
    c: float = 2
    leaves: dict[tuple[int, int], int] = field(default_factory=dict)

    @property
    def per_node(self) -> int:
        return int(math.floor(self.base.n**self.c))

    @property
    def virtual_nodes(self) -> int:
        return self.base.n * (1 + self.per_node)

    def leaf(self, b: int, i: int) -> int:
        if not 1 <= i <= self.per_node:
            raise RoutingRejected(f"identifier {i} outside [1, n^c = {self.per_node}]")
        if not 0 <= b < self.base.n:
            raise RoutingRejected(f"node {b} outside the graph")
        key = (b, i)
        if key not in self.leaves:
            self.leaves[key] = self.base.n + len(self.leaves)
        return self.leaves[key]

    def resolve(self, node: int) -> tuple[int, int | None]:
        """``(anchor, ind)`` for a leaf; ``(node, None)`` for a base node."""
        if node < self.base.n:
            return node, None
        for key, v in self.leaves.items():
            if v == node:
                return key
        raise ContractViolation(f"node {node} is not materialized")

    def materialize(self) -> ReciprocalGraph:
        pairs = list(self.base.undirected_pairs())
        for (b, _), v in self.leaves.items():
            pairs.append((b, v))
        return ReciprocalGraph.from_undirected(self.base.n + len(self.leaves), pairs)

    def leaf_edge(self, b: int, i: int) -> int:
        """Materialized id of the directed edge ``b -> b^i``."""
        order = list(self.leaves)
        return self.base.m + 2 * order.index((b, i))

    def canonical(self, path: Path) -> tuple[int, ...]:
        m = self.base.m
        order = list(self.leaves)
        out = []
        for e in path.edges:
            if e < m:
                out.append(e)
            else:
                q, d = divmod(e - m, 2)
                b, i = order[q]
                out.append(m + 2 * (b * self.per_node + i - 1) + d)
        return tuple(out)


PathSetProvider = Callable[[ReciprocalGraph, list[tuple[int, int]]], PathSet]


def tree_provider(graph: ReciprocalGraph, pairs: list[tuple[int, int]]) -> PathSet:
    return build_tree_path_set(graph, pairs)


def ksp_provider(alpha: int) -> PathSetProvider:
    def provide(graph, pairs):
        return build_ksp_path_set(graph, alpha, pairs)

    provide.__name__ = f"ksp_provider(alpha={alpha})"
    return provide


def lift_path_set(vg: VirtualGraph, base_ps: PathSet, lifted: Mapping[int, tuple[int, int, int]]) -> PathSet:
    """Append the leaf edge ``t -> t^ind`` to every base ``s -> t`` path."""
    out: dict[tuple[int, int], tuple[Path, ...]] = {}
    for ind, (s, t, leaf) in lifted.items():
        e = vg.leaf_edge(t, ind)
        out[(s, leaf)] = tuple(Path(p.edges + (e,)) for p in base_ps.get(s, t))
    return PathSet(base_ps.alpha, out)


def route(
    graph: ReciprocalGraph,
    packets: Sequence[PacketSpec],
    master_seed: int = 0,
    path_set_provider: PathSetProvider | None = None,
    params: SchedulerParams | None = None,
) -> SimTrace:
    """Route an arbitrary demand by lifting each sink to a private leaf."""
    params = params or SchedulerParams()
    provider = path_set_provider or tree_provider
    vg = VirtualGraph(graph, params.c)
    inds = [p.ind for p in packets]
    if len(set(inds)) != len(inds):
        raise RoutingRejected("packet identifiers are not unique")
    lifted = {p.ind: (p.source, p.sink, vg.leaf(p.sink, p.ind)) for p in packets}
    name = getattr(provider, "__name__", repr(provider))
    pairs = sorted({(s, t) for s, t, _ in lifted.values()})
    try:
        base_ps = provider(graph, pairs)
    except Exception as exc:
        raise ProviderError(f"path-set provider {name} failed: {exc}") from exc
    if not isinstance(base_ps, PathSet):
        raise ProviderError(f"path-set provider {name} returned {type(base_ps).__name__}, not a PathSet")
    problems = base_ps.validate(graph)
    if problems:
        raise ProviderError(f"path-set provider {name} returned invalid paths: {'; '.join(problems)}")
    lifted_ps = lift_path_set(vg, base_ps, lifted)
    g2 = vg.materialize()
    virt_packets = [PacketSpec(p.ind, p.source, lifted[p.ind][2]) for p in packets]
    tr = semi_obl_router(
        g2, virt_packets, lifted_ps, master_seed, params,
        node_count=vg.virtual_nodes, hash_key=vg.canonical,
    )
    projected = {}
    for p in packets:
        ok = p.ind in tr.completions
        if ok:
            anchor, who = vg.resolve(tr.final_positions[p.ind])
            if (anchor, who) != (p.sink, p.ind):
                tr.violations.append(f"packet {p.ind} reported delivered at {anchor}^{who}")
        projected[str(p.ind)] = {"sink": p.sink, "delivered": ok, "step": tr.completions.get(p.ind)}
    tr.extra["projected"] = projected
    tr.extra["provider"] = name
    tr.params_used["virtual"] = {"per_node": vg.per_node, "materialized_leaves": len(vg.leaves)}
    return tr


__all__ = [
    "PathSet",
    "ProviderError",
    "Routed",
    "RoutingEngine",
    "RoutingRejected",
    "VirtualGraph",
    "build_ksp_path_set",
    "build_tree_path_set",
    "ksp_provider",
    "lift_path_set",
    "load_path_set",
    "route",
    "router_reps",
    "run_return_noisy_scheduler",
    "save_path_set",
    "semi_obl_router",
    "tree_provider",
    "weak_return_step",
]
