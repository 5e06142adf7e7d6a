"""Value types for unit-job job-shop scheduling and reciprocal-graph routing.

Machines are dense integer ids and sequences are tuples of them.  A
reciprocal graph stores every undirected edge ``k`` as the directed pair
``2k`` (u -> v) and ``2k + 1`` (v -> u), so ``rev(e) == e ^ 1``.  Routing is
reduced to scheduling by treating each directed edge id as a machine id.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Sequence

DEFAULT_C = 2


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


class ParameterError(ValueError):
    """A parameter is out of its admissible range."""


@dataclass(frozen=True)
class JobSpec:
    ind: int
    seq: tuple[int, ...]
    start: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seq", tuple(int(m) for m in self.seq))

    def __len__(self) -> int:
        return len(self.seq)


@dataclass(frozen=True)
class JobState:
    pos: int
    state: int = 0


@dataclass(frozen=True)
class DomainSet:
    sequences: frozenset[tuple[int, ...]]

    @classmethod
    def of(cls, seqs: Iterable[Sequence[int]]) -> "DomainSet":
        return cls(frozenset(tuple(int(m) for m in s) for s in seqs))

    def __contains__(self, seq) -> bool:
        return tuple(seq) in self.sequences

    def __len__(self) -> int:
        return len(self.sequences)

    def sorted(self) -> list[tuple[int, ...]]:
        return sorted(self.sequences, key=lambda s: (len(s), s))


@dataclass(frozen=True)
class Instance:
    machines: int
    jobs: tuple[JobSpec, ...]
    domain: DomainSet | None = None

    def domain_or_jobs(self) -> DomainSet:
        if self.domain is not None:
            return self.domain
        return DomainSet.of(j.seq for j in self.jobs)


def congestion(jobs: Iterable[JobSpec | Sequence[int]]) -> int:
    counts: Counter = Counter()
    for j in jobs:
        counts.update(j.seq if isinstance(j, JobSpec) else tuple(j))
    return max(counts.values(), default=0)


def dilation(jobs: Iterable[JobSpec | Sequence[int]]) -> int:
    return max((len(j.seq if isinstance(j, JobSpec) else tuple(j)) for j in jobs), default=0)


# -------- graphs --------


@dataclass(frozen=True)
class ReciprocalGraph:
    """Directed graph where edge ``e`` and ``e ^ 1`` are reverses of each other."""

    n: int
    edges: tuple[tuple[int, int], ...]
    _out: tuple[tuple[int, ...], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if len(self.edges) % 2:
            raise ContractViolation("reciprocal graph needs an even edge count")
        for k in range(0, len(self.edges), 2):
            (u, v), (a, b) = self.edges[k], self.edges[k + 1]
            if (a, b) != (v, u):
                raise ContractViolation(f"edges {k} and {k + 1} are not reverses")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ContractViolation(f"edge {k} has an endpoint outside [0, {self.n})")
        out: list[list[int]] = [[] for _ in range(self.n)]
        for e, (u, _) in enumerate(self.edges):
            out[u].append(e)
        object.__setattr__(self, "_out", tuple(tuple(x) for x in out))

    @classmethod
    def from_undirected(cls, n: int, pairs: Iterable[Sequence[int]]) -> "ReciprocalGraph":
        edges: list[tuple[int, int]] = []
        for u, v in pairs:
            edges.append((int(u), int(v)))
            edges.append((int(v), int(u)))
        return cls(n, tuple(edges))

    @property
    def m(self) -> int:
        return len(self.edges)

    @staticmethod
    def rev(e: int) -> int:
        return e ^ 1

    def head(self, e: int) -> int:
        return self.edges[e][0]

    def tail(self, e: int) -> int:
        return self.edges[e][1]

    def out_edges(self, v: int) -> tuple[int, ...]:
        return self._out[v]

    def undirected_pairs(self) -> list[tuple[int, int]]:
        return [self.edges[k] for k in range(0, len(self.edges), 2)]

    def edge_between(self, u: int, v: int) -> int:
        for e in self._out[u]:
            if self.edges[e][1] == v:
                return e
        raise ContractViolation(f"no edge {u}->{v}")

    def is_tree(self) -> bool:
        pairs = self.undirected_pairs()
        if len(pairs) != self.n - 1 or self.n == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for e in self._out[u]:
                v = self.edges[e][1]
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n


@dataclass(frozen=True)
class Path:
    edges: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(int(e) for e in self.edges))

    def __len__(self) -> int:
        return len(self.edges)

    def nodes(self, graph: ReciprocalGraph, start: int | None = None) -> tuple[int, ...]:
        if not self.edges:
            return () if start is None else (start,)
        out = [graph.head(self.edges[0])]
        for e in self.edges:
            if graph.head(e) != out[-1]:
                raise ContractViolation(f"path edges not adjacent at edge {e}")
            out.append(graph.tail(e))
        return tuple(out)

    def is_valid(self, graph: ReciprocalGraph) -> bool:
        try:
            if any(not 0 <= e < graph.m for e in self.edges):
                return False
            self.nodes(graph)
        except ContractViolation:
            return False
        return True

    def is_simple(self) -> bool:
        return len(set(self.edges)) == len(self.edges)

    def is_node_simple(self, graph: ReciprocalGraph) -> bool:
        ns = self.nodes(graph)
        return len(set(ns)) == len(ns)

    @classmethod
    def from_nodes(cls, graph: ReciprocalGraph, nodes: Sequence[int]) -> "Path":
        return cls(tuple(graph.edge_between(a, b) for a, b in zip(nodes, nodes[1:])))


def path_to_sequence(path: Path | Sequence[int]) -> list[int]:
    """Edge-to-machine relabeling; repeats are preserved."""
    edges = path.edges if isinstance(path, Path) else path
    return [int(e) for e in edges]


@dataclass(frozen=True)
class PacketSpec:
    ind: int
    source: int
    sink: int


@dataclass(frozen=True)
class Demand:
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(s), int(t)) for s, t in self.pairs))

    def is_01(self) -> bool:
        return len(set(self.pairs)) == len(self.pairs)

    def is_permutation(self) -> bool:
        srcs = [s for s, _ in self.pairs]
        snks = [t for _, t in self.pairs]
        return len(set(srcs)) == len(srcs) and len(set(snks)) == len(snks)

    def packets(self, first_ind: int = 1) -> list[PacketSpec]:
        return [PacketSpec(first_ind + i, s, t) for i, (s, t) in enumerate(self.pairs)]


# -------- validation --------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    job: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [vars(v) for v in self.violations]}


def validate_instance(
    jobs: Iterable[JobSpec], domain: DomainSet | None, machines: int, c: float = DEFAULT_C
) -> ValidationReport:
    jobs = list(jobs)
    bound = machines**c
    found: list[Violation] = []
    seen: set[int] = set()
    for j in jobs:
        if j.ind < 1 or j.ind > bound:
            found.append(Violation("identifier out of range", f"ind {j.ind} not in [1, {bound:g}]", j.ind))
        if j.ind in seen:
            found.append(Violation("duplicate identifier", f"ind {j.ind} used twice", j.ind))
        seen.add(j.ind)
        bad = [m for m in j.seq if not 0 <= m < machines]
        if bad:
            found.append(Violation("unknown machine", f"machines {bad} outside [0, {machines})", j.ind))
        if domain is not None and j.seq not in domain:
            found.append(Violation("unsupported sequence", f"seq {list(j.seq)} not in domain", j.ind))
        if not 0 <= j.start <= len(j.seq):
            found.append(Violation("bad start", f"start {j.start} outside [0, {len(j.seq)}]", j.ind))
    if len(jobs) > bound:
        found.append(Violation("too many jobs", f"|J| = {len(jobs)} exceeds |M|^c = {bound:g}"))
    if domain is not None and len(domain) > bound:
        found.append(Violation("domain too large", f"|S| = {len(domain)} exceeds |M|^c = {bound:g}"))
    return ValidationReport(tuple(found))


# -------- files --------


def instance_to_dict(inst: Instance) -> dict:
    out = {
        "machines": inst.machines,
        "jobs": [
            {"ind": j.ind, "seq": list(j.seq), **({"start": j.start} if j.start else {})} for j in inst.jobs
        ],
    }
    if inst.domain is not None:
        out["domain"] = [list(s) for s in inst.domain.sorted()]
    return out


def instance_from_dict(doc: dict) -> Instance:
    try:
        jobs = tuple(JobSpec(int(j["ind"]), tuple(j["seq"]), int(j.get("start", 0))) for j in doc["jobs"])
        domain = DomainSet.of(doc["domain"]) if "domain" in doc else None
        return Instance(int(doc["machines"]), jobs, domain)
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed instance document: {exc!r}") from exc


def graph_to_dict(g: ReciprocalGraph) -> dict:
    return {"n": g.n, "edges": [list(p) for p in g.undirected_pairs()]}


def graph_from_dict(doc: dict) -> ReciprocalGraph:
    try:
        return ReciprocalGraph.from_undirected(int(doc["n"]), doc["edges"])
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed graph document: {exc!r}") from exc


def demand_to_dict(d: Demand) -> dict:
    return {"pairs": [list(p) for p in d.pairs]}


def demand_from_dict(doc: dict) -> Demand:
    try:
        return Demand(tuple(tuple(p) for p in doc["pairs"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed demand document: {exc!r}") from exc


def read_json(path: str | FsPath, what: str = "file") -> dict:
    p = FsPath(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return json.loads(p.read_text())


def write_json(path: str | FsPath, doc) -> None:
    p = FsPath(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path, "instance"))


def load_graph(path) -> ReciprocalGraph:
    return graph_from_dict(read_json(path, "graph"))


def load_demand(path) -> Demand:
    return demand_from_dict(read_json(path, "demand"))
