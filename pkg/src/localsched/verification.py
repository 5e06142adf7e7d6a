"""Independent oracles: bad-pattern search, baselines, OPT bounds, trace checks.

Nothing here calls the scheduling engine; the oracles only read job sets,
delay tables and traces so they can be coupled against the engine.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .hashing import HashLike, job_delays
from .model import Demand, JobSpec, ParameterError, Path, ReciprocalGraph, congestion, dilation
from .schedulers import Event, SimTrace

# -------- bad patterns --------


@dataclass(frozen=True)
class BadPattern:
    """Buckets keyed by (large step T, machine) holding (job, position) pairs."""

    buckets: Mapping[tuple[int, int], tuple[tuple[int, int], ...]]

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.buckets.values())

    def problems(self, jobs: Sequence[JobSpec], L: int, l: int) -> list[str]:
        """Violations of the structural constraints (empty list means valid)."""
        by_ind = {j.ind: j for j in jobs}
        out = []
        seen: set[int] = set()
        for (T, m), pairs in sorted(self.buckets.items()):
            if not 0 <= T < 2 * L:
                out.append(f"bucket ({T},{m}) outside 0 <= T < 2L")
            if pairs and not l < len(pairs) <= len(jobs):
                out.append(f"bucket ({T},{m}) has size {len(pairs)} not in (l, |J|] = ({l}, {len(jobs)}]")
            for ind, i in pairs:
                job = by_ind.get(ind)
                if job is None or not 0 <= i < len(job.seq) or job.seq[i] != m:
                    out.append(f"pair ({ind},{i}) not on machine {m}")
                if ind in seen:
                    out.append(f"job {ind} appears twice")
                seen.add(ind)
        if not self.size > len(jobs) / 2:
            out.append(f"total size {self.size} is not above |J|/2 = {len(jobs) / 2}")
        return out

    def occurs(self, delays: Mapping[int, int]) -> bool:
        return all(delays[ind] + i == T for (T, _), pairs in self.buckets.items() for ind, i in pairs)

    def to_dict(self) -> dict:
        return {
            "buckets": [
                {"T": T, "machine": m, "pairs": [list(p) for p in pairs]}
                for (T, m), pairs in sorted(self.buckets.items())
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BadPattern":
        return cls({(b["T"], b["machine"]): tuple(tuple(p) for p in b["pairs"]) for b in doc["buckets"]})


@dataclass(frozen=True)
class HashVerdict:
    verdict: str  # good | bad | unknown
    witness: BadPattern | None = None
    nodes: int = 0

    @property
    def good(self) -> bool:
        return self.verdict == "good"

    @property
    def bad(self) -> bool:
        return self.verdict == "bad"

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "nodes": self.nodes}
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        return out


class _BudgetExceeded(Exception):
    pass


def is_good_hash(
    jobs: Sequence[JobSpec],
    h: HashLike,
    L: int,
    l: int,
    threshold_override: int | None = None,
    budget: int = 2_000_000,
) -> HashVerdict:
    """Decide whether any bad pattern occurs for ``jobs`` under delays ``h``.

    Each (job, position) pair can only sit in bucket (h(j) + i, seq(j)_i),
    so the search assigns every job to one of its reachable buckets or to
    none, pruning buckets that can never exceed the threshold.
    """
    jobs = list(jobs)
    thr = l if threshold_override is None else threshold_override
    need = len(jobs) // 2 + 1
    if not jobs:
        return HashVerdict("good")
    delays = job_delays(h, jobs)
    options: dict[int, dict[tuple[int, int], int]] = {}
    reach: Counter = Counter()
    for j in jobs:
        opts = {}
        for i, m in enumerate(j.seq):
            T = delays[j.ind] + i
            if T < 2 * L:
                opts[(T, m)] = i
        options[j.ind] = opts
        reach.update(opts.keys())
    usable = {key for key, n in reach.items() if n > thr}
    order = []
    for j in jobs:
        opts = {key: i for key, i in options[j.ind].items() if key in usable}
        if opts:
            order.append((j.ind, opts))
    if len(order) < need:
        return HashVerdict("good")
    # remaining[x][key]: jobs at index >= x that can reach key
    remaining: list[Counter] = [Counter() for _ in range(len(order) + 1)]
    for x in range(len(order) - 1, -1, -1):
        remaining[x] = remaining[x + 1] + Counter(order[x][1].keys())
    counts: Counter = Counter()
    chosen: list[tuple[int, tuple[int, int], int] | None] = []
    nodes = 0

    def feasible(x: int, assigned: int) -> bool:
        if assigned + (len(order) - x) < need:
            return False
        for key, n in counts.items():
            if 0 < n <= thr and n + remaining[x][key] <= thr:
                return False
        return True

    def dfs(x: int, assigned: int) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise _BudgetExceeded
        if x == len(order):
            return assigned >= need and all(n == 0 or n > thr for n in counts.values())
        ind, opts = order[x]
        # prefer buckets already opened, then the most reachable ones
        for key in sorted(opts, key=lambda k: (-counts[k], -reach[k], k)):
            counts[key] += 1
            chosen.append((ind, key, opts[key]))
            if feasible(x + 1, assigned + 1) and dfs(x + 1, assigned + 1):
                return True
            chosen.pop()
            counts[key] -= 1
        chosen.append(None)
        if feasible(x + 1, assigned) and dfs(x + 1, assigned):
            return True
        chosen.pop()
        return False

    try:
        found = feasible(0, 0) and dfs(0, 0)
    except _BudgetExceeded:
        return HashVerdict("unknown", None, nodes)
    if not found:
        return HashVerdict("good", None, nodes)
    buckets: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for item in chosen:
        if item is not None:
            ind, key, i = item
            buckets[key].append((ind, i))
    return HashVerdict("bad", BadPattern({k: tuple(v) for k, v in buckets.items()}), nodes)


def brute_force_bad_pattern(jobs: Sequence[JobSpec], h: HashLike, L: int, l: int) -> bool:
    """Plain enumeration of every job -> (bucket | none) assignment; tiny sets only."""
    jobs = list(jobs)
    if not jobs:
        return False
    delays = job_delays(h, jobs)
    choices = []
    for j in jobs:
        opts = [None]
        for i, m in enumerate(j.seq):
            if delays[j.ind] + i < 2 * L:
                opts.append((delays[j.ind] + i, m))
        choices.append(opts)
    for combo in itertools.product(*choices):
        sizes = Counter(c for c in combo if c is not None)
        total = sum(sizes.values())
        if total > len(jobs) / 2 and all(n > l for n in sizes.values()):
            return True
    return False


# -------- drop soundness --------


@dataclass(frozen=True)
class DropReport:
    sound: bool
    dropped: int
    violations: tuple[str, ...] = ()
    pattern: BadPattern | None = None
    first_offending: Event | None = None

    def to_dict(self) -> dict:
        out = {"sound": self.sound, "dropped": self.dropped, "violations": list(self.violations)}
        if self.pattern is not None:
            out["pattern"] = self.pattern.to_dict()
        if self.first_offending is not None:
            out["first_offending"] = self.first_offending.to_dict()
        return out


def certify_drop_soundness(
    trace: SimTrace, jobs: Sequence[JobSpec], h: HashLike, L: int, l: int, sub: int = 0
) -> DropReport:
    """Rebuild the dropped buckets of one weak sub-run and check them."""
    jobs = list(jobs)
    by_ind = {j.ind: j for j in jobs}
    delays = job_delays(h, jobs)
    start = trace.subruns[sub].start if trace.subruns else 0
    drops = [e for e in trace.events if e.kind in ("drop", "eliminate") and (e.sub in (None, sub))]
    buckets: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    problems: list[str] = []
    first: Event | None = None
    seen: set[int] = set()
    for e in drops:
        local = e.t - start
        T = local // l
        job = by_ind.get(e.job)
        msg = None
        if job is None:
            msg = f"drop of unknown job {e.job}"
        elif local % l:
            msg = f"drop of job {e.job} at t={local} not on a large-step boundary"
        elif not 0 <= e.pos < len(job.seq) or job.seq[e.pos] != e.machine:
            msg = f"drop of job {e.job} at machine {e.machine} it is not queued at"
        elif delays[e.job] + e.pos != T:
            msg = f"drop of job {e.job} with virt {delays[e.job] + e.pos} != T={T}"
        elif e.job in seen:
            msg = f"job {e.job} dropped twice"
        if msg is None:
            seen.add(e.job)
            buckets[(T, e.machine)].append((e.job, e.pos))
        else:
            problems.append(msg)
            first = first or e
    for (T, m), pairs in sorted(buckets.items()):
        if len(pairs) <= l:
            problems.append(f"drop bucket ({T},{m}) has size {len(pairs)} <= l = {l}")
            if first is None:
                first = next(e for e in drops if e.machine == m and (e.t - start) // l == T)
    pattern = BadPattern({k: tuple(v) for k, v in buckets.items()})
    dropped = pattern.size
    if dropped > len(jobs) / 2 and not problems:
        structural = pattern.problems(jobs, L, l)
        if structural or not pattern.occurs(delays):
            problems.extend(structural or ["reconstructed pattern does not occur"])
    return DropReport(not problems, dropped, tuple(problems), pattern if dropped else None, first)


# -------- trace validators --------


def check_capacity(trace: SimTrace, kinds: Iterable[str] = ("work",)) -> list[str]:
    kinds = tuple(kinds)
    c = Counter((e.t, e.machine) for e in trace.events if e.kind in kinds)
    return [f"machine {m} used {n} times at step {t}" for (t, m), n in sorted(c.items()) if n > 1]


def check_termination(trace: SimTrace, jobs: Sequence[JobSpec]) -> list[str]:
    """Work and push events must cover positions start..len-1 in order."""
    out = []
    covered: dict[int, int] = {j.ind: j.start for j in jobs}
    for e in sorted((e for e in trace.events if e.kind in ("work", "push")), key=lambda e: e.t):
        if e.pos != covered[e.job]:
            out.append(f"job {e.job} handled at pos {e.pos}, expected {covered[e.job]}")
        covered[e.job] = e.pos + (e.size if e.kind == "push" else 1)
    for j in jobs:
        done = covered[j.ind] == len(j.seq)
        if done != (j.ind in trace.completions):
            out.append(f"job {j.ind} completion record disagrees with its events")
    return out


def check_drop_precondition(trace: SimTrace) -> list[str]:
    out = []
    for e in trace.events:
        if e.kind not in ("drop", "eliminate"):
            continue
        sr = trace.subruns[e.sub]
        local = e.t - sr.start
        if local % sr.l or e.size is None or e.size <= sr.l:
            out.append(f"drop of job {e.job} at step {e.t}: boundary={local % sr.l == 0}, size={e.size}, l={sr.l}")
    return out


def check_drop_invariant(trace: SimTrace, jobs: Sequence[JobSpec]) -> list[str]:
    """Replay a greedy trace: no live job may be behind schedule at any step.

    Virtual times only move at large-step boundaries and pushes only raise
    them, so checking each boundary after that step's pushes is complete.
    """
    out = []
    lens = {j.ind: len(j.seq) for j in jobs}
    pos = {j.ind: j.start for j in jobs}
    events = sorted(trace.events, key=lambda e: (e.t, e.kind != "push"))
    cursor = 0
    for sr in trace.subruns:
        state = {ind: 0 for ind in pos}
        for T in range(2 * sr.L):
            g = sr.start + T * sr.l
            # apply everything before step g plus the pushes made at g
            while cursor < len(events) and (
                events[cursor].t < g or (events[cursor].t == g and events[cursor].kind == "push")
            ):
                e = events[cursor]
                if e.kind == "work":
                    pos[e.job] = e.pos + 1
                elif e.kind == "push":
                    pos[e.job] = e.pos + e.size
                elif e.kind == "eliminate" and e.sub == sr.index:
                    state[e.job] = 1
                cursor += 1
            for ind, p in pos.items():
                if p < lens[ind] and not state[ind] and sr.delays[ind] + p < T:
                    out.append(f"live job {ind} behind schedule at step {g} (sub {sr.index}, T={T})")
    return out


def completion_table(trace: SimTrace) -> dict[int, int]:
    return dict(sorted(trace.completions.items()))


# -------- baselines --------


def random_delay_baseline(jobs: Sequence[JobSpec], L: int, seed: int, l: int = 1, max_steps: int = 10**7) -> SimTrace:
    """Random-delay schedule paced in large steps of ``l`` real steps.

    Job ``j`` waits ``h(j) ~ U{0..L-1}`` large steps, then advances at most
    once per large step; machines serve waiting jobs FIFO (arrival step,
    then id).  Completion is reported at the end of the large step holding
    the final move.
    """
    if L < 1:
        raise ParameterError("L must be >= 1")
    jobs = sorted(jobs, key=lambda j: j.ind)
    rng = random.Random(seed)
    delay = {j.ind: rng.randrange(L) for j in jobs}
    tr = SimTrace(total=len(jobs), params_used={"baseline": "random_delay", "L": L, "l": l, "seed": seed})
    pos = {j.ind: j.start for j in jobs}
    arrived = {j.ind: delay[j.ind] * l for j in jobs}
    moved_in: dict[int, int] = {}
    live = set()
    for j in jobs:
        if pos[j.ind] == len(j.seq):
            tr.completions[j.ind] = 0
        else:
            live.add(j.ind)
    by_ind = {j.ind: j for j in jobs}
    t = 0
    while live and t < max_steps:
        T = t // l
        queues: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for ind in live:
            if t >= arrived[ind] and moved_in.get(ind) != T:
                queues[by_ind[ind].seq[pos[ind]]].append((arrived[ind], ind))
        for m in sorted(queues):
            _, ind = min(queues[m])
            tr.events.append(Event(t, "work", ind, pos[ind], m))
            pos[ind] += 1
            moved_in[ind] = T
            arrived[ind] = (T + 1) * l
            if pos[ind] == len(by_ind[ind].seq):
                live.discard(ind)
                tr.completions[ind] = (T + 1) * l
                tr.events.append(Event((T + 1) * l, "complete", ind, pos[ind], None))
        t += 1
    tr.total_steps = t
    tr.final_positions = dict(pos)
    tr.extra["delays"] = delay
    return tr


def fifo_greedy_baseline(jobs: Sequence[JobSpec], max_steps: int = 10**7) -> SimTrace:
    """Work-conserving schedule: each machine serves its lowest-id waiting job."""
    jobs = sorted(jobs, key=lambda j: j.ind)
    by_ind = {j.ind: j for j in jobs}
    pos = {j.ind: j.start for j in jobs}
    tr = SimTrace(total=len(jobs), params_used={"baseline": "fifo_greedy"})
    live = set()
    for j in jobs:
        if pos[j.ind] == len(j.seq):
            tr.completions[j.ind] = 0
        else:
            live.add(j.ind)
    t = 0
    while live and t < max_steps:
        pick: dict[int, int] = {}
        for ind in sorted(live):
            pick.setdefault(by_ind[ind].seq[pos[ind]], ind)
        for m, ind in sorted(pick.items()):
            tr.events.append(Event(t, "work", ind, pos[ind], m))
            pos[ind] += 1
            if pos[ind] == len(by_ind[ind].seq):
                live.discard(ind)
                tr.completions[ind] = t + 1
                tr.events.append(Event(t + 1, "complete", ind, pos[ind], None))
        t += 1
    tr.total_steps = t
    tr.final_positions = dict(pos)
    tr.extra["C"] = congestion(jobs)
    tr.extra["D"] = dilation(jobs)
    return tr


# -------- OPT bounds --------


@dataclass(frozen=True)
class OptBounds:
    lower: int
    upper: int
    exact: bool = False
    flagged: bool = False
    choice: tuple | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "exact": self.exact, "flagged": self.flagged}


def opt_bounds(items: Sequence[JobSpec | Path | Sequence[int]]) -> OptBounds:
    """For a fixed job or path set: ``(max(C, D), C + D)``."""
    seqs = [j.seq if isinstance(j, JobSpec) else (j.edges if isinstance(j, Path) else tuple(j)) for j in items]
    C, D = congestion(seqs), dilation(seqs)
    return OptBounds(max(C, D), C + D)


def simple_paths(graph: ReciprocalGraph, s: int, t: int, cutoff: int | None = None) -> list[Path]:
    """All node-simple paths from s to t (parallel edges collapsed to the lowest id)."""
    if s == t:
        return [Path(())]
    G = nx.DiGraph()
    G.add_nodes_from(range(graph.n))
    for e, (u, v) in enumerate(graph.edges):
        if u != v and not G.has_edge(u, v):
            G.add_edge(u, v, id=e)
    out = []
    for nodes in nx.all_simple_paths(G, s, t, cutoff=cutoff):
        out.append(Path(tuple(G[a][b]["id"] for a, b in zip(nodes, nodes[1:]))))
    out.sort(key=lambda p: (len(p), p.edges))
    return out


def demand_opt(graph: ReciprocalGraph, demand: Demand, budget: int = 200_000) -> OptBounds:
    """Exact min over node-simple path choices of C + D, within an enumeration budget."""
    options = [simple_paths(graph, s, t) for s, t in demand.pairs]
    if not demand.pairs:
        return OptBounds(0, 0, True)
    if any(not o for o in options):
        raise ParameterError("demand has a disconnected pair")
    shortest = [o[0] for o in options]
    lower_d = max(len(p) for p in shortest)
    upper_seed = opt_bounds(shortest).upper
    n_combos = math.prod(len(o) for o in options)
    if n_combos > budget:
        return OptBounds(max(lower_d, 1 if demand.pairs and lower_d else 0), upper_seed, False, True, tuple(shortest))
    best, best_choice = None, None
    for combo in itertools.product(*options):
        v = congestion(p.edges for p in combo) + dilation(p.edges for p in combo)
        if best is None or v < best:
            best, best_choice = v, combo
    return OptBounds(best, best, True, False, best_choice)


# -------- noisy-guarantee helpers --------


def enumerate_good_subsets(
    jobs: Sequence[JobSpec], beta: float, T: int, limit: int = 100_000
) -> list[tuple[JobSpec, ...]]:
    """All subsets with ``|S| >= |J| / beta`` and ``C(S) + D(S) <= T``.

    Depth-first over jobs in id order; congestion and dilation only grow as
    jobs are added, so branches over ``T`` are cut.  Raises if more than
    ``limit`` subsets qualify.
    """
    jobs = sorted(jobs, key=lambda j: j.ind)
    min_size = math.ceil(len(jobs) / beta - 1e-12)
    out: list[tuple[JobSpec, ...]] = []
    counts: Counter = Counter()
    chosen: list[JobSpec] = []

    def rec(x: int, C: int, D: int):
        if len(chosen) + (len(jobs) - x) < min_size:
            return
        if x == len(jobs):
            if chosen and len(chosen) >= min_size:
                out.append(tuple(chosen))
                if len(out) > limit:
                    raise ParameterError(f"more than {limit} good subsets")
            return
        j = jobs[x]
        c2 = C
        for m in j.seq:
            counts[m] += 1
            c2 = max(c2, counts[m])
        d2 = max(D, len(j.seq))
        if c2 + d2 <= T:
            chosen.append(j)
            rec(x + 1, c2, d2)
            chosen.pop()
        for m in j.seq:
            counts[m] -= 1
        rec(x + 1, C, D)

    rec(0, 0, 0)
    return out


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        raise ParameterError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)
