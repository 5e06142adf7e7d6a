"""Discrete-time engine for the weak, full, greedy-enabled and noisy schedulers.

Time is synchronous.  Within a step every machine decides on the positions
at the start of the step, then all decisions are applied at once.  In the
greedy-enabled model the adversary pushes first, then machines act.

A *sub-run* is one call of a weak subroutine: ``2 L l`` steps with a fixed
table of delays.  The full schedulers chain sub-runs over scales ``L``,
repetitions and hash-set members; job positions carry over between
sub-runs.  Idle stretches are skipped when no adversary can interfere,
which is exact because without pushes the on-schedule set of a machine
can only shrink inside a large step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .adversary import AdversaryStrategy, apply_pushes, make_view
from .hashing import INF, HashFamily, HashLike, Knobs, derive_params, hash_job, job_delays, sample_hash_set
from .model import (
    ContractViolation,
    DomainSet,
    Instance,
    JobSpec,
    JobState,
    ParameterError,
    ValidationReport,
    congestion,
    dilation,
    validate_instance,
)

TIE_BREAKS = ("lowest_id", "highest_id")
REPETITION_MODES = ("proof", "pseudocode")


class InstanceRejected(ContractViolation):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in report.violations))


@dataclass(frozen=True)
class SchedulerParams:
    c: float = 2
    b: float = 1
    knobs: Knobs = field(default_factory=Knobs)
    tie_break: str = "lowest_id"
    beta: float | None = None
    T_bound: int | None = None
    repetitions: str = "proof"

    def __post_init__(self):
        if self.tie_break not in TIE_BREAKS:
            raise ParameterError(f"unknown tie_break {self.tie_break!r}")
        if self.repetitions not in REPETITION_MODES:
            raise ParameterError(f"unknown repetitions mode {self.repetitions!r}")
        if self.beta is not None and self.beta <= 1:
            raise ParameterError(f"beta must exceed 1, got {self.beta}")
        if self.T_bound is not None and self.T_bound < 1:
            raise ParameterError(f"T_bound must be >= 1, got {self.T_bound}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["knobs"] = self.knobs.to_dict()
        return out

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "SchedulerParams":
        doc = dict(doc or {})
        doc["knobs"] = Knobs.from_dict(doc.get("knobs"))
        return cls(**doc)


@dataclass(frozen=True)
class Event:
    t: int
    kind: str
    job: int
    pos: int
    machine: int | None = None
    sub: int | None = None
    size: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class SubRun:
    index: int
    start: int
    steps: int
    L: int
    l: int
    delays: dict[int, int]
    greedy: bool = False
    scale: int | None = None
    rep: int | None = None
    member: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delays"] = {str(k): v for k, v in sorted(self.delays.items())}
        return out


@dataclass
class SimTrace:
    total: int
    events: list[Event] = field(default_factory=list)
    completions: dict[int, int] = field(default_factory=dict)
    total_steps: int = 0
    subruns: list[SubRun] = field(default_factory=list)
    params_used: dict = field(default_factory=dict)
    final_positions: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def completed(self) -> int:
        return len(self.completions)

    @property
    def completion_step(self) -> int | None:
        if self.completed < self.total:
            return None
        return max(self.completions.values(), default=0)

    @property
    def drops(self) -> int:
        return sum(1 for e in self.events if e.kind in ("drop", "eliminate"))

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "total": self.total,
            "completion_step": self.completion_step,
            "total_steps": self.total_steps,
            "drops": self.drops,
            "params_used": self.params_used,
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.events)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kind", "job", "pos", "machine", "sub", "size"])
        for e in self.events:
            w.writerow([e.t, e.kind, e.job, e.pos, e.machine, e.sub, e.size])
        return buf.getvalue()


# -------- weak subroutines (per machine, per step) --------


def _delay(h: HashLike, job: JobSpec) -> int:
    if isinstance(h, HashFamily):
        return hash_job(h, job.seq, job.ind)
    return h[job.ind]


def _pick(Q: Sequence[JobSpec], tie_break: str) -> JobSpec:
    if tie_break == "highest_id":
        return max(Q, key=lambda j: j.ind)
    return min(Q, key=lambda j: j.ind)


def _on_schedule(machine, T, h, queue, greedy):
    Q = []
    for job, st in queue:
        if st.pos >= len(job.seq) or job.seq[st.pos] != machine:
            raise ContractViolation(f"job {job.ind} is not queued at machine {machine}")
        if greedy and st.state:
            continue
        if _delay(h, job) + st.pos == T:
            Q.append(job)
    return Q


def weak_stateless_step(
    machine: int,
    t: int,
    L: int,
    l: int,
    h: HashLike,
    queue: Iterable[tuple[JobSpec, JobState]],
    tie_break: str = "lowest_id",
) -> JobSpec | None:
    """Job the machine works on at step ``t``, or None."""
    if not 0 <= t < 2 * L * l:
        raise ContractViolation(f"t={t} outside [0, 2Ll={2 * L * l})")
    Q = _on_schedule(machine, t // l, h, queue, greedy=False)
    if 0 < len(Q) <= l:
        return _pick(Q, tie_break)
    return None


@dataclass(frozen=True)
class GreedyDecision:
    work: JobSpec | None
    eliminated: tuple[int, ...] = ()
    reset: bool = False


def weak_greedy_step(
    machine: int,
    t: int,
    L: int,
    l: int,
    h: HashLike,
    queue: Iterable[tuple[JobSpec, JobState]],
    tie_break: str = "lowest_id",
) -> GreedyDecision:
    """Greedy-enabled weak step.

    At ``t == 0`` all queued states read as 0.  An over-full on-schedule
    bucket at a large-step boundary is eliminated (state 1 from ``t + 1``).
    """
    if not 0 <= t < 2 * L * l:
        raise ContractViolation(f"t={t} outside [0, 2Ll={2 * L * l})")
    queue = list(queue)
    reset = t == 0
    if reset:
        queue = [(j, JobState(st.pos, 0)) for j, st in queue]
    Q = _on_schedule(machine, t // l, h, queue, greedy=True)
    if t % l == 0 and len(Q) > l:
        return GreedyDecision(None, tuple(sorted(j.ind for j in Q)), reset)
    if 0 < len(Q) <= l:
        return GreedyDecision(_pick(Q, tie_break), (), reset)
    return GreedyDecision(None, (), reset)


# -------- engine --------


class Engine:
    """Holds job positions across consecutive weak sub-runs."""

    def __init__(
        self,
        jobs: Sequence[JobSpec],
        adversary: AdversaryStrategy | None = None,
        tie_break: str = "lowest_id",
        check_invariants: bool = True,
    ):
        self.jobs = {j.ind: j for j in jobs}
        if len(self.jobs) != len(jobs):
            raise ContractViolation("duplicate job identifiers")
        self.order = sorted(self.jobs)
        self.pos = {j.ind: j.start for j in jobs}
        self.state = {j.ind: 0 for j in jobs}
        self.adversary = adversary if adversary is not None and not adversary.idle else None
        self.tie_break = tie_break
        self.check = check_invariants
        self.clock = 0
        self.trace = SimTrace(total=len(jobs))
        self.incomplete = set()
        for j in jobs:
            if not 0 <= j.start <= len(j.seq):
                raise ContractViolation(f"job {j.ind} start {j.start} outside its sequence")
            if j.start == len(j.seq):
                self.trace.completions[j.ind] = 0
            else:
                self.incomplete.add(j.ind)

    @property
    def done(self) -> bool:
        return not self.incomplete

    def _push_phase(self, g: int, sub: int) -> None:
        view = make_view([self.jobs[i] for i in self.order], self.pos, self.state)
        script = apply_pushes(view, self.adversary, g)
        for ind in sorted(script):
            amount = script[ind]
            if amount < 0:
                raise ContractViolation(f"adversary decreased job {ind}")
            if not amount:
                continue
            job = self.jobs[ind]
            old = self.pos[ind]
            if old + amount > len(job.seq):
                raise ContractViolation(f"adversary pushed job {ind} past its sequence")
            self.pos[ind] = old + amount
            self.trace.events.append(Event(g, "push", ind, old, None, sub, amount))
            if self.pos[ind] == len(job.seq):
                self._complete(ind, g, sub)

    def _complete(self, ind: int, when: int, sub: int) -> None:
        self.incomplete.discard(ind)
        self.trace.completions[ind] = when
        self.trace.events.append(Event(when, "complete", ind, len(self.jobs[ind].seq), None, sub))

    def subrun(self, delays: Mapping[int, int], L: int, l: int, greedy: bool = False, **meta) -> SubRun:
        steps = 2 * L * l
        sub = len(self.trace.subruns)
        rec = SubRun(sub, self.clock, steps, L, l, dict(delays), greedy, **meta)
        self.trace.subruns.append(rec)
        if greedy:
            for ind in self.incomplete:
                self.state[ind] = 0
        events = self.trace.events
        pos, jobs, state = self.pos, self.jobs, self.state
        adv = self.adversary
        t = 0
        while t < steps:
            g = self.clock + t
            T = t // l
            if adv is not None and self.incomplete:
                self._push_phase(g, sub)
            if not self.incomplete:
                break
            if greedy and self.check:
                for ind in self.incomplete:
                    if not state[ind] and delays[ind] + pos[ind] < T:
                        self.trace.violations.append(
                            f"live job {ind} behind schedule at step {g} (sub {sub}, T={T})"
                        )
            buckets: dict[int, list[int]] = {}
            ahead = None
            for ind in self.incomplete:
                if greedy and state[ind]:
                    continue
                v = delays[ind] + pos[ind]
                if v == T:
                    buckets.setdefault(jobs[ind].seq[pos[ind]], []).append(ind)
                elif v > T and (ahead is None or v < ahead):
                    ahead = v
            if not buckets:
                if adv is not None:
                    t += 1
                elif ahead is None or ahead >= 2 * L:
                    break
                else:
                    t = ahead * l
                continue
            worked: list[tuple[int, int]] = []
            eliminated: list[tuple[int, int, int]] = []
            for m in sorted(buckets):
                queue = [(jobs[i], JobState(pos[i], state[i])) for i in buckets[m]]
                if greedy:
                    d = weak_greedy_step(m, t, L, l, delays, queue, self.tie_break)
                    if d.work is not None:
                        worked.append((m, d.work.ind))
                    for ind in d.eliminated:
                        eliminated.append((m, ind, len(d.eliminated)))
                else:
                    job = weak_stateless_step(m, t, L, l, delays, queue, self.tie_break)
                    if job is not None:
                        worked.append((m, job.ind))
                    elif t % l == 0 and len(queue) > l:
                        for j, _ in queue:
                            events.append(Event(g, "drop", j.ind, pos[j.ind], m, sub, len(queue)))
            for m, ind, size in eliminated:
                state[ind] = 1
                events.append(Event(g, "eliminate", ind, pos[ind], m, sub, size))
            for m, ind in worked:
                events.append(Event(g, "work", ind, pos[ind], m, sub))
                pos[ind] += 1
                if pos[ind] == len(jobs[ind].seq):
                    self._complete(ind, g + 1, sub)
            if worked or adv is not None:
                t += 1
            else:
                t = (T + 1) * l
        self.clock += steps
        return rec

    def finish(self, total_steps: int | None = None, params_used: dict | None = None) -> SimTrace:
        tr = self.trace
        tr.total_steps = self.clock if total_steps is None else total_steps
        tr.final_positions = {ind: self.pos[ind] for ind in self.order}
        if params_used is not None:
            tr.params_used = params_used
        return tr


# -------- single weak runs (oracle couplings, tests) --------


def run_weak(
    jobs: Sequence[JobSpec],
    h: HashLike,
    L: int,
    l: int,
    greedy: bool = False,
    adversary: AdversaryStrategy | None = None,
    tie_break: str = "lowest_id",
) -> SimTrace:
    """One ``2 L l``-step weak sub-run from the jobs' start positions."""
    eng = Engine(jobs, adversary, tie_break)
    eng.subrun(job_delays(h, jobs), L, l, greedy)
    return eng.finish(params_used={"L": L, "l": l, "greedy": greedy})


def run_weak_sequence(jobs: Sequence[JobSpec], hs: Sequence[HashLike], L: int, l: int) -> SimTrace:
    eng = Engine(jobs)
    for i, h in enumerate(hs):
        if eng.done:
            eng.clock += 2 * L * l
            continue
        eng.subrun(job_delays(h, jobs), L, l, member=i)
    return eng.finish(params_used={"L": L, "l": l, "members": len(hs)})


# -------- full schedulers --------


def scale_ladder(M: int, c: float, knobs: Knobs) -> list[int]:
    top = 2 ** math.ceil(math.log2(2 * M**c))
    if knobs.max_L is not None:
        top = min(top, knobs.max_L)
    out, L = [], 4
    while L <= max(top, 4):
        out.append(L)
        L *= 2
    return out


def repetition_count(M: int, c: float, mode: str, knobs: Knobs) -> int:
    if knobs.reps is not None:
        return int(knobs.reps)
    inner = math.ceil(math.log2(M**c)) if mode == "proof" else math.ceil(math.log2(M))
    return math.ceil(c * inner) + 1


def _validated(instance: Instance, domain: DomainSet | None, params: SchedulerParams) -> DomainSet:
    domain = domain if domain is not None else instance.domain_or_jobs()
    report = validate_instance(instance.jobs, domain, instance.machines, params.c)
    if not report.ok:
        raise InstanceRejected(report)
    return domain


def _multiscale(instance, domain, params, master_seed, greedy, adversary) -> SimTrace:
    params = params or SchedulerParams()
    _validated(instance, domain, params)
    M = instance.machines
    dp = derive_params(M, params.c, params.b, params.knobs)
    l, k = dp.l, dp.k
    ladder = scale_ladder(M, params.c, params.knobs)
    reps = repetition_count(M, params.c, params.repetitions, params.knobs)
    jobs = list(instance.jobs)
    eng = Engine(jobs, adversary, params.tie_break)
    total = 0
    for L in ladder:
        hs = sample_hash_set(master_seed, k, L)
        for rep in range(reps):
            for j, fam in enumerate(hs):
                total += 2 * L * l
                if eng.done:
                    eng.clock += 2 * L * l
                    continue
                eng.subrun(
                    job_delays(fam, jobs), L, l, greedy,
                    scale=hs.scale, rep=rep, member=j, seed=fam.seed,
                )
    used = {
        "algorithm": "greedy" if greedy else "stateless",
        "machines": M,
        "l": l,
        "k": k,
        "reps": reps,
        "scales": ladder,
        "master_seed": master_seed,
        "flags": list(dp.flags),
        **params.to_dict(),
    }
    if adversary is not None:
        used["adversary"] = adversary.to_dict()
    return eng.finish(total, used)


def run_stateless_scheduler(
    instance: Instance,
    domain: DomainSet | None = None,
    params: SchedulerParams | None = None,
    master_seed: int = 0,
) -> SimTrace:
    return _multiscale(instance, domain, params, master_seed, False, None)


def run_greedy_scheduler(
    instance: Instance,
    domain: DomainSet | None = None,
    params: SchedulerParams | None = None,
    master_seed: int = 0,
    adversary: AdversaryStrategy | None = None,
) -> SimTrace:
    return _multiscale(instance, domain, params, master_seed, True, adversary or AdversaryStrategy())


def next_pow2(x: float) -> int:
    L = 1
    while L < x:
        L *= 2
    return L


def noisy_threshold(l: int, beta: float) -> int:
    return math.ceil(4 * beta * l)


def run_noisy_scheduler(
    instance: Instance,
    domain: DomainSet | None = None,
    params: SchedulerParams | None = None,
    master_seed: int = 0,
) -> SimTrace:
    params = params or SchedulerParams()
    if params.beta is None or params.T_bound is None:
        raise ParameterError("noisy scheduling needs beta and T_bound")
    _validated(instance, domain, params)
    M = instance.machines
    dp = derive_params(M, params.c, params.b, params.knobs)
    L = next_pow2(params.T_bound)
    lp = noisy_threshold(dp.l, params.beta)
    hs = sample_hash_set(master_seed, dp.k, L)
    jobs = list(instance.jobs)
    eng = Engine(jobs, None, params.tie_break)
    for j, fam in enumerate(hs):
        if eng.done:
            eng.clock += 2 * L * lp
            continue
        eng.subrun(job_delays(fam, jobs), L, lp, scale=hs.scale, member=j, seed=fam.seed)
    used = {
        "algorithm": "noisy",
        "machines": M,
        "L": L,
        "l": dp.l,
        "l_prime": lp,
        "k": dp.k,
        "master_seed": master_seed,
        "flags": list(dp.flags),
        **params.to_dict(),
    }
    return eng.finish(dp.k * 2 * L * lp, used)


def instance_metrics(jobs: Sequence[JobSpec]) -> dict:
    return {"C": congestion(jobs), "D": dilation(jobs), "jobs": len(jobs)}


__all__ = [
    "Engine",
    "Event",
    "GreedyDecision",
    "INF",
    "InstanceRejected",
    "SchedulerParams",
    "SimTrace",
    "SubRun",
    "instance_metrics",
    "next_pow2",
    "noisy_threshold",
    "repetition_count",
    "run_greedy_scheduler",
    "run_noisy_scheduler",
    "run_stateless_scheduler",
    "run_weak",
    "run_weak_sequence",
    "scale_ladder",
    "weak_greedy_step",
    "weak_stateless_step",
]
