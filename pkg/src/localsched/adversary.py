"""Greedy-push adversaries and adaptive job-set search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

from .hashing import HashSet, SplitMix64, splitmix64_mix
from .model import ContractViolation, DomainSet, JobSpec, JobState, ParameterError, read_json

PushScript = dict  # job ind -> non-negative push amount
View = Mapping[int, tuple[JobSpec, JobState]]

KINDS = ("none", "scripted", "random_push", "rush_to_hotspot")


class AdversaryError(ContractViolation):
    """An adversary produced an illegal push."""


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: str = "none"
    rate: float = 0.0
    seed: int = 0
    machine: int | None = None
    script: Mapping[int, Mapping[int, int]] = field(default_factory=dict)
    # pushes only strictly before this global step; None means unlimited
    until: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown adversary kind {self.kind!r}")
        if self.kind == "rush_to_hotspot" and self.machine is None:
            raise ParameterError("rush_to_hotspot needs a machine")
        if not 0.0 <= self.rate <= 1.0:
            raise ParameterError(f"rate must be in [0, 1], got {self.rate}")

    @property
    def idle(self) -> bool:
        return self.kind == "none" or (self.kind == "random_push" and self.rate == 0)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "random_push":
            out.update(rate=self.rate, seed=self.seed)
        if self.kind == "rush_to_hotspot":
            out["machine"] = self.machine
        if self.kind == "scripted":
            out["steps"] = [
                {"t": t, "pushes": [{"job": j, "amount": a} for j, a in sorted(p.items())]}
                for t, p in sorted(self.script.items())
            ]
        if self.until is not None:
            out["until"] = self.until
        return out

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "AdversaryStrategy":
        if not doc:
            return cls()
        doc = dict(doc)
        kind = doc.get("kind", "scripted" if "steps" in doc else "none")
        script = {}
        for step in doc.get("steps", []):
            script[int(step["t"])] = {int(p["job"]): int(p["amount"]) for p in step["pushes"]}
        return cls(
            kind=kind,
            rate=float(doc.get("rate", 0.0)),
            seed=int(doc.get("seed", 0)),
            machine=doc.get("machine"),
            script=script,
            until=doc.get("until"),
        )


def load_script(path) -> AdversaryStrategy:
    doc = read_json(path, "adversary script")
    doc.setdefault("kind", "scripted")
    return AdversaryStrategy.from_dict(doc)


def make_view(jobs: Sequence[JobSpec], pos: Mapping[int, int], state: Mapping[int, int]) -> View:
    return MappingProxyType({j.ind: (j, JobState(pos[j.ind], state.get(j.ind, 0))) for j in jobs})


def apply_pushes(view: View, strategy: AdversaryStrategy, t: int) -> PushScript:
    """The push script for global step ``t``; illegal scripted entries raise."""
    if strategy.until is not None and t >= strategy.until:
        return {}
    kind = strategy.kind
    if kind == "none":
        return {}
    out: PushScript = {}
    if kind == "scripted":
        for ind, amount in strategy.script.get(t, {}).items():
            if ind not in view:
                raise AdversaryError(f"step {t}: push for unknown job {ind}")
            job, st = view[ind]
            if amount < 0:
                raise AdversaryError(f"step {t}: job {ind} push {amount} is negative")
            if st.pos + amount > len(job.seq):
                raise AdversaryError(
                    f"step {t}: job {ind} push {amount} from pos {st.pos} exceeds len {len(job.seq)}"
                )
            if amount:
                out[ind] = amount
        return out
    if kind == "random_push":
        if strategy.rate == 0:
            return {}
        for ind in sorted(view):
            job, st = view[ind]
            left = len(job.seq) - st.pos
            if left <= 0:
                continue
            rng = SplitMix64(splitmix64_mix(strategy.seed ^ splitmix64_mix(t)) ^ ind)
            if rng.random() < strategy.rate:
                out[ind] = 1 + rng.below(left)
        return out
    # rush_to_hotspot: park each job right before its next visit to the machine
    m = strategy.machine
    for ind in sorted(view):
        job, st = view[ind]
        for i in range(st.pos, len(job.seq)):
            if job.seq[i] == m:
                if i > st.pos:
                    out[ind] = i - st.pos
                break
    return out


def check_script(view: View, script: PushScript) -> None:
    for ind, amount in script.items():
        job, st = view[ind]
        if amount < 0 or st.pos + amount > len(job.seq):
            raise AdversaryError(f"illegal push {amount} for job {ind} at pos {st.pos}")


# -------- adaptive job-set search --------


@dataclass(frozen=True)
class WorstJobSet:
    jobs: tuple[JobSpec, ...]
    metric: float
    exhaustive: bool
    evaluated: int
    search_trace: tuple[tuple[int, float], ...] = ()

    @property
    def heuristic(self) -> bool:
        return not self.exhaustive


def completed_fraction(jobs: Sequence[JobSpec], hash_set: HashSet, l: int) -> float:
    """Fraction finished after one weak stateless pass per member of the set."""
    from .schedulers import run_weak_sequence

    if not jobs:
        return 1.0
    trace = run_weak_sequence(jobs, list(hash_set), hash_set.L, l)
    return len(trace.completions) / len(jobs)


def _jobset(seqs: Sequence[tuple[int, ...]]) -> tuple[JobSpec, ...]:
    return tuple(JobSpec(i + 1, s) for i, s in enumerate(seqs))


def search_worst_jobset(
    domain: DomainSet, hash_set: HashSet, size: int, budget: int, l: int = 1, seed: int = 0
) -> WorstJobSet:
    """Job set of ``size`` jobs (ids 1..size) with the smallest completed fraction."""
    if budget <= 0:
        raise ParameterError("budget must be positive")
    seqs = domain.sorted()
    if not seqs:
        raise ParameterError("empty domain")
    n_candidates = math.comb(len(seqs) + size - 1, size)
    best: tuple[float, tuple] | None = None
    if n_candidates <= budget:
        evaluated = 0
        for combo in itertools.combinations_with_replacement(range(len(seqs)), size):
            jobs = _jobset([seqs[i] for i in combo])
            metric = completed_fraction(jobs, hash_set, l)
            evaluated += 1
            if best is None or metric < best[0]:
                best = (metric, jobs)
        return WorstJobSet(best[1], best[0], True, evaluated)
    rng = SplitMix64(seed)
    current = sorted(rng.below(len(seqs)) for _ in range(size))
    cur_metric = completed_fraction(_jobset([seqs[i] for i in current]), hash_set, l)
    best = (cur_metric, _jobset([seqs[i] for i in current]))
    trace = [(0, cur_metric)]
    for step in range(1, budget):
        cand = list(current)
        cand[rng.below(size)] = rng.below(len(seqs))
        cand.sort()
        jobs = _jobset([seqs[i] for i in cand])
        metric = completed_fraction(jobs, hash_set, l)
        if metric <= cur_metric:
            current, cur_metric = cand, metric
            if metric < best[0]:
                best = (metric, jobs)
                trace.append((step, metric))
    return WorstJobSet(best[1], best[0], False, budget, tuple(trace))
