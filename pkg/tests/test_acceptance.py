"""Acceptance criteria 1-9.  Each test records one pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
an "acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from localsched.adversary import AdversaryStrategy
from localsched.harness import estimate_failure_probability, gen_instance
from localsched.hashing import HashFamily, Knobs, derive_params, member_seeds
from localsched.model import Instance, JobSpec, PacketSpec, ReciprocalGraph, dilation, load_instance
from localsched.routing import RoutingEngine, build_tree_path_set, run_return_noisy_scheduler
from localsched.schedulers import (
    SchedulerParams,
    noisy_threshold,
    next_pow2,
    run_greedy_scheduler,
    run_stateless_scheduler,
    run_weak,
)
from localsched.verification import (
    brute_force_bad_pattern,
    check_drop_invariant,
    check_drop_precondition,
    enumerate_good_subsets,
    is_good_hash,
)

from tree_sweep import SWEEP_SIZES, sweep_point

FIXTURES = Path(__file__).parent / "fixtures"


def random_instance(rng: random.Random, max_jobs: int = 20) -> Instance:
    M = rng.randint(5, 10)  # |J| <= 20 <= M^2
    n = rng.randint(1, max_jobs)
    jobs = []
    for i in range(n):
        length = rng.randint(1, min(4, M))
        jobs.append(JobSpec(i + 1, tuple(rng.choice(range(M)) for _ in range(length))))
    return Instance(M, tuple(jobs))


def random_knobs(rng: random.Random) -> Knobs:
    return Knobs(l=rng.randint(1, 3), k=rng.randint(1, 2), reps=rng.randint(1, 2), max_L=rng.choice([8, 16, 32]))


def recorded_script(inst: Instance, params: SchedulerParams, seed: int) -> AdversaryStrategy:
    """A scripted adversary replaying the pushes of a random rehearsal run."""
    rehearsal = run_greedy_scheduler(inst, None, params, seed, AdversaryStrategy("random_push", 0.2, seed + 1))
    script: dict[int, dict[int, int]] = {}
    for e in rehearsal.events:
        if e.kind == "push":
            script.setdefault(e.t, {})[e.job] = e.size
    return AdversaryStrategy("scripted", script=script)


def test_criterion_1_drop_invariant(criterion):
    rng = random.Random(1)
    t0 = time.perf_counter()
    runs = violations = 0
    kinds = ("none", "scripted", "random_push", "rush_to_hotspot")
    for r in range(1000):
        inst = random_instance(rng)
        params = SchedulerParams(knobs=random_knobs(rng))
        kind = kinds[r % 4]
        if kind == "scripted":
            adv = recorded_script(inst, params, r)
        elif kind == "random_push":
            adv = AdversaryStrategy("random_push", rng.choice([0.05, 0.2, 0.5]), r)
        elif kind == "rush_to_hotspot":
            adv = AdversaryStrategy("rush_to_hotspot", machine=rng.randrange(inst.machines))
        else:
            adv = AdversaryStrategy()
        tr = run_greedy_scheduler(inst, None, params, r, adv)
        found = tr.violations + check_drop_invariant(tr, list(inst.jobs)) + check_drop_precondition(tr)
        runs += 1
        violations += len(found)
    secs = time.perf_counter() - t0
    criterion(1, violations == 0 and secs < 60, f"{runs} greedy runs, {violations} violations, {secs:.1f}s")


def test_criterion_2_equivalence(criterion):
    rng = random.Random(2)
    mismatches = 0
    for r in range(500):
        inst = random_instance(rng)
        params = SchedulerParams(knobs=random_knobs(rng))
        a = run_stateless_scheduler(inst, None, params, r)
        b = run_greedy_scheduler(inst, None, params, r, AdversaryStrategy("random_push", 0.0))
        if a.completions != b.completions:
            mismatches += 1
    criterion(2, mismatches == 0, f"500 instances, {mismatches} completion mismatches")


def test_criterion_3_oracle_coupling(criterion):
    rng = random.Random(3)
    assignments = goods = counterexamples = 0
    for nj in (1, 2, 3, 4):
        for L in (1, 2, 4, 8):
            for l in (1, 2):
                for _ in range(5):
                    jobs = [
                        JobSpec(i + 1, tuple(rng.sample(range(3), rng.randint(1, min(3, L)))))
                        for i in range(nj)
                    ]
                    assert dilation(jobs) <= L
                    for hs in itertools.product(range(L), repeat=nj):
                        d = {j.ind: h for j, h in zip(jobs, hs)}
                        assignments += 1
                        if not is_good_hash(jobs, d, L, l).good:
                            continue
                        goods += 1
                        for greedy in (False, True):
                            tr = run_weak(jobs, d, L, l, greedy=greedy)
                            early = [t for t in tr.completions.values() if t <= 2 * L * l]
                            if len(early) < math.ceil(nj / 2):
                                counterexamples += 1
    criterion(
        3, counterexamples == 0,
        f"{assignments} assignments, {goods} good, {counterexamples} counterexamples",
    )


def test_criterion_4_probability_bound(criterion):
    jobs = [JobSpec(1, (0, 1, 2)), JobSpec(2, (0, 1, 2))]
    L, trials = 8, 10_000
    exact_bad = sum(
        brute_force_bad_pattern(jobs, {1: a, 2: b}, L, 1) for a in range(L) for b in range(L)
    )
    exact = exact_bad / L**2
    est = estimate_failure_probability(None, jobs, L, 1, trials, seed=4)
    lo, hi = est["wilson95"]
    inside = lo <= exact <= hi
    # default-constant parameters for the fixture's machines
    dp = derive_params(32, 2, 1)
    published = estimate_failure_probability(None, jobs, L, dp.l, trials, seed=4)
    bound = math.exp(-len(jobs) * math.log(dp.l) / 8) + 3 * published["sigma"]
    ok = inside and published["rate"] <= bound
    criterion(
        4, ok,
        f"exact {exact:.4f} in Wilson [{lo:.4f}, {hi:.4f}]: {inside}; "
        f"default constants (l={dp.l}, k={dp.k}) rate {published['rate']:.4f} <= bound {bound:.4f}",
    )


def _certified_family(jobs, L, l, master):
    for s in member_seeds(master, L.bit_length() - 1, 256):
        fam = HashFamily(s, L)
        if is_good_hash(jobs, fam, L, l).good:
            return fam
    raise AssertionError("no good hash among 256 candidates")


def test_criterion_5_noisy_quarter(criterion, tmp_path):
    l = 1
    instances = subsets = failures = 0
    for S in (4, 8):
        for beta in (2, 4, 8):
            for seed in range(17):
                length = 2 + seed % 2
                out = tmp_path / f"{S}-{beta}-{seed}"
                m = gen_instance("signal-plus-noise", {"signal": S, "beta": beta, "length": length}, seed, out)
                inst = load_instance(out / "instance.json")
                jobs = list(inst.jobs)
                signal = [j for j in jobs if j.ind in m["signal_ids"]]
                T = m["T"]
                L = next_pow2(T)
                fam = _certified_family(signal, L, l, seed)
                lp = noisy_threshold(l, beta)
                tr = run_weak(jobs, fam, L, lp)
                instances += 1
                for sub in enumerate_good_subsets(jobs, beta, T):
                    subsets += 1
                    done = sum(1 for j in sub if tr.completions.get(j.ind, math.inf) <= 2 * L * lp)
                    if 4 * done < len(sub):
                        failures += 1
    criterion(5, failures == 0 and instances >= 100, f"{instances} instances, {subsets} subsets, {failures} failures")


def _random_tree(n: int, rng: random.Random) -> ReciprocalGraph:
    return ReciprocalGraph.from_undirected(n, [(v, rng.randrange(v)) for v in range(1, n)])


def test_criterion_6_return_semantics(criterion):
    rng = random.Random(6)
    bad_positions = bad_forward = 0
    for r in range(500):
        n = rng.randint(3, 14)
        g = _random_tree(n, rng)
        ps = build_tree_path_set(g)
        pairs = sorted({(rng.randrange(n), rng.randrange(n)) for _ in range(rng.randint(1, 12))})
        packets = [PacketSpec(i + 1, s, t) for i, (s, t) in enumerate(pairs)]
        knobs = Knobs(l=rng.randint(1, 2), k=rng.randint(1, 3))
        beta = rng.choice([2, 3])
        T = rng.randint(1, 8)
        tr = run_return_noisy_scheduler(g, packets, beta, ps, T, master_seed=r, params=SchedulerParams(knobs=knobs))
        lp = noisy_threshold(knobs.l, beta)
        assert tr.total_steps == knobs.k * 4 * next_pow2(T) * lp
        for p in packets:
            want = p.sink if p.ind in tr.completions else p.source
            if tr.final_positions[p.ind] != want:
                bad_positions += 1
        bad_positions += len(tr.violations)
        # forward phase against the weak scheduler on the edge-machine reduction
        L = next_pow2(T)
        delays = {p.ind: rng.randrange(L) for p in packets}
        eng = RoutingEngine(g, packets)
        routed = eng.check_assignment({p.ind: ps.get(p.source, p.sink)[0] for p in packets})
        eng.weak_call(routed, delays, L, knobs.l)
        ref = run_weak([JobSpec(ind, rt.path.edges) for ind, rt in routed.items()], delays, L, knobs.l)
        fwd = {e.job for e in eng.trace.events if e.kind == "deliver" and e.t > 0}
        ref_done = {ind for ind, t in ref.completions.items() if t > 0}
        if fwd != ref_done or {k: v for k, v in eng.trace.completions.items() if v > 0} != {
            k: v for k, v in ref.completions.items() if v > 0
        }:
            bad_forward += 1
    criterion(
        6, bad_positions == 0 and bad_forward == 0,
        f"500 runs, {bad_positions} endpoint violations, {bad_forward} forward-phase mismatches",
    )


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    points = [sweep_point(n, seed) for n in SWEEP_SIZES for seed in range(4)]
    return points, time.perf_counter() - t0


def test_criterion_7_end_to_end_routing(criterion, sweep):
    points, secs = sweep
    a = json.loads((FIXTURES / "budget_curve.json").read_text())["a"]
    undelivered = sum(p.packets - p.delivered for p in points)
    over = [p for p in points if p.delivered == p.packets and p.ratio >= a * p.log3]
    worst = max(p.ratio / p.log3 for p in points if p.completion)
    ok = undelivered == 0 and not over and secs < 300
    criterion(
        7, ok,
        f"{len(points)} trees, {undelivered} undelivered, worst ratio/log2(n)^3 {worst:.4f} vs a={a}, {secs:.1f}s",
    )


def test_criterion_8_baseline_dominance(criterion, sweep):
    points, _ = sweep
    losses = [p for p in points if p.completion is None or p.completion > p.C * p.D]
    rd = [p.random_delay_completion / ((p.C + p.D) * math.log2(p.n)) for p in points]
    criterion(
        8, not losses,
        f"router <= C*D on {len(points) - len(losses)}/{len(points)}; "
        f"random-delay completion / ((C+D) log2 n) max {max(rd):.2f} (reported)",
    )


def _configs(root: Path) -> list[Path]:
    gen_instance("random-paths", {"machines": 8, "jobs": 12}, 1, root / "rp")
    gen_instance("hotspot", {"machines": 8, "jobs": 10}, 2, root / "hs")
    gen_instance("signal-plus-noise", {"signal": 4, "beta": 2}, 3, root / "sn")
    gen_instance("tree-demand", {"nodes": 10, "pairs": 6}, 4, root / "td")
    gen_instance("grid-demand", {"rows": 3, "cols": 3, "pairs": 5}, 5, root / "gd")
    fast = {"l": 2, "k": 2, "reps": 1, "max_L": 16}
    docs = []
    for sub in ("rp", "hs", "sn"):
        inst = str(root / sub / "instance.json")
        docs += [
            {"mode": "schedule", "instance": inst, "knobs": fast, "master_seed": 1},
            {"mode": "schedule-greedy", "instance": inst, "knobs": fast, "reference_regime": False,
             "adversary": {"kind": "random_push", "rate": 0.3, "seed": 5}},
            {"mode": "verify-hash", "instance": inst, "L": 8, "l": 1, "knobs": {"k": 3}, "trials": 200},
            {"mode": "bench", "instance": inst, "knobs": fast, "trials": 4},
        ]
    docs += [
        {"mode": "schedule-noisy", "instance": str(root / "sn" / "instance.json"), "beta": 2, "T": 4,
         "knobs": fast, "reference_regime": False},
        {"mode": "certify-seed", "instance": str(root / "rp" / "instance.json"), "L": 8, "l": 1,
         "knobs": {"k": 4}, "trials": 20, "search_budget": 64},
    ]
    for sub in ("td", "gd"):
        for provider in (("tree", 1),) if sub == "td" else (("ksp", 2),):
            docs.append({
                "mode": "route", "graph": str(root / sub / "graph.json"), "demand": str(root / sub / "demand.json"),
                "provider": provider[0], "alpha": provider[1], "reference_regime": False,
                "knobs": {"l": 1, "k": 2, "reps": 1, "max_L": 64}, "master_seed": 2,
            })
    docs += [
        {"mode": "schedule", "instance": str(root / "rp" / "instance.json"), "knobs": fast,
         "master_seed": 9, "repetitions": "pseudocode", "reference_regime": False},
        {"mode": "schedule-greedy", "instance": str(root / "hs" / "instance.json"), "knobs": fast,
         "reference_regime": False, "adversary": {"kind": "rush_to_hotspot", "machine": 0}},
        {"mode": "verify-hash", "instance": str(root / "sn" / "instance.json"), "L": 4, "l": 2, "trials": 300},
        {"mode": "bench", "instance": str(root / "hs" / "instance.json"), "knobs": fast, "trials": 6},
    ]
    paths = []
    for i, doc in enumerate(docs):
        p = root / f"cfg{i:02d}.json"
        p.write_text(json.dumps(doc))
        paths.append(p)
    return paths


def _run_cli(cfg: Path, threads: int) -> bytes:
    proc = subprocess.run(
        [sys.executable, "-m", "localsched.cli", "run", "--config", str(cfg), "--threads", str(threads)],
        capture_output=True,
        check=False,
    )
    assert proc.returncode in (0, 1), proc.stderr.decode()
    doc = json.loads(proc.stdout)
    doc.pop("timing")
    return json.dumps(doc, sort_keys=True, indent=2).encode()


def test_criterion_9_determinism(criterion, tmp_path):
    configs = _configs(tmp_path)
    assert len(configs) == 20
    differing = [c.name for c in configs if _run_cli(c, 1) != _run_cli(c, 4)]
    criterion(9, not differing, f"{len(configs)} configs, two processes each (threads 1 vs 4), differing: {differing}")
