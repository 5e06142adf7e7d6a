from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath
from typing import Callable, Mapping, Sequence

from .adversary import AdversaryStrategy
from .hashing import (
    HashFamily,
    Knobs,
    SeedCertificate,
    derive_params,
    member_seeds,
    sample_hash_set,
)
from .model import (
    ContractViolation,
    Demand,
    DomainSet,
    Instance,
    JobSpec,
    ParameterError,
    ReciprocalGraph,
    congestion,
    demand_to_dict,
    dilation,
    graph_to_dict,
    instance_to_dict,
    load_demand,
    load_graph,
    load_instance,
    write_json,
)
from .routing import (
    build_ksp_path_set,
    build_tree_path_set,
    ksp_provider,
    load_path_set,
    route,
    semi_obl_router,
    tree_provider,
)
from .schedulers import (
    SchedulerParams,
    SimTrace,
    instance_metrics,
    run_greedy_scheduler,
    run_noisy_scheduler,
    run_stateless_scheduler,
)
from .verification import (
    check_capacity,
    check_drop_invariant,
    check_termination,
    fifo_greedy_baseline,
    is_good_hash,
    opt_bounds,
    random_delay_baseline,
    wilson_interval,
)

MODES = ("schedule", "schedule-greedy", "schedule-noisy", "route", "verify-hash", "certify-seed", "bench")
GEN_KINDS = ("random-paths", "hotspot", "signal-plus-noise", "grid-demand", "tree-demand")
OUT_ENV = "LOCALSCHED_OUT"


class ConfigError(ParameterError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid config: " + "; ".join(self.violations))


class ExperimentError(RuntimeError):
    """An engine contract was violated mid-run; carries the run context."""


class CertificationFailed(RuntimeError):
    def __init__(self, message: str, best: dict):
        self.best = best
        super().__init__(message)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    instance: str | None = None
    graph: str | None = None
    demand: str | None = None
    path_set: str | None = None
    provider: str = "tree"
    alpha: int = 1
    c: float = 2
    b: float = 1
    beta: float | None = None
    T: int | None = None
    knobs: dict = field(default_factory=dict)
    tie_break: str = "lowest_id"
    repetitions: str = "proof"
    adversary: dict | None = None
    master_seed: int = 0
    trials: int = 1
    L: int | None = None
    l: int | None = None
    s_max: int = 2
    search_budget: int = 256
    reference_regime: bool = True
    threads: int = 1
    out: str | None = None
    csv: bool = False
    # verify-hash: None estimates only when trials > 1
    estimate: bool | None = None
    base_dir: str | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: str | None = None) -> "ExperimentConfig":
        """Build a config, collecting every problem before raising."""
        problems: list[str] = []
        if not isinstance(doc, Mapping):
            raise ConfigError(["config must be a mapping"])
        names = {f.name for f in fields(cls)} - {"base_dir"}
        for key in sorted(set(doc) - names):
            problems.append(f"unknown key {key!r}")
        mode = doc.get("mode")
        if mode not in MODES:
            problems.append(f"mode must be one of {', '.join(MODES)}; got {mode!r}")
        need = {
            "schedule": ["instance"],
            "schedule-greedy": ["instance"],
            "schedule-noisy": ["instance", "beta", "T"],
            "route": ["graph", "demand"],
            "verify-hash": ["instance", "L", "l"],
            "certify-seed": ["instance", "L", "l"],
            "bench": ["instance"],
        }.get(mode, [])
        for key in need:
            if doc.get(key) is None:
                problems.append(f"mode {mode} needs {key!r}")
        ints = ("alpha", "master_seed", "trials", "L", "l", "s_max", "search_budget", "threads", "T")
        for key in ints:
            v = doc.get(key)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool)):
                problems.append(f"{key} must be an integer, got {v!r}")
        for key in ("c", "b", "beta"):
            v = doc.get(key)
            if v is not None and not isinstance(v, (int, float)):
                problems.append(f"{key} must be a number, got {v!r}")
        for key in ("reference_regime", "csv", "estimate"):
            v = doc.get(key)
            if v is not None and not isinstance(v, bool):
                problems.append(f"{key} must be true or false, got {v!r}")
        if isinstance(doc.get("trials"), int) and doc["trials"] < 1:
            problems.append("trials must be >= 1")
        if isinstance(doc.get("threads"), int) and doc["threads"] < 1:
            problems.append("threads must be >= 1")
        if isinstance(doc.get("beta"), (int, float)) and doc["beta"] <= 1:
            problems.append("beta must exceed 1")
        if isinstance(doc.get("L"), int) and (doc["L"] < 1 or doc["L"] & (doc["L"] - 1)):
            problems.append("L must be a positive power of two")
        if doc.get("provider", "tree") not in ("tree", "ksp"):
            problems.append(f"provider must be 'tree' or 'ksp', got {doc.get('provider')!r}")
        try:
            Knobs.from_dict(doc.get("knobs"))
        except TypeError as exc:
            problems.append(f"bad knobs: {exc}")
        try:
            AdversaryStrategy.from_dict(doc.get("adversary"))
        except (ParameterError, KeyError, TypeError, ValueError) as exc:
            problems.append(f"bad adversary: {exc}")
        if doc.get("tie_break", "lowest_id") not in ("lowest_id", "highest_id"):
            problems.append(f"unknown tie_break {doc.get('tie_break')!r}")
        if doc.get("repetitions", "proof") not in ("proof", "pseudocode"):
            problems.append(f"unknown repetitions {doc.get('repetitions')!r}")
        if problems:
            raise ConfigError(problems)
        kw = {k: doc[k] for k in names if k in doc}
        kw["knobs"] = dict(kw.get("knobs") or {})
        return cls(base_dir=base_dir, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        return {k: v for k, v in out.items() if v is not None}

    def file(self, name: str) -> FsPath:
        ref = getattr(self, name)
        p = FsPath(ref)
        if not p.is_absolute() and self.base_dir:
            p = FsPath(self.base_dir) / p
        return p

    def scheduler_params(self, knobs: Knobs | None = None) -> SchedulerParams:
        return SchedulerParams(
            c=self.c,
            b=self.b,
            knobs=knobs if knobs is not None else Knobs.from_dict(self.knobs),
            tie_break=self.tie_break,
            beta=self.beta,
            T_bound=self.T,
            repetitions=self.repetitions,
        )


def load_config(path) -> ExperimentConfig:
    p = FsPath(path)
    if not p.exists():
        raise FileNotFoundError(f"config not found: {p}")
    return ExperimentConfig.from_dict(json.loads(p.read_text()), str(p.parent))


def strip_timing(report: Mapping) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}


def report_json(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


# -------- modes --------


def _ratio(num, den):
    if num is None or not den:
        return None
    return num / den


def _schedule_block(inst: Instance, cfg: ExperimentConfig, knobs: Knobs, adversary) -> tuple[dict, dict, SimTrace]:
    params = cfg.scheduler_params(knobs)
    if cfg.mode == "schedule-greedy":
        tr = run_greedy_scheduler(inst, None, params, cfg.master_seed, adversary)
    elif cfg.mode == "schedule-noisy":
        tr = run_noisy_scheduler(inst, None, params, cfg.master_seed)
    else:
        tr = run_stateless_scheduler(inst, None, params, cfg.master_seed)
    jobs = list(inst.jobs)
    ob = opt_bounds(jobs)
    inv = {
        "capacity": not check_capacity(tr, ("work",)),
        "termination": not check_termination(tr, jobs),
    }
    if cfg.mode == "schedule-greedy":
        inv["drop_invariant"] = not tr.violations and not check_drop_invariant(tr, jobs)
    if cfg.mode != "schedule-noisy":
        inv["all_completed"] = tr.completed == tr.total
    block = {
        **tr.summary(),
        "opt_bounds": ob.to_dict(),
        "ratio_to_upper": _ratio(tr.completion_step, ob.upper),
        "ratio_to_lower": _ratio(tr.completion_step, ob.lower),
        "regime": "reference" if knobs.is_default else "knob-reduced",
    }
    return block, inv, tr


def _mode_schedule(cfg: ExperimentConfig) -> tuple[dict, dict, SimTrace | None]:
    inst = load_instance(cfg.file("instance"))
    adversary = AdversaryStrategy.from_dict(cfg.adversary) if cfg.adversary else None
    knobs = Knobs.from_dict(cfg.knobs)
    block, inv, tr = _schedule_block(inst, cfg, knobs, adversary)
    results = {"metrics": instance_metrics(inst.jobs), "runs": {block["regime"]: block}}
    if cfg.reference_regime and not knobs.is_default:
        pblock, pinv, _ = _schedule_block(inst, cfg, Knobs(), adversary)
        results["runs"]["reference"] = pblock
        inv.update({f"reference_{k}": v for k, v in pinv.items()})
    return results, inv, tr


def _route_block(graph, demand, cfg, knobs):
    params = cfg.scheduler_params(knobs)
    packets = demand.packets()
    if cfg.path_set:
        ps = load_path_set(cfg.file("path_set"), graph)
        tr = semi_obl_router(graph, packets, ps, cfg.master_seed, params)
        chosen = [ps.get(p.source, p.sink)[0] for p in packets if ps.get(p.source, p.sink)]
    else:
        provider = tree_provider if cfg.provider == "tree" else ksp_provider(cfg.alpha)
        tr = route(graph, packets, cfg.master_seed, provider, params)
        pairs = sorted(set(demand.pairs))
        ps = build_tree_path_set(graph, pairs) if cfg.provider == "tree" else build_ksp_path_set(graph, cfg.alpha, pairs)
        chosen = [ps.get(s, t)[0] for s, t in demand.pairs]
    ob = opt_bounds(chosen)
    seqs = [JobSpec(i + 1, p.edges) for i, p in enumerate(chosen)]
    fifo = fifo_greedy_baseline(seqs)
    C, D = congestion(seqs), dilation(seqs)
    rnd = random_delay_baseline(seqs, max(C, 1), cfg.master_seed)
    inv = {
        "all_delivered": tr.completed == tr.total,
        "edge_capacity": not check_capacity(tr, ("forward", "return")),
        "endpoints": not tr.violations,
    }
    block = {
        **tr.summary(),
        "opt_bounds": ob.to_dict(),
        "ratio_to_upper": _ratio(tr.completion_step, ob.upper),
        "phases": tr.extra.get("phases", []),
        "delivered_at_L": tr.extra.get("delivered_at_L", {}),
        "projected": tr.extra.get("projected", {}),
        "baselines": {
            "fifo_completion": fifo.completion_step,
            "fifo_CD_bound": C * D,
            "random_delay_completion": rnd.completion_step,
        },
        "regime": "reference" if knobs.is_default else "knob-reduced",
    }
    return block, inv, tr


def _mode_route(cfg: ExperimentConfig):
    graph = load_graph(cfg.file("graph"))
    demand = load_demand(cfg.file("demand"))
    knobs = Knobs.from_dict(cfg.knobs)
    block, inv, tr = _route_block(graph, demand, cfg, knobs)
    results = {"graph": {"n": graph.n, "edges": graph.m}, "packets": len(demand.pairs), "runs": {block["regime"]: block}}
    if cfg.reference_regime and not knobs.is_default:
        pblock, pinv, _ = _route_block(graph, demand, cfg, Knobs())
        results["runs"]["reference"] = pblock
        inv.update({f"reference_{k}": v for k, v in pinv.items()})
    return results, inv, tr


def _mode_verify(cfg: ExperimentConfig):
    inst = load_instance(cfg.file("instance"))
    jobs = list(inst.jobs)
    knobs = Knobs.from_dict(cfg.knobs)
    k = knobs.k if knobs.k is not None else derive_params(max(inst.machines, 2), cfg.c, cfg.b, knobs).k
    hs = sample_hash_set(cfg.master_seed, k, cfg.L)
    verdicts = [is_good_hash(jobs, fam, cfg.L, cfg.l).to_dict() for fam in hs]
    results = {"k": k, "L": cfg.L, "l": cfg.l, "verdicts": verdicts, "set_good": any(v["verdict"] == "good" for v in verdicts)}
    if cfg.estimate or (cfg.estimate is None and cfg.trials > 1):
        est = estimate_failure_probability(
            inst.domain_or_jobs(), jobs, cfg.L, cfg.l, cfg.trials, cfg.master_seed, cfg.threads
        )
        results["estimate"] = est
    inv = {"decided": all(v["verdict"] != "unknown" for v in verdicts)}
    return results, inv, None


def _mode_certify(cfg: ExperimentConfig):
    inst = load_instance(cfg.file("instance"))
    knobs = Knobs.from_dict(cfg.knobs)
    k = knobs.k if knobs.k is not None else derive_params(max(inst.machines, 2), cfg.c, cfg.b, knobs).k
    try:
        cert = certify_seed(
            inst.domain_or_jobs(), cfg.L, cfg.l, k, cfg.trials, cfg.search_budget, cfg.s_max,
            start_seed=cfg.master_seed, c=cfg.c, b=cfg.b, knobs=knobs,
        )
        return {"certificate": cert.to_dict()}, {"certified": True}, None
    except CertificationFailed as exc:
        return {"failure": str(exc), "best": exc.best}, {"certified": False}, None


def _bench_one(inst, cfg, params, seed):
    t0 = time.perf_counter()
    tr = run_stateless_scheduler(inst, None, params, seed)
    return tr.summary(), time.perf_counter() - t0


def _mode_bench(cfg: ExperimentConfig):
    inst = load_instance(cfg.file("instance"))
    params = cfg.scheduler_params()
    seeds = [cfg.master_seed + i for i in range(cfg.trials)]
    out = parallel_map(lambda s: _bench_one(inst, cfg, params, s), seeds, cfg.threads)
    runs = [{"seed": s, **summ} for s, (summ, _) in zip(seeds, out)]
    steps = [r["completion_step"] for r in runs if r["completion_step"] is not None]
    results = {
        "runs": runs,
        "completion_mean": sum(steps) / len(steps) if steps else None,
        "completion_max": max(steps) if steps else None,
    }
    inv = {"all_completed": len(steps) == len(runs)}
    return results, inv, None, {"per_trial_seconds": [w for _, w in out]}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configured experiment and return its report."""
    t0 = time.perf_counter()
    extra_timing: dict = {}
    try:
        if cfg.mode in ("schedule", "schedule-greedy", "schedule-noisy"):
            results, inv, tr = _mode_schedule(cfg)
        elif cfg.mode == "route":
            results, inv, tr = _mode_route(cfg)
        elif cfg.mode == "verify-hash":
            results, inv, tr = _mode_verify(cfg)
        elif cfg.mode == "certify-seed":
            results, inv, tr = _mode_certify(cfg)
        else:
            results, inv, tr, extra_timing = _mode_bench(cfg)
    except ContractViolation as exc:
        raise ExperimentError(f"{cfg.mode} (seed {cfg.master_seed}) aborted: {exc}") from exc
    # thread count is an execution setting: it lives with timing, not the config echo
    echo = cfg.to_dict()
    echo.pop("threads", None)
    report = {
        "config": echo,
        "mode": cfg.mode,
        "results": results,
        "invariants": inv,
        "ok": all(inv.values()),
        "timing": {"wall_seconds": time.perf_counter() - t0, "threads": cfg.threads, **extra_timing},
    }
    out_dir = resolve_out(cfg.out)
    if out_dir is not None:
        write_json(out_dir / "report.json", report)
        if tr is not None:
            (out_dir / "trace.jsonl").write_text(tr.to_jsonl())
            if cfg.csv:
                (out_dir / "trace.csv").write_text(tr.to_csv())
    return report


def resolve_out(out: str | None) -> FsPath | None:
    import os

    env = os.environ.get(OUT_ENV)
    if env:
        return FsPath(env)
    return FsPath(out) if out else None


# -------- Monte Carlo --------


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``fn`` over ``items``; results come back in input order whatever the pool size."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def estimate_failure_probability(
    domain: DomainSet | None,
    jobs: Sequence[JobSpec],
    L: int,
    l: int,
    trials: int,
    seed: int = 0,
    threads: int = 1,
) -> dict:
    """Fraction of sampled hash functions that are not good for ``jobs``."""
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    jobs = list(jobs)
    if domain is not None:
        bad = [j.ind for j in jobs if j.seq not in domain]
        if bad:
            raise ParameterError(f"jobs {bad} not supported by the domain")
    seeds = member_seeds(seed, L.bit_length() - 1, trials)

    def one(s):
        return is_good_hash(jobs, HashFamily(s, L), L, l).verdict

    verdicts = parallel_map(one, seeds, threads)
    not_good = sum(v == "bad" for v in verdicts)
    unknown = sum(v == "unknown" for v in verdicts)
    lo, hi = wilson_interval(not_good, trials)
    rate = not_good / trials
    return {
        "trials": trials,
        "not_good": not_good,
        "unknown": unknown,
        "rate": rate,
        "wilson95": [lo, hi],
        "sigma": math.sqrt(rate * (1 - rate) / trials),
    }


# -------- seed certification --------


def _jobsets(domain: DomainSet, s_max: int, budget: int, L: int, rng_seed: int):
    seqs = domain.sorted()
    total = sum(math.comb(len(seqs) + s - 1, s) for s in range(1, s_max + 1))
    if total <= budget:
        sets = []
        for s in range(1, s_max + 1):
            for combo in itertools.combinations_with_replacement(range(len(seqs)), s):
                sets.append(tuple(JobSpec(i + 1, seqs[x]) for i, x in enumerate(combo)))
        exhaustive = True
    else:
        rng = random.Random(rng_seed)
        sets = []
        for _ in range(budget):
            s = rng.randint(1, s_max)
            sets.append(tuple(JobSpec(i + 1, seqs[rng.randrange(len(seqs))]) for i in range(s)))
        exhaustive = False
    # a hash set only has to serve job sets that fit the scale
    sets = [js for js in sets if congestion(js) + dilation(js) <= L]
    return sets, exhaustive, total


def _verdict_digest(verdicts: Sequence[str]) -> str:
    return hashlib.sha256(",".join(verdicts).encode()).hexdigest()


def seed_verdicts(master_seed: int, jobsets, k: int, L: int, l: int) -> list[str]:
    hs = sample_hash_set(master_seed, k, L)
    out = []
    for js in jobsets:
        vs = [is_good_hash(js, fam, L, l).verdict for fam in hs]
        out.append("good" if "good" in vs else ("unknown" if "unknown" in vs else "bad"))
    return out


def certify_seed(
    domain: DomainSet,
    L: int,
    l: int,
    k: int,
    trials: int,
    search_budget: int,
    s_max: int = 2,
    start_seed: int = 0,
    c: float = 2,
    b: float = 1,
    knobs: Knobs | None = None,
) -> SeedCertificate:
    """Smallest seed in ``start_seed .. start_seed + trials - 1`` whose hash set serves every job set."""
    if search_budget < 1:
        raise ParameterError(f"search_budget must be >= 1, got {search_budget}")
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if len(domain) == 0:
        raise ParameterError("empty domain")
    jobsets, exhaustive, total = _jobsets(domain, s_max, search_budget, L, start_seed)
    best = {"seed": None, "coverage": -1.0}
    for seed in range(start_seed, start_seed + trials):
        verdicts = seed_verdicts(seed, jobsets, k, L, l)
        good = sum(v == "good" for v in verdicts)
        coverage = good / len(jobsets) if jobsets else 1.0
        if coverage > best["coverage"]:
            best = {"seed": seed, "coverage": coverage}
        if good == len(jobsets):
            return SeedCertificate(
                seed, c, b, knobs or Knobs(),
                {
                    "L": L,
                    "l": l,
                    "k": k,
                    "s_max": s_max,
                    "coverage": "exhaustive" if exhaustive else "sampled",
                    "job_sets_checked": len(jobsets),
                    "job_sets_total": total,
                    "seeds_tried": seed - start_seed + 1,
                    "verdict_digest": _verdict_digest(verdicts),
                    "domain": [list(s) for s in domain.sorted()],
                },
            )
    raise CertificationFailed(f"no seed among {trials} candidates serves every job set", best)


def reverify_certificate(cert: SeedCertificate) -> bool:
    p = cert.provenance
    domain = DomainSet.of(p["domain"])
    budget = p["job_sets_checked"] if p["coverage"] == "exhaustive" else None
    if budget is None:
        raise ParameterError("only exhaustive certificates can be re-verified from the certificate alone")
    jobsets, _, _ = _jobsets(domain, p["s_max"], p["job_sets_total"], p["L"], 0)
    verdicts = seed_verdicts(cert.master_seed, jobsets, p["k"], p["L"], p["l"])
    return _verdict_digest(verdicts) == p["verdict_digest"]


# -------- generators --------


def _guard(ok: bool, msg: str) -> None:
    if not ok:
        raise ParameterError(msg)


def _random_tree(n: int, rng: random.Random) -> ReciprocalGraph:
    return ReciprocalGraph.from_undirected(n, [(v, rng.randrange(v)) for v in range(1, n)])


def _grid(rows: int, cols: int) -> ReciprocalGraph:
    pairs = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                pairs.append((v, v + 1))
            if r + 1 < rows:
                pairs.append((v, v + cols))
    return ReciprocalGraph.from_undirected(rows * cols, pairs)


def gen_instance(kind: str, size: Mapping | None = None, seed: int = 0, out_dir=None) -> dict:
    """Generate files for ``kind``; returns the manifest (also written when ``out_dir`` is given)."""
    size = dict(size or {})
    rng = random.Random(seed)
    files: dict[str, dict] = {}
    manifest: dict = {"kind": kind, "seed": seed, "size": size}
    if kind in ("random-paths", "hotspot"):
        M = int(size.get("machines", 8))
        n = int(size.get("jobs", 8))
        D = int(size.get("max_len", 3))
        _guard(2 <= M <= 10_000, "machines must be in [2, 10000]")
        _guard(1 <= D <= M, "max_len must be in [1, machines]")
        _guard(1 <= n <= M * M, "jobs must be in [1, machines^2]")
        jobs = []
        for i in range(n):
            length = rng.randint(1, D)
            if kind == "hotspot":
                rest = rng.sample(range(1, M), length - 1)
                cut = rng.randint(0, length - 1)
                seq = tuple(rest[:cut]) + (0,) + tuple(rest[cut:])
            else:
                seq = tuple(rng.sample(range(M), length))
            jobs.append(JobSpec(i + 1, seq))
        inst = Instance(M, tuple(jobs))
        files["instance.json"] = instance_to_dict(inst)
        manifest.update(C=congestion(jobs), D=dilation(jobs), jobs=len(jobs), beta=1)
    elif kind == "signal-plus-noise":
        S = int(size.get("signal", 4))
        beta = int(size.get("beta", 4))
        D = int(size.get("length", 2))
        _guard(1 <= S <= 1000, "signal must be in [1, 1000]")
        _guard(2 <= beta <= 64, "beta must be in [2, 64]")
        _guard(1 <= D <= 64, "length must be in [1, 64]")
        M = S * D
        # disjoint machine blocks, shuffled so signal jobs look unrelated
        perm = list(range(M))
        rng.shuffle(perm)
        signal = [JobSpec(i + 1, tuple(perm[i * D:(i + 1) * D])) for i in range(S)]
        noise = [JobSpec(S + 1 + i, signal[0].seq) for i in range((beta - 1) * S)]
        jobs = signal + noise
        inst = Instance(max(M, 2), tuple(jobs))
        files["instance.json"] = instance_to_dict(inst)
        manifest.update(
            C=congestion(jobs), D=dilation(jobs), jobs=len(jobs), beta=len(jobs) / S,
            signal_ids=[j.ind for j in signal], T=congestion(signal) + dilation(signal),
        )
    elif kind in ("grid-demand", "tree-demand"):
        if kind == "grid-demand":
            rows = int(size.get("rows", 4))
            cols = int(size.get("cols", 4))
            _guard(1 <= rows <= 200 and 1 <= cols <= 200 and rows * cols >= 2, "grid must be within 200x200")
            graph = _grid(rows, cols)
        else:
            n = int(size.get("nodes", 16))
            _guard(2 <= n <= 4096, "nodes must be in [2, 4096]")
            graph = _random_tree(n, rng)
        n = graph.n
        k = int(size.get("pairs", n // 2))
        permutation = bool(size.get("permutation", kind == "grid-demand"))
        if permutation:
            _guard(0 <= k <= n, "a permutation demand has at most n pairs")
            srcs = rng.sample(range(n), k)
            snks = rng.sample(range(n), k)
            pairs = list(zip(srcs, snks))
        else:
            _guard(0 <= k <= n * n, "a {0,1}-demand has at most n^2 pairs")
            pairs = rng.sample([(s, t) for s in range(n) for t in range(n)], k)
        demand = Demand(tuple(pairs))
        files["graph.json"] = graph_to_dict(graph)
        files["demand.json"] = demand_to_dict(demand)
        if graph.is_tree():
            ps = build_tree_path_set(graph, set(pairs))
            seqs = [ps.get(s, t)[0].edges for s, t in pairs]
            manifest.update(C=congestion(seqs), D=dilation(seqs))
        manifest.update(n=n, packets=len(pairs), beta=1, permutation=demand.is_permutation())
    else:
        raise ParameterError(f"unknown generator kind {kind!r}; expected one of {', '.join(GEN_KINDS)}")
    manifest["files"] = sorted(files)
    if out_dir is not None:
        out = FsPath(out_dir)
        for name, doc in files.items():
            write_json(out / name, doc)
        write_json(out / "manifest.json", manifest)
    manifest["documents"] = files
    return manifest


__all__ = [
    "CertificationFailed",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "GEN_KINDS",
    "MODES",
    "certify_seed",
    "estimate_failure_probability",
    "gen_instance",
    "load_config",
    "parallel_map",
    "report_json",
    "resolve_out",
    "reverify_certificate",
    "run_experiment",
    "seed_verdicts",
    "strip_timing",
]
