"""Reference implementations written independently of the package code.

They favour obviousness over speed and are only used to cross-check the
engine and to produce the frozen regression values under ``fixtures/``.
"""

from __future__ import annotations

M64 = 2**64


def ref_fnv1a(words, seed):
    h = 14695981039346656037 ^ seed
    for w in words:
        for byte in (w % M64).to_bytes(8, "little"):
            h = ((h ^ byte) * 1099511628211) % M64
    return h


def ref_mix(z):
    z = (z ^ (z >> 30)) * 13787848793156543929 % M64
    z = (z ^ (z >> 27)) * 10723151780598845931 % M64
    return z ^ (z >> 31)


def ref_delay(seed, L, words):
    bits = L.bit_length() - 1
    if bits == 0:
        return 0
    return ref_mix(ref_fnv1a(words, seed)) >> (64 - bits)


def ref_job(seed, L, seq, ind):
    return ref_delay(seed, L, [len(seq), *seq, ind])


def ref_path(seed, L, edges):
    return ref_delay(seed, L, [len(edges), *edges])


def ref_member_seeds(master, scale, k):
    state = (master ^ ref_mix((scale + 1) * 0x9E3779B97F4A7C15 % M64)) % M64
    out = []
    for _ in range(k):
        state = (state + 0x9E3779B97F4A7C15) % M64
        out.append(ref_mix(state))
    return out


def ref_weak_run(jobs, delays, L, l, greedy=False):
    """Literal step-by-step weak run: every machine, every step, no skipping.

    ``jobs`` is a list of (ind, seq, start).  Returns {ind: completion step}.
    """
    pos = {ind: start for ind, _, start in jobs}
    seqs = {ind: seq for ind, seq, _ in jobs}
    state = {ind: 0 for ind, _, _ in jobs}
    done = {ind: 0 for ind, seq, start in jobs if start == len(seq)}
    machines = sorted({m for _, seq, _ in jobs for m in seq})
    for t in range(2 * L * l):
        T = t // l
        work = []
        elim = []
        for m in machines:
            Q = [
                ind
                for ind in pos
                if pos[ind] < len(seqs[ind])
                and seqs[ind][pos[ind]] == m
                and delays[ind] + pos[ind] == T
                and not (greedy and state[ind])
            ]
            if greedy and t % l == 0 and len(Q) > l:
                elim.extend(Q)
            elif 0 < len(Q) <= l:
                work.append(min(Q))
        for ind in elim:
            state[ind] = 1
        for ind in work:
            pos[ind] += 1
            if pos[ind] == len(seqs[ind]):
                done[ind] = t + 1
    return done


def ref_bad_pattern_exists(jobs, delays, L, l):
    """Enumerate every job -> bucket-or-none map; ``jobs`` is [(ind, seq)]."""
    import itertools

    opts = []
    for ind, seq in jobs:
        o = [None] + [(delays[ind] + i, m) for i, m in enumerate(seq) if delays[ind] + i < 2 * L]
        opts.append(o)
    for combo in itertools.product(*opts):
        sizes = {}
        for c in combo:
            if c is not None:
                sizes[c] = sizes.get(c, 0) + 1
        if sum(sizes.values()) * 2 > len(jobs) and all(v > l for v in sizes.values()):
            return True
    return False
