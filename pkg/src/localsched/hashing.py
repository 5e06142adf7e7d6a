"""Seeded hash families that assign delays in ``[0, L)`` to jobs and paths.

A family is keyed by a 64-bit seed.  Inputs are encoded as little-endian
unsigned 64-bit words, folded through FNV-1a whose offset basis is xored
with the seed, then pushed through the SplitMix64 finalizer; the delay is
the top ``log2(L)`` bits of the result.  Everything here is bit-exact and
platform independent.
"""

from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence, Union

from .model import ContractViolation, JobSpec, ParameterError, Path

MASK64 = (1 << 64) - 1
FNV_OFFSET64 = 0xCBF29CE484222325
FNV_PRIME64 = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
INF = math.inf


def splitmix64_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """The SplitMix64 generator; ``next()`` yields 64-bit words."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return splitmix64_mix(self.state)

    def below(self, n: int) -> int:
        # multiply-shift reduction; bias is < n / 2^64
        return (self.next() * n) >> 64

    def random(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))


def fnv1a64(data: bytes, seed: int = 0) -> int:
    h = FNV_OFFSET64 ^ (seed & MASK64)
    for b in data:
        h ^= b
        h = (h * FNV_PRIME64) & MASK64
    return h


def encode_words(words: Sequence[int]) -> bytes:
    return struct.pack(f"<{len(words)}Q", *(w & MASK64 for w in words))


def _is_pow2(x: int) -> bool:
    return isinstance(x, int) and x >= 1 and x & (x - 1) == 0


@dataclass(frozen=True)
class HashFamily:
    seed: int
    L: int

    def __post_init__(self):
        if not _is_pow2(self.L):
            raise ParameterError(f"L must be a positive power of two, got {self.L!r}")
        object.__setattr__(self, "seed", self.seed & MASK64)

    @property
    def bits(self) -> int:
        return self.L.bit_length() - 1

    def _finish(self, data: bytes) -> int:
        z = splitmix64_mix(fnv1a64(data, self.seed))
        return z >> (64 - self.bits) if self.bits else 0

    def job(self, job: JobSpec) -> int:
        return hash_job(self, job.seq, job.ind)


@lru_cache(maxsize=1 << 18)
def _hash_job_cached(family: HashFamily, seq: tuple[int, ...], ind: int) -> int:
    return family._finish(encode_words((len(seq), *seq, ind)))


def hash_job(family: HashFamily, seq: Sequence[int], ind: int) -> int:
    return _hash_job_cached(family, tuple(seq), int(ind))


@lru_cache(maxsize=1 << 16)
def _hash_path_cached(family: HashFamily, edges: tuple[int, ...]) -> int:
    return family._finish(encode_words((len(edges), *edges)))


def hash_path(family: HashFamily, path: Path | Sequence[int]) -> int:
    edges = path.edges if isinstance(path, Path) else tuple(path)
    return _hash_path_cached(family, tuple(edges))


# Schedulers accept either a family or an explicit ind -> delay table.
HashLike = Union[HashFamily, Mapping[int, int]]


def job_delays(h: HashLike, jobs: Sequence[JobSpec]) -> dict[int, int]:
    if isinstance(h, HashFamily):
        return {j.ind: hash_job(h, j.seq, j.ind) for j in jobs}
    return {j.ind: int(h[j.ind]) for j in jobs}


def virt(h_value: int, i: int, seq_len: int):
    """Virtual time of position ``i``; ``inf`` once the sequence is finished."""
    if not 0 <= i <= seq_len:
        raise ContractViolation(f"position {i} outside [0, {seq_len}]")
    return INF if i == seq_len else h_value + i


@dataclass(frozen=True)
class HashSet:
    members: tuple[HashFamily, ...]
    master_seed: int = 0
    scale: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i: int) -> HashFamily:
        return self.members[i]

    @property
    def L(self) -> int:
        return self.members[0].L


def member_seeds(master_seed: int, scale: int, k: int) -> list[int]:
    gen = SplitMix64(master_seed ^ splitmix64_mix((scale + 1) * GOLDEN_GAMMA))
    return [gen.next() for _ in range(k)]


def sample_hash_set(master_seed: int, k: int, L: int, scale: int | None = None) -> HashSet:
    """``k`` families for one scale; sub-seeds come from one SplitMix64 stream."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not _is_pow2(L):
        raise ParameterError(f"L must be a positive power of two, got {L!r}")
    if scale is None:
        scale = L.bit_length() - 1
    seeds = member_seeds(master_seed, scale, k)
    return HashSet(tuple(HashFamily(s, L) for s in seeds), master_seed & MASK64, scale)


# -------- parameter formulas --------


@dataclass(frozen=True)
class Knobs:
    """Scale overrides; defaults reproduce the published constants.

    ``l_const``/``k_const`` replace the multipliers 150 and 8.  ``l``, ``k``,
    ``reps`` and ``max_L`` pin the derived values directly.
    """

    l_const: float = 150.0
    k_const: float = 8.0
    l: int | None = None
    k: int | None = None
    reps: int | None = None
    max_L: int | None = None

    @property
    def is_default(self) -> bool:
        return self == Knobs()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "Knobs":
        return cls(**(doc or {}))


@dataclass(frozen=True)
class DerivedParams:
    l: int
    k: int
    flags: tuple[str, ...] = field(default=())


def derive_params(
    M_size: int, c: float = 2, b: float = 1, knobs: Knobs | None = None, l_size: int | None = None
) -> DerivedParams:
    """Small-step count ``l`` and hash-set size ``k`` for ``|M|`` machines.

    ``l_size`` lets the routing variant size ``l`` by the node count while
    ``k`` still uses ``|M|``.
    """
    knobs = knobs or Knobs()
    if M_size < 2 or (l_size is not None and l_size < 2):
        raise ParameterError(f"need at least 2 machines, got {M_size}")
    flags: list[str] = []
    lnM = math.log(M_size)
    ln_lsize = math.log(l_size) if l_size is not None else lnM
    lnln = math.log(ln_lsize)
    if lnln < 1:
        lnln = 1.0
        flags.append("theory preconditions violated: ln ln |M| < 1, denominator clamped to 1")
    if min(M_size, l_size or M_size) < 32:
        flags.append("theory preconditions violated: |M| < 32")
    if knobs.l is not None:
        l = int(knobs.l)
    else:
        l = math.ceil(knobs.l_const * c * ln_lsize / lnln)
    l = max(l, 1)
    if knobs.k is not None:
        k = int(knobs.k)
    else:
        lnl = math.log(l)
        if lnl < math.log(2):
            lnl = math.log(2)
            flags.append("theory preconditions violated: l < 2, ln l clamped to ln 2")
        k = math.ceil(knobs.k_const * (b + 1) * (2 * c + 1) * lnM / lnl)
    k = max(k, 1)
    if not knobs.is_default:
        flags.append("knob-reduced constants")
    return DerivedParams(l, k, tuple(flags))


# -------- certified seeds --------


@dataclass(frozen=True)
class SeedCertificate:
    master_seed: int
    c: float
    b: float
    knobs: Knobs
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "c": self.c,
            "b": self.b,
            "knobs": self.knobs.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SeedCertificate":
        try:
            return cls(
                int(doc["master_seed"]),
                doc["c"],
                doc["b"],
                Knobs.from_dict(doc.get("knobs")),
                dict(doc.get("provenance", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"malformed certificate: {exc!r}") from exc
