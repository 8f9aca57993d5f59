"""Fake-user report crafting: random perturbed value (RPA), random item (RIA)
and maximal gain (MGA) attacks."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError
from .hashing import hash_keyed, seed_keys
from .protocols import Protocol, ProtocolSpec, ReportBatch, perturb_many

log = logging.getLogger(__name__)

DEFAULT_HASH_CANDIDATES = 1000


class Attack(str, enum.Enum):
    RPA = "rpa"
    RIA = "ria"
    MGA = "mga"


def fake_count(beta: float, n: int) -> int:
    """Number of fake users so that m / (n + m) is as close to ``beta`` as possible."""
    if not 0 <= beta < 1:
        raise ParameterError(f"beta must lie in [0, 1), got {beta}")
    return int(round(beta * n / (1 - beta)))


@dataclass(frozen=True)
class AttackConfig:
    kind: Attack
    targets: tuple[int, ...]
    m: int
    hash_candidates: int = DEFAULT_HASH_CANDIDATES

    def __post_init__(self):
        object.__setattr__(self, "kind", Attack(self.kind))
        object.__setattr__(self, "targets", tuple(sorted({int(t) for t in self.targets})))
        if not self.targets:
            raise ParameterError("target set must be nonempty")
        if self.m < 0:
            raise ParameterError("fake user count must be non-negative")
        if self.hash_candidates < 1:
            raise ParameterError("hash_candidates must be positive")

    @classmethod
    def from_beta(cls, kind, targets, beta: float, n: int, **kw) -> AttackConfig:
        return cls(kind, tuple(targets), fake_count(beta, n), **kw)

    @property
    def r(self) -> int:
        return len(self.targets)


def _targets_array(spec: ProtocolSpec, targets) -> np.ndarray:
    t = np.unique(np.asarray(list(targets), dtype=np.int64))
    if t.size == 0:
        raise ParameterError("target set must be nonempty")
    if t.min() < 1 or t.max() > spec.d:
        raise DomainError(f"targets must lie in 1..{spec.d}")
    return t


def rpa(spec: ProtocolSpec, m: int, rng: np.random.Generator) -> ReportBatch:
    """Each fake user sends a uniformly random value of the encoded space."""
    if spec.kind is Protocol.KRR:
        return ReportBatch(spec.kind, spec.d, items=rng.integers(1, spec.d + 1, size=m))
    if spec.kind is Protocol.OUE:
        bits = rng.integers(0, 2, size=(m, spec.d), dtype=np.uint8)
        return ReportBatch(spec.kind, spec.d, bits=np.packbits(bits, axis=1))
    seeds = rng.integers(0, spec.seed_space, size=m, dtype=np.uint64)
    values = rng.integers(1, spec.d_prime + 1, size=m)
    return ReportBatch(spec.kind, spec.d, seeds=seeds, values=values)


def ria(spec: ProtocolSpec, targets, m: int, rng: np.random.Generator) -> ReportBatch:
    """Each fake user picks a random target and runs the honest encode/perturb on it."""
    t = _targets_array(spec, targets)
    return perturb_many(spec, rng.choice(t, size=m), rng)


def oue_padding(spec: ProtocolSpec, r: int) -> int:
    """Non-target bits MGA sets so a fake vector carries as many 1s as an honest one."""
    raw = math.floor(spec.p + (spec.d - 1) * spec.q - r)
    if raw < 0:
        log.warning("MGA-OUE padding %d is negative for r=%d; clamping to 0", raw, r)
        return 0
    return min(raw, spec.d - r)


def mga(spec: ProtocolSpec, targets, m: int, rng: np.random.Generator,
        hash_candidates: int = DEFAULT_HASH_CANDIDATES) -> ReportBatch:
    """Each fake user sends a value maximizing the number of supported targets."""
    t = _targets_array(spec, targets)
    if spec.kind is Protocol.KRR:
        return ReportBatch(spec.kind, spec.d, items=rng.choice(t, size=m))
    if spec.kind is Protocol.OUE:
        return _mga_oue(spec, t, m, rng)
    return _mga_olh(spec, t, m, rng, hash_candidates)


def _mga_oue(spec, t, m, rng):
    r = len(t)
    pad = oue_padding(spec, r)
    non_target = np.setdiff1d(np.arange(1, spec.d + 1), t)
    rows = np.zeros((m, spec.d), dtype=np.uint8)
    rows[:, t - 1] = 1
    if pad > 0:
        for start in range(0, m, 4096):
            stop = min(m, start + 4096)
            keys = rng.random((stop - start, len(non_target)))
            picks = np.argpartition(keys, pad - 1, axis=1)[:, :pad]
            np.put_along_axis(rows[start:stop], non_target[picks] - 1, 1, axis=1)
    return ReportBatch(spec.kind, spec.d, bits=np.packbits(rows, axis=1))


def _mga_olh(spec, t, m, rng, hash_candidates):
    d_prime = spec.d_prime
    exhaustive = hash_candidates >= spec.seed_space
    k = spec.seed_space if exhaustive else hash_candidates
    all_seeds = np.arange(spec.seed_space, dtype=np.uint64) if exhaustive else None
    all_counts = None
    if exhaustive:
        all_counts = _bucket_counts(seed_keys(all_seeds)[None, :], t, d_prime)[0]
    chunk = max(1, (1 << 21) // (k * max(len(t), d_prime)))
    seeds_out = np.empty(m, dtype=np.uint64)
    values_out = np.empty(m, dtype=np.int64)
    for start in range(0, m, chunk):
        size = min(m, start + chunk) - start
        if exhaustive:
            cand = np.broadcast_to(all_seeds, (size, k))
            counts = np.broadcast_to(all_counts, (size, k, d_prime))
        else:
            cand = rng.integers(0, spec.seed_space, size=(size, k), dtype=np.uint64)
            counts = _bucket_counts(seed_keys(cand), t, d_prime)
        best_value = counts.argmax(axis=2)  # first max -> smallest hash value
        score = counts.max(axis=2)
        # uniform choice among the best-scoring seeds
        jitter = rng.random((size, k))
        pick = np.argmax(np.where(score == score.max(axis=1, keepdims=True), jitter, -1.0), axis=1)
        rows = np.arange(size)
        seeds_out[start:start + size] = cand[rows, pick]
        values_out[start:start + size] = best_value[rows, pick] + 1
    return ReportBatch(spec.kind, spec.d, seeds=seeds_out, values=values_out)


def _bucket_counts(keys: np.ndarray, t: np.ndarray, d_prime: int) -> np.ndarray:
    """``counts[..., a-1]`` = number of targets hashed to ``a`` under each seed key."""
    h = hash_keyed(keys[..., None], t, d_prime)  # (..., r)
    out = np.zeros(keys.shape + (d_prime,), dtype=np.int32)
    for a in range(d_prime):
        out[..., a] = (h == a + 1).sum(axis=-1)
    return out


def craft(spec: ProtocolSpec, kind, targets, m: int, rng: np.random.Generator,
          hash_candidates: int = DEFAULT_HASH_CANDIDATES) -> ReportBatch:
    kind = Attack(kind)
    if m == 0:
        return ReportBatch.empty(spec)
    if kind is Attack.RPA:
        return rpa(spec, m, rng)
    if kind is Attack.RIA:
        return ria(spec, targets, m, rng)
    return mga(spec, targets, m, rng, hash_candidates)


def target_hits(spec: ProtocolSpec, batch: ReportBatch, targets) -> np.ndarray:
    """Per report, how many targets it supports."""
    t = _targets_array(spec, targets)
    if spec.kind is Protocol.KRR:
        return np.isin(batch.items, t).astype(np.int64)
    if spec.kind is Protocol.OUE:
        return batch.unpacked_bits()[:, t - 1].sum(axis=1)
    h = hash_keyed(batch.keys[:, None], t[None, :], spec.d_prime)
    return (h == batch.values[:, None]).sum(axis=1)


def attack_pem(config, attack: AttackConfig, fake_group_sizes, rng: np.random.Generator) -> list[ReportBatch]:
    """Fake reports for every PEM iteration.

    Iteration ``j`` attacks the OLH instance over ``lambda_j``-bit prefixes,
    with the targets' ``lambda_j``-bit prefixes standing in for the targets.
    """
    from .heavy_hitter import iteration_spec, lambda_schedule, prefix_items

    batches = []
    for j, size in enumerate(fake_group_sizes, start=1):
        lam = lambda_schedule(config, j)
        spec = iteration_spec(config, lam)
        prefixes = np.unique(prefix_items(np.asarray(attack.targets), config.gamma, lam))
        batches.append(craft(spec, attack.kind, prefixes, int(size), rng, attack.hash_candidates))
    return batches
