"""Pure-LDP frequency oracles: kRR, OUE and OLH.

Items are 1-indexed integers in ``1..d``.  Single reports are :class:`Report`
values; bulk simulation works on :class:`ReportBatch`, which stores one numpy
array per report field (OUE bit vectors are packed 8 per byte).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyInputError, ParameterError, ProtocolError
from .hashing import DEFAULT_SEED_SPACE, hash_keyed, seed_keys

_CHUNK = 8192


class Protocol(str, enum.Enum):
    KRR = "krr"
    OUE = "oue"
    OLH = "olh"


@dataclass(frozen=True)
class ProtocolSpec:
    kind: Protocol
    epsilon: float
    d: int
    p: float
    q: float
    d_prime: int | None = None
    p_prime: float | None = None
    q_prime: float | None = None
    seed_space: int = DEFAULT_SEED_SPACE


def derive_params(kind, epsilon: float, d: int, seed_space: int = DEFAULT_SEED_SPACE) -> ProtocolSpec:
    """Build the protocol parameters for privacy budget ``epsilon`` over ``d`` items."""
    kind = Protocol(kind)
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ParameterError(f"epsilon must be positive and finite, got {epsilon}")
    if d < 2:
        raise ParameterError(f"domain size must be >= 2, got {d}")
    e = math.exp(epsilon)
    if kind is Protocol.KRR:
        return ProtocolSpec(kind, epsilon, d, p=e / (d - 1 + e), q=1 / (d - 1 + e))
    if kind is Protocol.OUE:
        return ProtocolSpec(kind, epsilon, d, p=0.5, q=1 / (e + 1))
    if seed_space < 1:
        raise ParameterError("seed_space must be positive")
    d_prime = math.ceil(e + 1)
    p_prime = e / (e + d_prime - 1)
    q_prime = 1 / (e + d_prime - 1)
    return ProtocolSpec(
        kind, epsilon, d, p=p_prime, q=1 / d_prime,
        d_prime=d_prime, p_prime=p_prime, q_prime=q_prime, seed_space=seed_space,
    )


@dataclass(frozen=True)
class Report:
    """One user's perturbed message.

    kRR sets ``item``; OUE sets ``bits`` (tuple of 0/1, bit ``v`` at index
    ``v - 1``); OLH sets ``seed`` and ``value``.
    """

    kind: Protocol
    item: int | None = None
    bits: tuple[int, ...] | None = None
    seed: int | None = None
    value: int | None = None


@dataclass
class ReportBatch:
    kind: Protocol
    d: int
    items: np.ndarray | None = None
    bits: np.ndarray | None = None  # (n, ceil(d / 8)) uint8, packed big-endian per row
    seeds: np.ndarray | None = None
    values: np.ndarray | None = None
    _keys: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        arr = {Protocol.KRR: self.items, Protocol.OUE: self.bits, Protocol.OLH: self.seeds}[self.kind]
        return 0 if arr is None else len(arr)

    @property
    def keys(self) -> np.ndarray:
        if self._keys is None:
            self._keys = seed_keys(self.seeds)
        return self._keys

    @classmethod
    def empty(cls, spec: ProtocolSpec) -> ReportBatch:
        if spec.kind is Protocol.KRR:
            return cls(spec.kind, spec.d, items=np.zeros(0, dtype=np.int64))
        if spec.kind is Protocol.OUE:
            return cls(spec.kind, spec.d, bits=np.zeros((0, (spec.d + 7) // 8), dtype=np.uint8))
        return cls(spec.kind, spec.d, seeds=np.zeros(0, dtype=np.uint64), values=np.zeros(0, dtype=np.int64))

    def unpacked_bits(self) -> np.ndarray:
        """OUE bits as an ``(n, d)`` bool matrix."""
        return np.unpackbits(self.bits, axis=1, count=self.d).astype(bool)

    def select(self, index) -> ReportBatch:
        """Subset by boolean mask or integer index array."""
        if self.kind is Protocol.KRR:
            return ReportBatch(self.kind, self.d, items=self.items[index])
        if self.kind is Protocol.OUE:
            return ReportBatch(self.kind, self.d, bits=self.bits[index])
        keys = None if self._keys is None else self._keys[index]
        return ReportBatch(self.kind, self.d, seeds=self.seeds[index], values=self.values[index], _keys=keys)

    def __iter__(self):
        for i in range(len(self)):
            yield self.report(i)

    def report(self, i: int) -> Report:
        if self.kind is Protocol.KRR:
            return Report(self.kind, item=int(self.items[i]))
        if self.kind is Protocol.OUE:
            row = np.unpackbits(self.bits[i], count=self.d)
            return Report(self.kind, bits=tuple(int(b) for b in row))
        return Report(self.kind, seed=int(self.seeds[i]), value=int(self.values[i]))

    @classmethod
    def from_reports(cls, spec: ProtocolSpec, reports) -> ReportBatch:
        reports = list(reports)
        for r in reports:
            _check_variant(spec, r)
        if spec.kind is Protocol.KRR:
            return cls(spec.kind, spec.d, items=np.array([r.item for r in reports], dtype=np.int64))
        if spec.kind is Protocol.OUE:
            if not reports:
                return cls.empty(spec)
            rows = np.array([r.bits for r in reports], dtype=np.uint8)
            return cls(spec.kind, spec.d, bits=np.packbits(rows, axis=1))
        return cls(
            spec.kind, spec.d,
            seeds=np.array([r.seed for r in reports], dtype=np.uint64),
            values=np.array([r.value for r in reports], dtype=np.int64),
        )


def concat(batches) -> ReportBatch:
    batches = list(batches)
    first = batches[0]
    if any(b.kind is not first.kind or b.d != first.d for b in batches):
        raise ProtocolError("cannot concatenate batches from different protocol instances")
    if first.kind is Protocol.KRR:
        return ReportBatch(first.kind, first.d, items=np.concatenate([b.items for b in batches]))
    if first.kind is Protocol.OUE:
        return ReportBatch(first.kind, first.d, bits=np.concatenate([b.bits for b in batches]))
    return ReportBatch(
        first.kind, first.d,
        seeds=np.concatenate([b.seeds for b in batches]),
        values=np.concatenate([b.values for b in batches]),
    )


@dataclass
class FrequencyEstimate:
    """Estimated frequency per item; ``values[v - 1]`` belongs to item ``v``."""

    values: np.ndarray
    degenerate: bool = False

    def __getitem__(self, item: int) -> float:
        return float(self.values[item - 1])

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[int, float]:
        return {v + 1: float(x) for v, x in enumerate(self.values)}


def _check_items(spec: ProtocolSpec, items: np.ndarray) -> None:
    if items.size and (items.min() < 1 or items.max() > spec.d):
        raise DomainError(f"items must lie in 1..{spec.d}")


def _check_variant(spec: ProtocolSpec, report: Report) -> None:
    if report.kind is not spec.kind:
        raise ProtocolError(f"{report.kind.value} report used with a {spec.kind.value} protocol")
    if spec.kind is Protocol.OUE and (report.bits is None or len(report.bits) != spec.d):
        raise ProtocolError(f"OUE report must carry exactly {spec.d} bits")


def perturb_many(spec: ProtocolSpec, items, rng: np.random.Generator) -> ReportBatch:
    """Encode and perturb one item per user."""
    items = np.asarray(items, dtype=np.int64)
    _check_items(spec, items)
    n = len(items)
    if spec.kind is Protocol.KRR:
        keep = rng.random(n) < spec.p
        other = rng.integers(1, spec.d, size=n)
        other = np.where(other < items, other, other + 1)
        return ReportBatch(spec.kind, spec.d, items=np.where(keep, items, other))
    if spec.kind is Protocol.OUE:
        packed = []
        for start in range(0, n, _CHUNK):
            chunk = items[start:start + _CHUNK]
            rows = rng.random((len(chunk), spec.d), dtype=np.float32) < spec.q
            rows[np.arange(len(chunk)), chunk - 1] = rng.random(len(chunk)) < spec.p
            packed.append(np.packbits(rows, axis=1))
        bits = np.concatenate(packed) if packed else ReportBatch.empty(spec).bits
        return ReportBatch(spec.kind, spec.d, bits=bits)
    seeds = rng.integers(0, spec.seed_space, size=n, dtype=np.uint64)
    keys = seed_keys(seeds)
    h = hash_keyed(keys, items, spec.d_prime)
    keep = rng.random(n) < spec.p_prime
    other = rng.integers(1, spec.d_prime, size=n)
    other = np.where(other < h, other, other + 1)
    return ReportBatch(spec.kind, spec.d, seeds=seeds, values=np.where(keep, h, other), _keys=keys)


def perturb(spec: ProtocolSpec, item: int, rng: np.random.Generator) -> Report:
    return perturb_many(spec, [item], rng).report(0)


def support(spec: ProtocolSpec, report: Report) -> set[int]:
    """Items supported by a single report."""
    _check_variant(spec, report)
    if spec.kind is Protocol.KRR:
        return {report.item}
    if spec.kind is Protocol.OUE:
        return {v + 1 for v, b in enumerate(report.bits) if b}
    domain = np.arange(1, spec.d + 1)
    hits = hash_keyed(seed_keys(report.seed), domain, spec.d_prime) == report.value
    return {int(v) for v in domain[hits]}


def support_counts(spec: ProtocolSpec, batch: ReportBatch, items=None) -> np.ndarray:
    """Number of reports supporting each item of ``items`` (default: the whole domain).

    Counts from disjoint batches add up, so partitions can be merged by summation.
    """
    if batch.kind is not spec.kind:
        raise ProtocolError(f"{batch.kind.value} reports used with a {spec.kind.value} protocol")
    items = np.arange(1, spec.d + 1) if items is None else np.asarray(items, dtype=np.int64)
    if spec.kind is Protocol.KRR:
        full = np.bincount(batch.items, minlength=spec.d + 1)
        return full[items]
    if spec.kind is Protocol.OUE:
        full = np.zeros(spec.d, dtype=np.int64)
        for start in range(0, len(batch), _CHUNK):
            full += np.unpackbits(batch.bits[start:start + _CHUNK], axis=1, count=spec.d).sum(axis=0, dtype=np.int64)
        return full[items - 1]
    counts = np.zeros(len(items), dtype=np.int64)
    keys = batch.keys
    step = max(1, (1 << 22) // max(1, len(items)))
    for start in range(0, len(batch), step):
        h = hash_keyed(keys[start:start + step, None], items[None, :], spec.d_prime)
        counts += (h == batch.values[start:start + step, None]).sum(axis=0)
    return counts


def estimate_from_counts(spec: ProtocolSpec, counts, n_total: int) -> np.ndarray:
    return (np.asarray(counts, dtype=float) / n_total - spec.q) / (spec.p - spec.q)


def aggregate(spec: ProtocolSpec, reports, n_total: int | None = None) -> FrequencyEstimate:
    """Unbiased frequency estimate for every item from the collected reports."""
    batch = reports if isinstance(reports, ReportBatch) else ReportBatch.from_reports(spec, reports)
    n = len(batch) if n_total is None else n_total
    if len(batch) == 0 or n < 1:
        raise EmptyInputError("cannot aggregate an empty report set")
    return FrequencyEstimate(estimate_from_counts(spec, support_counts(spec, batch), n))


def probability(spec: ProtocolSpec, item: int, report: Report) -> float:
    """Exact probability that a user holding ``item`` emits ``report``."""
    _check_variant(spec, report)
    if spec.kind is Protocol.KRR:
        return spec.p if report.item == item else spec.q
    if spec.kind is Protocol.OUE:
        prob = 1.0
        for v, b in enumerate(report.bits, start=1):
            on = spec.p if v == item else spec.q
            prob *= on if b else 1 - on
        return prob
    h = hash_keyed(seed_keys(report.seed), item, spec.d_prime)
    return (spec.p_prime if int(h) == report.value else spec.q_prime) / spec.seed_space
