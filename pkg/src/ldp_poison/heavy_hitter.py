"""Prefix Extending Method (PEM) for top-k heavy hitters.

Every item ``v`` in ``1..d`` is encoded as the ``gamma``-bit big-endian
binary of ``v - 1``.  Users are split into ``g`` groups; group ``j`` reports
the ``lambda_j``-bit prefix of its item through OLH, and the collector keeps
the ``k`` candidate prefixes (extensions of the previous round's winners)
with the highest estimated frequency.

Inside an iteration a ``lambda``-bit prefix ``x`` is the OLH item ``x + 1``
of a ``2**lambda`` item domain; only candidate prefixes are ever counted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePartitionError, DomainError, ParameterError
from .hashing import DEFAULT_SEED_SPACE
from .protocols import (Protocol, ProtocolSpec, ReportBatch, concat, derive_params,
                        estimate_from_counts, perturb_many, support_counts)

log = logging.getLogger(__name__)

# above this many live prefixes, detection vectors cover the candidates only
FULL_DOMAIN_LIMIT = 256


def bits_needed(d: int) -> int:
    """``ceil(log2 d)``, the width of the item encoding."""
    return max(1, (int(d) - 1).bit_length())


@dataclass(frozen=True)
class PemConfig:
    k: int
    g: int
    gamma: int
    epsilon: float
    seed_space: int = DEFAULT_SEED_SPACE

    def __post_init__(self):
        if self.k < 1 or self.g < 1 or self.gamma < 1:
            raise ParameterError("k, g and gamma must be positive")
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise ParameterError("epsilon must be positive and finite")
        if self.log_k > self.gamma:
            raise ParameterError(f"k={self.k} needs more than gamma={self.gamma} bits")

    @property
    def log_k(self) -> int:
        return (self.k - 1).bit_length()

    @classmethod
    def for_domain(cls, d: int, k: int = 20, g: int = 10, epsilon: float = 1.0, **kw) -> PemConfig:
        return cls(k=k, g=g, gamma=bits_needed(d), epsilon=epsilon, **kw)


@dataclass(frozen=True)
class PrefixSet:
    """Prefixes of a common bit length, stored as integers (big-endian)."""

    length: int
    prefixes: tuple[int, ...]

    def as_bits(self) -> set[str]:
        if self.length == 0:
            return {""} if self.prefixes else set()
        return {format(x, f"0{self.length}b") for x in self.prefixes}

    @classmethod
    def from_bits(cls, strings) -> PrefixSet:
        strings = list(strings)
        if not strings:
            return cls(0, (0,))
        lengths = {len(s) for s in strings}
        if len(lengths) != 1:
            raise ParameterError("prefixes must share one length")
        length = lengths.pop()
        return cls(length, tuple(int(s, 2) if s else 0 for s in strings))

    def __len__(self) -> int:
        return len(self.prefixes)


EMPTY_PREFIX = PrefixSet(0, (0,))


def lambda_schedule(config: PemConfig, j: int) -> int:
    if not 1 <= j <= config.g:
        raise ParameterError(f"iteration must lie in 1..{config.g}, got {j}")
    span = config.gamma - config.log_k
    return config.log_k + -(-j * span // config.g)


def extend_candidates(prev: PrefixSet, new_length: int) -> PrefixSet:
    """Every prefix of ``prev`` followed by every suffix of ``new_length - prev.length`` bits."""
    extra = new_length - prev.length
    if extra < 0:
        raise ParameterError("new_length must not be shorter than the previous prefixes")
    base = np.asarray(prev.prefixes if prev.prefixes else (0,), dtype=np.int64)
    cands = (base[:, None] << extra) + np.arange(1 << extra, dtype=np.int64)[None, :]
    return PrefixSet(new_length, tuple(np.unique(cands).tolist()))


def prefix_items(items, gamma: int, lam: int) -> np.ndarray:
    """OLH item id (``prefix + 1``) of each item's ``lam``-bit prefix."""
    return ((np.asarray(items, dtype=np.int64) - 1) >> (gamma - lam)) + 1


def iteration_spec(config: PemConfig, lam: int) -> ProtocolSpec:
    return derive_params(Protocol.OLH, config.epsilon, max(2, 1 << lam), config.seed_space)


def split_evenly(total: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    """Sizes of a uniform random partition of ``total`` users into ``parts`` groups."""
    sizes = np.full(parts, total // parts, dtype=np.int64)
    sizes[rng.choice(parts, size=total % parts, replace=False)] += 1
    return sizes


@dataclass
class PemResult:
    top_k: list[int]
    per_iteration: list[PrefixSet]
    estimates: list[dict[int, float]] = field(default_factory=list)
    detections: list = field(default_factory=list)

    def detection_rates(self):
        """Pooled (fpr, fnr) across iterations, ``None`` where undefined."""
        fp = genuine = fn = fake = 0
        for out in self.detections:
            if out is None or out.labels is None:
                continue
            fp += out.false_positives
            genuine += out.n_genuine
            fn += out.false_negatives
            fake += out.n_fake
        return (fp / genuine if genuine else None, fn / fake if fake else None)


class PemSession:
    """Genuine PEM reports generated once, replayable against any fake-report set.

    Running with and without an attack on the same session gives a paired
    before/after comparison in which genuine randomness is identical.
    """

    def __init__(self, config: PemConfig, user_items, d: int | None = None,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng() if rng is None else rng
        items = np.asarray(user_items, dtype=np.int64)
        self.d = int(items.max()) if d is None else int(d)
        if items.size == 0:
            raise DegeneratePartitionError("no users to partition")
        if items.min() < 1 or items.max() > self.d:
            raise DomainError(f"items must lie in 1..{self.d}")
        if self.d > 1 << config.gamma:
            raise ParameterError(f"{self.d} items do not fit in {config.gamma} bits")
        self.config = config
        groups = np.array_split(rng.permutation(len(items)), config.g)
        if any(len(gr) == 0 for gr in groups):
            raise DegeneratePartitionError(f"{len(items)} users cannot fill {config.g} groups")
        self.groups = groups
        self.genuine: list[ReportBatch] = []
        for j, (grp, sub) in enumerate(zip(groups, rng.spawn(config.g)), start=1):
            lam = lambda_schedule(config, j)
            spec = iteration_spec(config, lam)
            self.genuine.append(perturb_many(spec, prefix_items(items[grp], config.gamma, lam), sub))

    @property
    def n(self) -> int:
        return sum(len(gr) for gr in self.groups)

    def live_prefixes(self, lam: int) -> int:
        """Number of ``lam``-bit prefixes that start at least one real item."""
        return ((self.d - 1) >> (self.config.gamma - lam)) + 1

    def run(self, fake_batches=None, detection=None, detection_domain: str = "auto") -> PemResult:
        """Execute the ``g`` iterations.

        ``fake_batches`` holds one report batch per iteration (see
        :func:`ldp_poison.attacks.attack_pem`).  With a ``detection`` config,
        users flagged in an iteration are dropped before its top-k is chosen.
        ``detection_domain`` picks the indicator-vector items: ``"full"`` (all
        live prefixes), ``"candidates"``, or ``"auto"`` (full up to
        :data:`FULL_DOMAIN_LIMIT` prefixes).
        """
        from .defenses import detect_fake_users

        cfg = self.config
        if fake_batches is not None and len(fake_batches) != cfg.g:
            raise ParameterError("need one fake batch per iteration")
        prev = EMPTY_PREFIX
        history, estimates, detections = [], [], []
        for j in range(1, cfg.g + 1):
            lam = lambda_schedule(cfg, j)
            spec = iteration_spec(cfg, lam)
            cand = np.asarray(extend_candidates(prev, lam).prefixes, dtype=np.int64)
            cand = cand[cand < self.live_prefixes(lam)]
            genuine = self.genuine[j - 1]
            fake = fake_batches[j - 1] if fake_batches is not None else ReportBatch.empty(spec)
            batch = concat([genuine, fake]) if len(fake) else genuine
            outcome = None
            if detection is not None:
                labels = np.r_[np.zeros(len(genuine), bool), np.ones(len(fake), bool)]
                live = self.live_prefixes(lam)
                mode = detection_domain
                if mode == "auto":
                    mode = "full" if live <= FULL_DOMAIN_LIMIT else "candidates"
                dom = np.arange(1, live + 1) if mode == "full" else cand + 1
                outcome = detect_fake_users(spec, batch, detection, ground_truth=labels, items=dom)
                batch = batch.select(~outcome.flagged_mask)
            detections.append(outcome)
            n_total = len(batch)
            if n_total == 0:
                est = np.zeros(len(cand))
            else:
                est = estimate_from_counts(spec, support_counts(spec, batch, cand + 1), n_total)
            order = np.lexsort((cand, -est))[: cfg.k]
            prev = PrefixSet(lam, tuple(int(x) for x in cand[order]))
            history.append(prev)
            estimates.append({int(c) + 1: float(e) for c, e in zip(cand[order], est[order])})
        top = [x + 1 for x in prev.prefixes]  # final prefixes are full-length items
        return PemResult(top, history, estimates, detections)


def run_pem(config: PemConfig, dataset, attack=None, defense=None,
            rng: np.random.Generator | None = None) -> PemResult:
    """One PEM execution, optionally attacked and/or defended.

    ``dataset`` is a :class:`ldp_poison.data.Dataset` or a sequence of
    items.  ``attack`` is an :class:`ldp_poison.attacks.AttackConfig`;
    ``defense`` a :class:`ldp_poison.defenses.DetectionConfig`.
    """
    from .attacks import attack_pem

    rng = np.random.default_rng() if rng is None else rng
    genuine_rng, fake_rng = rng.spawn(2)
    items = getattr(dataset, "user_items", dataset)
    session = PemSession(config, items, getattr(dataset, "d", None), genuine_rng)
    fakes = None
    if attack is not None:
        fakes = attack_pem(config, attack, split_evenly(attack.m, config.g, fake_rng), fake_rng)
    return session.run(fakes, defense)


def defend_pem(session: PemSession, detection, fake_batches=None, **kw) -> PemResult:
    """Re-run a session with per-iteration fake-user removal."""
    return session.run(fake_batches, detection, **kw)
