"""Countermeasures: frequency normalization and fake-user detection.

Detection builds one 0/1 vector per report (the OUE bit vector, or for OLH
the items hashed to the reported value), mines frequent itemsets, and calls
an itemset abnormal when its support reaches a threshold that honest users
exceed with probability at most ``eta``.  Users supporting an abnormal
itemset are flagged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotApplicableError, ParameterError
from .hashing import hash_keyed
from .itemsets import mine_frequent_itemsets
from .protocols import FrequencyEstimate, Protocol, ProtocolSpec, ReportBatch
from .special import binomial_tail_curve, regularized_incomplete_beta

log = logging.getLogger(__name__)

DEFAULT_ETA = 0.01
DEFAULT_MIN_SUPPORT_FRACTION = 0.03


def normalize(estimate: FrequencyEstimate) -> FrequencyEstimate:
    """Shift by the minimum estimate and rescale to a probability distribution."""
    vals = np.asarray(estimate.values if isinstance(estimate, FrequencyEstimate) else estimate, dtype=float)
    if vals.size < 2:
        raise ParameterError("normalization needs at least 2 items")
    shifted = vals - vals.min()
    total = shifted.sum()
    if total <= 0:
        return FrequencyEstimate(np.full(vals.size, 1.0 / vals.size), degenerate=True)
    return FrequencyEstimate(shifted / total)


def default_max_itemset_size(r: int) -> int:
    return max(1, min(2 * r, 20))


@dataclass(frozen=True)
class DetectionConfig:
    """Detection knobs.

    ``base_support`` fixes the mining floor; when ``None`` it is
    ``max(min_z tau_z, ceil(min_support_fraction * N))``.  ``flag_rule``
    ``"maximal"`` flags users supporting an abnormal itemset that no other
    abnormal itemset contains; ``"all"`` flags supporters of any abnormal
    itemset.
    """

    eta: float = DEFAULT_ETA
    max_itemset_size: int = 20
    base_support: int | None = None
    min_support_fraction: float = DEFAULT_MIN_SUPPORT_FRACTION
    flag_rule: str = "maximal"

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ParameterError("eta must lie in (0, 1)")
        if self.max_itemset_size < 1:
            raise ParameterError("max_itemset_size must be >= 1")
        if self.base_support is not None and self.base_support < 1:
            raise ParameterError("base_support must be >= 1")
        if not 0 <= self.min_support_fraction <= 1:
            raise ParameterError("min_support_fraction must lie in [0, 1]")
        if self.flag_rule not in ("maximal", "all"):
            raise ParameterError("flag_rule must be 'maximal' or 'all'")

    @classmethod
    def for_targets(cls, r: int, **kw) -> DetectionConfig:
        return cls(max_itemset_size=default_max_itemset_size(r), **kw)


@dataclass
class DetectionOutcome:
    abnormal_itemsets: list[tuple[frozenset, int]]
    flagged_mask: np.ndarray
    thresholds: dict[int, int] = field(default_factory=dict)
    base_support: int = 0
    flagging_itemsets: list[tuple[frozenset, int]] = field(default_factory=list)
    labels: np.ndarray | None = None

    @property
    def flagged_users(self) -> set[int]:
        return set(np.flatnonzero(self.flagged_mask).tolist())

    @property
    def n_genuine(self) -> int:
        return 0 if self.labels is None else int((~self.labels).sum())

    @property
    def n_fake(self) -> int:
        return 0 if self.labels is None else int(self.labels.sum())

    @property
    def false_positives(self) -> int:
        return int((self.flagged_mask & ~self.labels).sum())

    @property
    def false_negatives(self) -> int:
        return int((~self.flagged_mask & self.labels).sum())

    @property
    def fpr(self) -> float | None:
        if self.labels is None or self.n_genuine == 0:
            return None
        return self.false_positives / self.n_genuine

    @property
    def fnr(self) -> float | None:
        if self.labels is None or self.n_fake == 0:
            return None
        return self.false_negatives / self.n_fake


def _require_detectable(spec: ProtocolSpec) -> None:
    if spec.kind is Protocol.KRR:
        raise NotApplicableError("fake-user detection is not available for kRR")


def build_indicator_vectors(spec: ProtocolSpec, reports: ReportBatch, items=None) -> np.ndarray:
    """``(n_reports, len(items))`` bool matrix; column ``i`` is whether the
    report supports ``items[i]`` (default: the whole domain)."""
    _require_detectable(spec)
    if reports.kind is not spec.kind:
        raise ParameterError("reports do not match the protocol")
    items = np.arange(1, spec.d + 1) if items is None else np.asarray(items, dtype=np.int64)
    if spec.kind is Protocol.OUE:
        return reports.unpacked_bits()[:, items - 1]
    out = np.empty((len(reports), len(items)), dtype=bool)
    step = max(1, (1 << 22) // max(1, len(items)))
    keys = reports.keys
    for start in range(0, len(reports), step):
        stop = start + step
        h = hash_keyed(keys[start:stop, None], items[None, :], spec.d_prime)
        out[start:stop] = h == reports.values[start:stop, None]
    return out


def oue_threshold(n_total: int, spec: ProtocolSpec, z: int, eta: float = DEFAULT_ETA) -> int:
    """Smallest support an OUE ``z``-itemset needs to be abnormal (Chebyshev bound)."""
    if z < 1:
        raise ParameterError("itemset size must be >= 1")
    prob = spec.p * spec.q ** (z - 1)
    mu = n_total * prob
    var = mu * (1 - prob)
    # smallest integer tau > mu with var / (tau - mu)^2 <= eta
    tau = max(math.floor(mu) + 1, math.ceil(mu + math.sqrt(var / eta)))
    while tau - 1 > mu and var / (tau - 1 - mu) ** 2 <= eta:
        tau -= 1
    while var / (tau - mu) ** 2 > eta:
        tau += 1
    return int(tau)


def olh_threshold(n_total: int, spec: ProtocolSpec, z: int, eta: float = DEFAULT_ETA) -> int:
    """Smallest support an OLH ``z``-itemset needs to be abnormal.

    Honest users support a fixed ``z``-itemset independently with probability
    at most ``q**(z-1)``, so the bound is the binomial upper tail
    ``I(q**(z-1); tau, N - tau + 1)``.  Returns ``N + 1`` (unreachable) when
    no support level is rare enough.
    """
    if z < 1:
        raise ParameterError("itemset size must be >= 1")
    x = spec.q ** (z - 1)
    if x >= 1:
        return n_total + 1
    tail = binomial_tail_curve(n_total, x)
    ok = np.flatnonzero(tail[1:] <= eta)
    return int(ok[0] + 1)


def olh_threshold_check(n_total: int, spec: ProtocolSpec, z: int, tau: int) -> float:
    """``I(q**(z-1); tau, N - tau + 1)`` for an explicit ``tau`` (0 past ``N``)."""
    if tau > n_total:
        return 0.0
    return regularized_incomplete_beta(spec.q ** (z - 1), tau, n_total - tau + 1)


def thresholds(spec: ProtocolSpec, n_total: int, max_size: int, eta: float) -> dict[int, int]:
    _require_detectable(spec)
    fn = oue_threshold if spec.kind is Protocol.OUE else olh_threshold
    return {z: fn(n_total, spec, z, eta) for z in range(1, max_size + 1)}


def _maximal(itemsets):
    sets = sorted(itemsets, key=lambda bs: -len(bs[0]))
    keep = []
    for b, s in sets:
        if not any(b < other for other, _ in keep):
            keep.append((b, s))
    return keep


def detect_fake_users(spec: ProtocolSpec, reports: ReportBatch, config: DetectionConfig | None = None,
                      ground_truth=None, items=None) -> DetectionOutcome:
    """Flag reports that support an abnormally frequent itemset.

    ``ground_truth`` is an optional bool mask (``True`` = fake) used for the
    FPR/FNR fields.  ``items`` restricts the indicator vectors to a subset of
    the domain.
    """
    _require_detectable(spec)
    config = DetectionConfig() if config is None else config
    n = len(reports)
    labels = None if ground_truth is None else np.asarray(ground_truth, dtype=bool)
    if labels is not None and labels.shape != (n,):
        raise ParameterError("ground truth must have one label per report")
    items = np.arange(1, spec.d + 1) if items is None else np.asarray(items, dtype=np.int64)
    if n == 0:
        return DetectionOutcome([], np.zeros(0, bool), labels=labels)

    tau = thresholds(spec, n, config.max_itemset_size, config.eta)
    floor = config.base_support
    if floor is None:
        floor = max(min(tau.values()), math.ceil(config.min_support_fraction * n), 1)
    vectors = build_indicator_vectors(spec, reports, items)
    mined = mine_frequent_itemsets(vectors, floor, config.max_itemset_size, labels=items)
    abnormal = [(b, s) for b, s in mined if s >= tau[len(b)]]
    flagging = abnormal if config.flag_rule == "all" else _maximal(abnormal)

    column = {int(v): i for i, v in enumerate(items)}
    flagged = np.zeros(n, dtype=bool)
    for b, _ in flagging:
        cols = [column[v] for v in b]
        flagged |= vectors[:, cols].all(axis=1)
    abnormal.sort(key=lambda bs: (len(bs[0]), sorted(bs[0])))
    return DetectionOutcome(abnormal, flagged, tau, floor, flagging, labels)


def remove_flagged(reports: ReportBatch, outcome: DetectionOutcome) -> ReportBatch:
    return reports.select(~outcome.flagged_mask)
