"""Closed-form and measured attack gains, success rates, and the protocol
comparison checks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .attacks import Attack, AttackConfig, craft
from .defenses import DetectionConfig, detect_fake_users, normalize
from .errors import ParameterError
from .protocols import (Protocol, ProtocolSpec, concat, estimate_from_counts,
                        perturb_many, support_counts)

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 20


def _check_gain_args(beta, r, f_T, epsilon, d):
    if not 0 <= beta < 1:
        raise ParameterError(f"beta must lie in [0, 1), got {beta}")
    if r < 1:
        raise ParameterError("r must be >= 1")
    if not 0 <= f_T <= 1:
        raise ParameterError("f_T must lie in [0, 1]")
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if d < 2:
        raise ParameterError("d must be >= 2")


def theoretical_gain(protocol, attack, beta: float, r: int, f_T: float, epsilon: float, d: int) -> float:
    """Expected overall gain in the large-population limit (OLH with ideal hashing)."""
    try:
        protocol, attack = Protocol(protocol), Attack(attack)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    _check_gain_args(beta, r, f_T, epsilon, d)
    em1 = math.expm1(epsilon)
    if attack is Attack.RIA:
        return beta * (1 - f_T)
    if attack is Attack.RPA:
        share = {Protocol.KRR: r / d, Protocol.OUE: r, Protocol.OLH: 0.0}[protocol]
        return beta * (share - f_T)
    if protocol is Protocol.KRR:
        return beta * (1 - f_T) + beta * (d - r) / em1
    return beta * (2 * r - f_T) + 2 * beta * r / em1


def expected_fake_support(spec: ProtocolSpec, attack, r: int) -> float:
    """Expected number of targets a single fake report supports (ideal hashing for OLH)."""
    attack = Attack(attack)
    if attack is Attack.MGA:
        return 1.0 if spec.kind is Protocol.KRR else float(r)
    if attack is Attack.RIA:
        if spec.kind is Protocol.OLH:
            return spec.p_prime + (r - 1) * spec.q_prime + (r - 1) * (spec.p_prime - spec.q_prime) / spec.d_prime
        return spec.p + (r - 1) * spec.q
    return {Protocol.KRR: r / spec.d, Protocol.OUE: r / 2}.get(spec.kind, r / (spec.d_prime or 1))


def expected_gain(spec: ProtocolSpec, attack, beta: float, r: int, f_T: float,
                  fake_support: float | None = None) -> float:
    """Overall gain for the exact protocol parameters:
    ``beta * ((E[fake support] - r q) / (p - q) - f_T)``."""
    s = expected_fake_support(spec, attack, r) if fake_support is None else fake_support
    return beta * ((s - r * spec.q) / (spec.p - spec.q) - f_T)


def attack_constant(spec: ProtocolSpec, beta: float, r: int, f_T: float) -> float:
    """The attack-independent part of the gain, ``beta (f_T + r q / (p - q))``."""
    return beta * (f_T + r * spec.q / (spec.p - spec.q))


@dataclass
class GainReport:
    per_target_gain: dict[int, float]
    overall_gain: float
    overall_gain_stderr: float
    theoretical_gain: float | None
    expected_gain: float | None
    f_T: float
    beta: float
    c: float
    trials: int = 1
    per_trial_gain: list[float] = field(default_factory=list)
    fpr: float | None = None
    fnr: float | None = None


class _Aggregator:
    """Frequency estimates under an optional defense (normalize / detect / both)."""

    def __init__(self, spec, normalize_, detection):
        self.spec, self.normalize, self.detection = spec, normalize_, detection

    def estimate(self, batch, labels=None):
        outcome = None
        if self.detection is not None:
            outcome = detect_fake_users(self.spec, batch, self.detection, ground_truth=labels)
            batch = batch.select(~outcome.flagged_mask)
        n_total = len(batch)
        if n_total == 0:
            est = np.zeros(self.spec.d)
        else:
            est = estimate_from_counts(self.spec, support_counts(self.spec, batch), n_total)
        if self.normalize:
            est = normalize(est).values
        return est, outcome


def parse_defense(defense) -> tuple[bool, bool]:
    """``(normalize, detect)`` flags for ``none | normalize | detect | both``."""
    name = "none" if defense is None else str(defense)
    table = {"none": (False, False), "normalize": (True, False), "detect": (False, True), "both": (True, True)}
    if name not in table:
        raise ParameterError(f"unknown defense {name!r}")
    return table[name]


def empirical_gain(spec: ProtocolSpec, dataset, attack: AttackConfig, defense=None,
                   trials: int = DEFAULT_TRIALS, rng: np.random.Generator | None = None,
                   detection: DetectionConfig | None = None) -> GainReport:
    """Measured gain: estimates after minus before the attack, per target.

    Each trial perturbs the genuine users once and reuses those reports for
    both the before and after aggregation, so the difference isolates the
    fake reports.  ``defense`` is ``none``, ``normalize``, ``detect`` or
    ``both``.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    targets = np.asarray(attack.targets, dtype=np.int64)
    if targets.min() < 1 or targets.max() > spec.d:
        raise ParameterError(f"targets must lie in 1..{spec.d}")
    if getattr(dataset, "d", spec.d) != spec.d:
        raise ParameterError("dataset and protocol domain sizes differ")
    items = np.asarray(getattr(dataset, "user_items", dataset), dtype=np.int64)
    n, m = len(items), attack.m
    use_norm, use_detect = parse_defense(defense)
    if use_detect and detection is None:
        detection = DetectionConfig.for_targets(attack.r)
    agg = _Aggregator(spec, use_norm, detection if use_detect else None)
    rng = np.random.default_rng() if rng is None else rng

    per_trial = np.empty((trials, len(targets)))
    fprs, fnrs = [], []
    for i, sub in enumerate(rng.spawn(trials)):
        genuine_rng, fake_rng = sub.spawn(2)
        genuine = perturb_many(spec, items, genuine_rng)
        before, _ = agg.estimate(genuine, np.zeros(n, bool))
        fake = craft(spec, attack.kind, targets, m, fake_rng, attack.hash_candidates)
        combined = concat([genuine, fake]) if m else genuine
        labels = np.r_[np.zeros(n, bool), np.ones(m, bool)]
        after, outcome = agg.estimate(combined, labels)
        per_trial[i] = after[targets - 1] - before[targets - 1]
        if outcome is not None:
            if outcome.fpr is not None:
                fprs.append(outcome.fpr)
            if outcome.fnr is not None:
                fnrs.append(outcome.fnr)

    totals = per_trial.sum(axis=1)
    freq = np.bincount(items, minlength=spec.d + 1)[1:] / n
    f_T = float(freq[targets - 1].sum())
    beta = m / (n + m)
    stderr = float(totals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return GainReport(
        per_target_gain={int(t): float(g) for t, g in zip(targets, per_trial.mean(axis=0))},
        overall_gain=float(totals.mean()),
        overall_gain_stderr=stderr,
        theoretical_gain=theoretical_gain(spec.kind, attack.kind, beta, len(targets), f_T, spec.epsilon, spec.d),
        expected_gain=expected_gain(spec, attack.kind, beta, len(targets), f_T),
        f_T=f_T,
        beta=beta,
        c=attack_constant(spec, beta, len(targets), f_T),
        trials=trials,
        per_trial_gain=totals.tolist(),
        fpr=float(np.mean(fprs)) if fprs else None,
        fnr=float(np.mean(fnrs)) if fnrs else None,
    )


def success_rate(top_k_before, top_k_after, targets) -> float:
    """Fraction of targets that made it into the attacked top-k."""
    targets = set(int(t) for t in targets)
    if not targets:
        raise ParameterError("target set must be nonempty")
    if top_k_before is not None and targets & set(int(x) for x in top_k_before):
        raise ParameterError("targets must not already be in the unattacked top-k")
    return len(targets & set(int(x) for x in top_k_after)) / len(targets)


def select_targets(dataset, r: int, f_T: float, rng: np.random.Generator,
                   exclude=(), tolerance: float = 0.2) -> list[int]:
    """``r`` items whose true frequencies add up to roughly ``f_T``.

    Takes the items with frequency at most ``f_T / r`` that sit closest to
    it (random order among ties).  If that sum misses ``f_T`` by more than
    ``tolerance`` (relative), falls back to the ``r`` items nearest to
    ``f_T / r`` in absolute distance and logs a warning.
    """
    freq = np.asarray(dataset.true_freq, dtype=float)
    d = len(freq)
    pool = np.setdiff1d(np.arange(1, d + 1), np.asarray(list(exclude), dtype=np.int64))
    if len(pool) < r:
        raise ParameterError(f"cannot pick {r} targets from {len(pool)} eligible items")
    pool = rng.permutation(pool)
    per = f_T / r
    f = freq[pool - 1]
    below = pool[f <= per]
    chosen = below[np.argsort(-freq[below - 1], kind="stable")][:r]
    total = freq[chosen - 1].sum() if len(chosen) else 0.0
    if len(chosen) < r or abs(total - f_T) > tolerance * max(f_T, 1e-12):
        chosen = pool[np.argsort(np.abs(f - per), kind="stable")][:r]
        total = freq[chosen - 1].sum()
        if abs(total - f_T) > tolerance * max(f_T, 1e-12):
            log.warning("targets sum to f_T=%.4g instead of the requested %.4g", total, f_T)
    return sorted(int(t) for t in chosen)


@dataclass
class TheoremReport:
    points: int
    monotone_violations: list = field(default_factory=list)
    crossover_violations: list = field(default_factory=list)
    oue_olh_mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.monotone_violations or self.crossover_violations or self.oue_olh_mismatches)


def krr_less_secure(epsilon: float, d: int, r: int) -> bool:
    """Whether MGA gains more against kRR than against OUE."""
    return d > (2 * r - 1) * math.expm1(epsilon) + 3 * r


def check_theorems(epsilons, ds, rs, beta: float = 0.05, f_T: float = 0.01) -> TheoremReport:
    """Check the closed-form MGA gains on a grid: decreasing in epsilon for
    every protocol, kRR above OUE exactly past the crossover domain size, and
    OUE equal to OLH."""
    eps = sorted(set(epsilons))
    rep = TheoremReport(points=len(eps) * sum(1 for d in ds for r in rs if r < d))
    for d in ds:
        for r in rs:
            if r >= d:
                continue  # with every item a target the kRR epsilon term vanishes
            for proto in Protocol:
                gains = [theoretical_gain(proto, Attack.MGA, beta, r, f_T, e, d) for e in eps]
                for (e1, g1), (e2, g2) in zip(zip(eps, gains), zip(eps[1:], gains[1:])):
                    if not g1 > g2:
                        rep.monotone_violations.append((proto.value, d, r, e1, e2))
            for e in eps:
                g_krr = theoretical_gain(Protocol.KRR, Attack.MGA, beta, r, f_T, e, d)
                g_oue = theoretical_gain(Protocol.OUE, Attack.MGA, beta, r, f_T, e, d)
                g_olh = theoretical_gain(Protocol.OLH, Attack.MGA, beta, r, f_T, e, d)
                boundary = (2 * r - 1) * math.expm1(e) + 3 * r
                if not math.isclose(d, boundary, rel_tol=1e-12) and (g_krr > g_oue) != krr_less_secure(e, d, r):
                    rep.crossover_violations.append((e, d, r))
                if not math.isclose(g_oue, g_olh, rel_tol=1e-12, abs_tol=1e-15):
                    rep.oue_olh_mismatches.append((e, d, r))
    return rep
