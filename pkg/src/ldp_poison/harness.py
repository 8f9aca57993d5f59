"""Experiment runner: one-parameter sweeps over frequency-estimation and
heavy-hitter attacks, with paired before/after runs and optional defenses.

Randomness flows from one master seed: the dataset gets its own stream, and
each sweep point gets an independent child stream (so results do not depend
on how many points are run or in which process).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import empirical_gain, parse_defense, select_targets, success_rate, theoretical_gain
from .attacks import Attack, AttackConfig, attack_pem, fake_count
from .data import Dataset, ZipfConfig, load_source, synth_zipf
from .defenses import DEFAULT_MIN_SUPPORT_FRACTION, DetectionConfig
from .errors import NotApplicableError, ParameterError
from .heavy_hitter import PemConfig, PemSession, split_evenly
from .protocols import Protocol, derive_params

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DESK_N = 100_000
SWEEPABLE = ("beta", "r", "f_T", "epsilon", "k", "g", "d", "hash_candidates", "eta")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "ipums"
    n: int | None = DESK_N  # None keeps the source's own size
    d: int | None = None  # only for the synthetic zipf source
    zipf_exponent: float | None = None
    protocol: Protocol = Protocol.OUE
    attack: Attack = Attack.MGA
    defense: str = "none"
    beta: float = 0.05
    r: int = 1
    f_T: float = 0.01
    epsilon: float = 1.0
    k: int = 20
    g: int = 10
    eta: float = 0.01
    min_support_fraction: float = DEFAULT_MIN_SUPPORT_FRACTION
    hash_candidates: int = 1000
    sweep: tuple[str, tuple] | None = None
    trials: int = 20
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "attack", Attack(self.attack))
        parse_defense(self.defense)
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEPABLE:
                raise ParameterError(f"cannot sweep {name!r}; choose from {SWEEPABLE}")
            if not values:
                raise ParameterError("sweep needs at least one value")
            object.__setattr__(self, "sweep", (name, tuple(values)))

    def points(self) -> list[tuple[str | None, object, ExperimentConfig]]:
        """``(param, value, config)`` per sweep value (one point without a sweep)."""
        if self.sweep is None:
            return [(None, None, self)]
        name, values = self.sweep
        return [(name, v, dataclasses.replace(self, sweep=None, **{name: _cast(name, v)})) for v in values]


def _cast(name: str, value):
    return int(value) if name in ("r", "k", "g", "d", "hash_candidates") else float(value)


@dataclass
class ResultRecord:
    experiment: str
    dataset: str
    protocol: str
    attack: str
    defense: str
    param: str | None
    value: float | None
    beta: float
    r: int
    f_T: float
    f_T_actual: float
    epsilon: float
    d: int
    n: int
    m: int
    k: int
    g: int
    trials: int
    seed: int
    theoretical_gain: float | None = None
    expected_gain: float | None = None
    empirical_gain: float | None = None
    empirical_gain_stderr: float | None = None
    success_rate: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    wall_clock: float = field(default=0.0, metadata={"csv": False})


CSV_COLUMNS = [f.name for f in dataclasses.fields(ResultRecord) if f.metadata.get("csv", True)]


def check_applicable(config: ExperimentConfig, pem: bool = False) -> None:
    """Refuse the combinations the collector cannot run (PEM always uses OLH)."""
    _, detect = parse_defense(config.defense)
    if detect and not pem and config.protocol is Protocol.KRR:
        raise NotApplicableError("detection is not applicable to kRR")
    if detect and config.attack is Attack.RIA:
        raise NotApplicableError("detection is not applicable to RIA (its reports are protocol-conformant)")


def _streams(seed: int, count: int):
    data_ss, run_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(data_ss), [np.random.default_rng(s) for s in run_ss.spawn(count)]


def _dataset(config: ExperimentConfig, rng) -> Dataset:
    if config.dataset == "zipf" and (config.d is not None or config.zipf_exponent is not None):
        base = ZipfConfig()
        zc = ZipfConfig(config.d or base.d, config.n or base.n, config.zipf_exponent or base.exponent)
        return synth_zipf(zc, rng)
    return load_source(config.dataset, rng, config.n)


def _base_record(kind, cfg, param, value, ds, m) -> dict:
    return dict(
        experiment=kind, dataset=cfg.dataset, protocol=cfg.protocol.value, attack=cfg.attack.value,
        defense=cfg.defense, param=param, value=None if value is None else float(value),
        beta=cfg.beta, r=cfg.r, f_T=cfg.f_T, epsilon=cfg.epsilon, d=ds.d, n=ds.n, m=m,
        k=cfg.k, g=cfg.g, trials=cfg.trials, seed=cfg.seed,
    )


def _detection(cfg: ExperimentConfig) -> DetectionConfig:
    return DetectionConfig.for_targets(cfg.r, eta=cfg.eta, min_support_fraction=cfg.min_support_fraction)


def _freq_point(args):
    param, value, cfg, ds, rng = args
    start = time.perf_counter()
    spec = derive_params(cfg.protocol, cfg.epsilon, ds.d)
    target_rng, trial_rng = rng.spawn(2)
    targets = select_targets(ds, cfg.r, cfg.f_T, target_rng)
    attack = AttackConfig.from_beta(cfg.attack, targets, cfg.beta, ds.n, hash_candidates=cfg.hash_candidates)
    rep = empirical_gain(spec, ds, attack, cfg.defense, cfg.trials, trial_rng, _detection(cfg))
    rec = ResultRecord(
        **_base_record("freq", cfg, param, value, ds, attack.m),
        f_T_actual=rep.f_T,
        theoretical_gain=theoretical_gain(cfg.protocol, cfg.attack, cfg.beta, cfg.r, rep.f_T, cfg.epsilon, ds.d),
        expected_gain=rep.expected_gain,
        empirical_gain=rep.overall_gain,
        empirical_gain_stderr=rep.overall_gain_stderr,
        fpr=rep.fpr, fnr=rep.fnr,
    )
    rec.wall_clock = time.perf_counter() - start
    return rec


def _hh_point(args):
    param, value, cfg, ds, rng = args
    start = time.perf_counter()
    if cfg.r >= cfg.k:
        log.warning("r=%d targets cannot all fit in a top-%d", cfg.r, cfg.k)
    pem = PemConfig.for_domain(ds.d, k=cfg.k, g=cfg.g, epsilon=cfg.epsilon)
    _, detect = parse_defense(cfg.defense)
    detection = _detection(cfg) if detect else None
    m = fake_count(cfg.beta, ds.n)
    rates, fprs, fnrs, f_ts = [], [], [], []
    for sub in rng.spawn(cfg.trials):
        genuine_rng, target_rng, fake_rng = sub.spawn(3)
        session = PemSession(pem, ds.user_items, ds.d, genuine_rng)
        clean_top = session.run().top_k
        pool = np.setdiff1d(np.arange(1, ds.d + 1), clean_top)
        if len(pool) < cfg.r:
            raise ParameterError(f"only {len(pool)} items lie outside the unattacked top-{cfg.k}")
        targets = np.sort(target_rng.choice(pool, size=cfg.r, replace=False))
        attack = AttackConfig(cfg.attack, tuple(targets), m, cfg.hash_candidates)
        fakes = attack_pem(pem, attack, split_evenly(m, pem.g, fake_rng), fake_rng)
        after = session.run(fakes, detection)
        rates.append(success_rate(clean_top, after.top_k, targets))
        f_ts.append(float(ds.true_freq[targets - 1].sum()))
        if detection is not None:
            fpr, fnr = after.detection_rates()
            if fpr is not None:
                fprs.append(fpr)
            if fnr is not None:
                fnrs.append(fnr)
    rec = ResultRecord(
        **{**_base_record("hh", cfg, param, value, ds, m), "protocol": Protocol.OLH.value},
        f_T_actual=float(np.mean(f_ts)),
        success_rate=float(np.mean(rates)),
        fpr=float(np.mean(fprs)) if fprs else None,
        fnr=float(np.mean(fnrs)) if fnrs else None,
    )
    rec.wall_clock = time.perf_counter() - start
    return rec


def _run(config: ExperimentConfig, worker) -> list[ResultRecord]:
    points = config.points()
    for _, _, cfg in points:
        check_applicable(cfg, pem=worker is _hh_point)
    data_rng, point_rngs = _streams(config.seed, len(points))
    shared = None
    jobs = []
    for (param, value, cfg), rng in zip(points, point_rngs):
        if param == "d":
            # a new domain means a new dataset, drawn from the same data stream seed
            ds = _dataset(cfg, np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0]))
        else:
            shared = shared or _dataset(cfg, data_rng)
            ds = shared
        jobs.append((param, value, cfg, ds, rng))
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def run_frequency_experiment(config: ExperimentConfig) -> list[ResultRecord]:
    """Empirical and theoretical overall gain per sweep value."""
    return _run(config, _freq_point)


def run_hh_experiment(config: ExperimentConfig) -> list[ResultRecord]:
    """PEM success rate per sweep value; targets are drawn outside the unattacked top-k."""
    return _run(config, _hh_point)


def theory_table(config: ExperimentConfig) -> list[ResultRecord]:
    """Closed-form gains only (no simulation); ``d`` defaults to 102."""
    d = config.d or 102
    out = []
    for param, value, cfg in config.points():
        dd = cfg.d or d
        gain = theoretical_gain(cfg.protocol, cfg.attack, cfg.beta, cfg.r, cfg.f_T, cfg.epsilon, dd)
        out.append(ResultRecord(
            experiment="theory", dataset="-", protocol=cfg.protocol.value, attack=cfg.attack.value,
            defense="none", param=param, value=None if value is None else float(value),
            beta=cfg.beta, r=cfg.r, f_T=cfg.f_T, f_T_actual=cfg.f_T, epsilon=cfg.epsilon, d=dd,
            n=0, m=0, k=cfg.k, g=cfg.g, trials=0, seed=cfg.seed, theoretical_gain=gain,
        ))
    return out


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def emit_results(records, path, fmt: str = "csv") -> Path:
    """Write records as CSV (stable column order) or schema-versioned JSON."""
    records = list(records)
    if not records:
        raise ParameterError("no records to write")
    path = Path(path)
    rows = [dataclasses.asdict(r) for r in records]
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in rows:
                w.writerow([_csv_value(row[c]) for c in CSV_COLUMNS])
    elif fmt == "json":
        payload = {"schema_version": SCHEMA_VERSION, "columns": CSV_COLUMNS, "records": rows}
        path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n", encoding="utf-8")
    else:
        raise ParameterError(f"unknown format {fmt!r}")
    return path


def read_csv_records(path) -> list[dict]:
    """Inverse of the CSV writer: numbers come back as int/float, blanks as None."""
    out = []
    types = {f.name: f.type for f in dataclasses.fields(ResultRecord)}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, raw in row.items():
                t = str(types.get(key, "str"))
                if raw == "":
                    rec[key] = None
                elif t.startswith("int"):
                    rec[key] = int(raw)
                elif "float" in t:
                    rec[key] = float(raw)
                else:
                    rec[key] = raw
            out.append(rec)
    return out
