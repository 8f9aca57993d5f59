"""Datasets: Zipf synthesis, CSV ingestion, and a plain-text export format."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    """One item per user; items are 1-indexed in ``1..d``."""

    d: int
    user_items: np.ndarray
    label_map: dict | None = None  # raw label -> item index
    skipped: int = 0

    def __post_init__(self):
        self.user_items = np.asarray(self.user_items, dtype=np.int64)
        if self.d < 1:
            raise ParameterError("domain size must be positive")
        if self.user_items.size and (self.user_items.min() < 1 or self.user_items.max() > self.d):
            raise ParameterError(f"user items must lie in 1..{self.d}")

    @property
    def n(self) -> int:
        return len(self.user_items)

    @property
    def counts(self) -> np.ndarray:
        """``counts[v - 1]`` users hold item ``v``."""
        return np.bincount(self.user_items, minlength=self.d + 1)[1:]

    @property
    def true_freq(self) -> np.ndarray:
        return self.counts / self.n

    def freq_of(self, item: int) -> float:
        return float(self.true_freq[item - 1])

    def top_k(self, k: int) -> list[int]:
        """Most frequent items, ties toward the smaller index."""
        order = np.lexsort((np.arange(self.d), -self.counts))
        return [int(v) + 1 for v in order[:k]]

    def same_items(self, other: Dataset) -> bool:
        return self.d == other.d and np.array_equal(self.user_items, other.user_items)


@dataclass(frozen=True)
class ZipfConfig:
    d: int = 1024
    n: int = 1_000_000
    exponent: float = 1.5

    def __post_init__(self):
        if self.d < 2 or self.n < 1 or not self.exponent > 0:
            raise ParameterError("Zipf needs d >= 2, n >= 1 and a positive exponent")


# Synthetic stand-ins sized like the two real datasets (item = popularity rank).
PRESETS = {
    "zipf": ZipfConfig(),
    "ipums": ZipfConfig(d=102, n=389_894, exponent=1.0),
    "fire": ZipfConfig(d=244, n=548_868, exponent=1.0),
}


def zipf_probabilities(d: int, exponent: float) -> np.ndarray:
    w = np.arange(1, d + 1, dtype=float) ** -exponent
    return w / w.sum()


def synth_zipf(config: ZipfConfig = ZipfConfig(), rng: np.random.Generator | None = None) -> Dataset:
    """Independent draws where the rank-``i`` item has weight ``i**-exponent``."""
    rng = np.random.default_rng() if rng is None else rng
    probs = zipf_probabilities(config.d, config.exponent)
    items = rng.choice(config.d, size=config.n, p=probs) + 1
    return Dataset(config.d, items)


def _parse_filter(filter_):
    if filter_ is None:
        return None
    if isinstance(filter_, str):
        col, sep, val = filter_.partition("=")
        if not sep:
            raise IngestionError(f"filter must look like column=value, got {filter_!r}")
        return col, val
    return tuple(filter_)


def ingest_csv(path, column: str, max_rows: int | None = None, filter_=None) -> Dataset:
    """Read one categorical column; each row is a user.

    Labels get indices ``1..d`` in order of first appearance.  Rows with an
    empty value are skipped and counted in ``Dataset.skipped``.  ``filter_``
    (``"col=value"`` or a pair) keeps only rows whose ``col`` equals ``value``.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    flt = _parse_filter(filter_)
    labels: dict[str, int] = {}
    items: list[int] = []
    skipped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if column not in header:
            raise IngestionError(f"column {column!r} not in {path.name} header")
        if flt is not None and flt[0] not in header:
            raise IngestionError(f"filter column {flt[0]!r} not in {path.name} header")
        for row in reader:
            if max_rows is not None and len(items) + skipped >= max_rows:
                break
            if flt is not None and (row.get(flt[0]) or "").strip() != flt[1]:
                continue
            raw = (row.get(column) or "").strip()
            if not raw:
                skipped += 1
                continue
            items.append(labels.setdefault(raw, len(labels) + 1))
    if not items:
        raise IngestionError(f"no usable values in column {column!r}")
    if skipped:
        log.info("skipped %d rows with an empty %r value", skipped, column)
    return Dataset(len(labels), np.array(items), label_map=labels, skipped=skipped)


def export_dataset(dataset: Dataset, path) -> None:
    """Header ``d=<d> n=<n>`` then one item index per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"d={dataset.d} n={dataset.n}\n")
        np.savetxt(fh, dataset.user_items, fmt="%d")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            meta = dict(tok.split("=", 1) for tok in header)
            d, n = int(meta["d"]), int(meta["n"])
        except (KeyError, ValueError) as exc:
            raise IngestionError(f"bad dataset header in {path}") from exc
        items = np.loadtxt(fh, dtype=np.int64, ndmin=1)
    if len(items) != n:
        raise IngestionError(f"header says n={n} but found {len(items)} items")
    return Dataset(d, items)


def load_source(source: str, rng: np.random.Generator | None = None, n: int | None = None) -> Dataset:
    """Resolve a dataset spec: a preset name (``zipf``, ``ipums``, ``fire``),
    ``csv:path:column``, or ``file:path`` (exported format).  ``n`` overrides
    the preset user count."""
    if source.startswith("csv:"):
        parts = source.split(":", 2)
        if len(parts) != 3:
            raise IngestionError("csv source must look like csv:path:column")
        return ingest_csv(parts[1], parts[2])
    if source.startswith("file:"):
        return load_dataset(source[5:])
    if source not in PRESETS:
        raise ParameterError(f"unknown dataset {source!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[source]
    if n is not None:
        cfg = ZipfConfig(cfg.d, n, cfg.exponent)
    return synth_zipf(cfg, rng)
