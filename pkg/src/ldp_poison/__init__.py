"""Data-poisoning attacks on local differential privacy protocols, and defenses.

Simulates kRR, OUE and OLH frequency estimation and PEM heavy-hitter
identification, crafts fake-user reports (RPA, RIA, MGA), and measures how
much normalization and itemset-based fake-user detection blunt them.
"""

from .attacks import Attack, AttackConfig, craft, fake_count
from .data import Dataset, ZipfConfig, ingest_csv, synth_zipf
from .defenses import DetectionConfig, detect_fake_users, normalize
from .heavy_hitter import PemConfig, PemSession, run_pem
from .protocols import Protocol, ProtocolSpec, aggregate, derive_params, perturb, perturb_many, support

__version__ = "0.1.0"

__all__ = [
    "Attack", "AttackConfig", "Dataset", "DetectionConfig", "PemConfig", "PemSession", "Protocol",
    "ProtocolSpec", "ZipfConfig", "aggregate", "craft", "derive_params", "detect_fake_users",
    "fake_count", "ingest_csv", "normalize", "perturb", "perturb_many", "run_pem", "support",
    "synth_zipf",
]
