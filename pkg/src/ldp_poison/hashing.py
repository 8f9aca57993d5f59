"""Seeded 64-bit hash family used by OLH.

Each seed selects one hash function ``H_seed: int -> [d']``.  The mixer is the
splitmix64 finalizer applied twice (once to the seed, once to the
seed-keyed item), which is cheap to vectorize with numpy ``uint64`` arithmetic.
"""

import numpy as np

DEFAULT_SEED_SPACE = 2**32

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ITEM_MULT = np.uint64(0xD6E8FEB86659FD93)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    # uint64 arithmetic wraps by design; numpy only warns for scalars
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1
        z = z ^ (z >> np.uint64(27))
        z = z * _M2
        return z ^ (z >> np.uint64(31))


def seed_keys(seeds) -> np.ndarray:
    """Precompute the per-seed key; reuse it when hashing many items under one seed."""
    s = np.asarray(seeds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(s + _GOLDEN)


def hash_keyed(keys, items, d_prime: int) -> np.ndarray:
    """Hash ``items`` under precomputed seed ``keys`` (broadcasting) into 1..d_prime."""
    k = np.asarray(keys, dtype=np.uint64)
    x = np.asarray(items, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(k ^ (x * _ITEM_MULT))
    return (h % np.uint64(d_prime)).astype(np.int64) + 1


def hash_eval(seed, item, d_prime: int):
    """Evaluate ``H_seed(item)`` with values in ``1..d_prime``.

    Scalars in, scalar out; arrays broadcast.
    """
    if d_prime < 2:
        raise ValueError(f"d_prime must be >= 2, got {d_prime}")
    out = hash_keyed(seed_keys(seed), item, d_prime)
    if np.ndim(out) == 0:
        return int(out)
    return out
