"""Complete frequent-itemset mining over 0/1 user vectors.

Depth-first vertical mining (Eclat): every item keeps the set of users whose
vector has a 1 there, stored as a packed bitset, and an itemset's support is
the popcount of the AND of its items' bitsets.
"""

from __future__ import annotations

import numpy as np


def user_bitsets(vectors: np.ndarray) -> np.ndarray:
    """Column-wise packed bitsets, shape ``(d, words)`` of ``uint64``."""
    cols = np.packbits(np.asarray(vectors, dtype=bool).T, axis=1)
    pad = (-cols.shape[1]) % 8
    if pad:
        cols = np.pad(cols, ((0, 0), (0, pad)))
    return np.ascontiguousarray(cols).view(np.uint64)


def _popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


def mine_frequent_itemsets(vectors, base_support: int, max_size: int, labels=None):
    """All itemsets of size ``<= max_size`` that are all-ones in at least
    ``base_support`` vectors, with their exact supports.

    ``vectors`` is an ``(n_users, d)`` 0/1 matrix.  Items are reported as
    ``labels[column]`` (default: 1-indexed column numbers).  Returns a list of
    ``(frozenset, support)`` pairs.
    """
    if base_support < 1:
        raise ValueError("base_support must be >= 1")
    vectors = np.asarray(vectors, dtype=bool)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-D matrix")
    d = vectors.shape[1]
    labels = np.arange(1, d + 1) if labels is None else np.asarray(labels)
    if max_size < 1 or vectors.shape[0] < base_support:
        return []

    tids = user_bitsets(vectors)
    supports = _popcount(tids)
    keep = np.flatnonzero(supports >= base_support)
    # rarest first keeps the conditional bitsets small
    keep = keep[np.argsort(supports[keep], kind="stable")]
    out: list[tuple[frozenset, int]] = []

    def grow(prefix, cols, sets, sups):
        for i in range(len(cols)):
            itemset = prefix + (int(cols[i]),)
            out.append((frozenset(labels[list(itemset)].tolist()), int(sups[i])))
            if len(itemset) >= max_size or i + 1 == len(cols):
                continue
            joined = sets[i + 1:] & sets[i]
            s = _popcount(joined)
            ok = s >= base_support
            if ok.any():
                grow(itemset, cols[i + 1:][ok], joined[ok], s[ok])

    grow((), keep, tids[keep], supports[keep])
    return out
