import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_poison.attacks import (Attack, AttackConfig, attack_pem, craft, fake_count, oue_padding,
                                target_hits)
from ldp_poison.errors import DomainError, ParameterError
from ldp_poison.hashing import hash_eval
from ldp_poison.heavy_hitter import PemConfig, lambda_schedule, split_evenly
from ldp_poison.protocols import Protocol, derive_params, support


def test_fake_count_hits_beta():
    assert fake_count(0.05, 95) == 5
    assert fake_count(0.0, 1000) == 0
    m = fake_count(0.05, 100_000)
    assert m / (100_000 + m) == pytest.approx(0.05, abs=1e-5)
    with pytest.raises(ParameterError):
        fake_count(1.0, 10)


def test_attack_config_normalizes_targets():
    cfg = AttackConfig("mga", (5, 3, 5), 10)
    assert cfg.targets == (3, 5) and cfg.r == 2 and cfg.kind is Attack.MGA
    with pytest.raises(ParameterError):
        AttackConfig("mga", (), 10)


def test_targets_outside_domain_rejected():
    spec = derive_params("oue", 1.0, 10)
    with pytest.raises(DomainError):
        craft(spec, "mga", [11], 5, np.random.default_rng(0))


def test_zero_fakes_gives_empty_batch():
    for kind in Protocol:
        spec = derive_params(kind, 1.0, 10)
        assert len(craft(spec, "mga", [1], 0, np.random.default_rng(0))) == 0


def test_mga_krr_reports_are_targets():
    spec = derive_params("krr", 1.0, 50)
    batch = craft(spec, "mga", [4, 9, 17], 2000, np.random.default_rng(1))
    assert set(np.unique(batch.items)) == {4, 9, 17}


def test_oue_padding_formula():
    spec = derive_params("oue", 1.0, 102)
    # p + (d-1) q = 0.5 + 101 / (e + 1) = 27.66...
    assert oue_padding(spec, 1) == 26
    assert oue_padding(spec, 10) == 17
    assert oue_padding(derive_params("oue", 4.0, 8), 5) == 0  # clamped


def test_mga_oue_vectors():
    spec = derive_params("oue", 1.0, 102)
    targets = [2, 30, 77]
    batch = craft(spec, "mga", targets, 500, np.random.default_rng(2))
    bits = batch.unpacked_bits()
    assert bits[:, np.array(targets) - 1].all()
    np.testing.assert_array_equal(bits.sum(axis=1), 3 + oue_padding(spec, 3))
    # padding is spread over the non-target items
    others = np.delete(bits, np.array(targets) - 1, axis=1).mean(axis=0)
    assert others.min() > 0.15 and others.max() < 0.35


def test_rpa_is_uniform():
    rng = np.random.default_rng(3)
    krr = derive_params("krr", 1.0, 8)
    counts = np.bincount(craft(krr, "rpa", [1], 80_000, rng).items, minlength=9)[1:]
    assert np.abs(counts / 80_000 - 1 / 8).max() < 0.01
    oue = derive_params("oue", 1.0, 8)
    assert craft(oue, "rpa", [1], 20_000, rng).unpacked_bits().mean() == pytest.approx(0.5, abs=0.01)
    olh = derive_params("olh", 1.0, 8)
    vals = craft(olh, "rpa", [1], 20_000, rng).values
    assert vals.min() == 1 and vals.max() == olh.d_prime


def test_ria_is_honest_perturbation_of_targets():
    rng = np.random.default_rng(4)
    spec = derive_params("krr", 2.0, 20)
    batch = craft(spec, "ria", [3, 5], 100_000, rng)
    share = np.isin(batch.items, [3, 5]).mean()
    assert share == pytest.approx(spec.p + spec.q, abs=0.01)


def _brute_best(spec, targets):
    """For every seed, the largest number of targets hashed to one value, and
    the smallest value achieving it (scalar re-evaluation of the hash)."""
    best = {}
    for s in range(spec.seed_space):
        buckets = {}
        for t in targets:
            a = hash_eval(s, t, spec.d_prime)
            buckets[a] = buckets.get(a, 0) + 1
        top = max(buckets.values())
        best[s] = (top, min(a for a, c in buckets.items() if c == top))
    return best


@settings(max_examples=15, deadline=None)
@given(targets=st.lists(st.integers(1, 30), min_size=1, max_size=8, unique=True),
       seed=st.integers(0, 2**32 - 1), eps=st.sampled_from([0.5, 1.0, 2.0]))
def test_mga_olh_is_exhaustive_argmax_on_small_seed_space(targets, seed, eps):
    spec = derive_params("olh", eps, 30, seed_space=48)
    batch = craft(spec, "mga", targets, 40, np.random.default_rng(seed), hash_candidates=48)
    best = _brute_best(spec, targets)
    global_top = max(v[0] for v in best.values())
    for rep in batch:
        top, smallest = best[rep.seed]
        assert top == global_top
        assert rep.value == smallest
        assert len(support(spec, rep) & set(targets)) == global_top


@settings(max_examples=10, deadline=None)
@given(targets=st.lists(st.integers(1, 40), min_size=1, max_size=10, unique=True),
       seed=st.integers(0, 2**32 - 1))
def test_mga_oue_and_krr_maximize_supported_targets(targets, seed):
    rng = np.random.default_rng(seed)
    for kind, best in [("oue", len(targets)), ("krr", 1)]:
        spec = derive_params(kind, 1.0, 40)
        batch = craft(spec, "mga", targets, 30, rng)
        assert (target_hits(spec, batch, targets) == best).all()


def test_mga_olh_ties_spread_over_seeds():
    spec = derive_params("olh", 1.0, 30, seed_space=48)
    batch = craft(spec, "mga", [1], 300, np.random.default_rng(0), hash_candidates=48)
    # every seed supports one target, so the choice is uniform over all of them
    assert len(np.unique(batch.seeds)) > 40


def test_attack_pem_crafts_one_batch_per_iteration():
    cfg = PemConfig(k=4, g=3, gamma=6, epsilon=1.0)
    att = AttackConfig("mga", (5, 40, 41), 30)
    sizes = split_evenly(30, 3, np.random.default_rng(0))
    assert sizes.sum() == 30
    batches = attack_pem(cfg, att, sizes, np.random.default_rng(1))
    assert [len(b) for b in batches] == sizes.tolist()
    for j, b in enumerate(batches, start=1):
        assert b.kind is Protocol.OLH and b.d == max(2, 2 ** lambda_schedule(cfg, j))


def test_expected_fake_support_for_mga_olh_is_reached():
    spec = derive_params("olh", 1.0, 102)
    batch = craft(spec, "mga", range(1, 6), 300, np.random.default_rng(9))
    # with 1000 candidate seeds, 5 targets almost always share a bucket
    assert target_hits(spec, batch, range(1, 6)).mean() > 4.5
    assert math.isclose(spec.q, 0.25)
