import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import betainc
from scipy.stats import binom

from ldp_poison.attacks import craft
from ldp_poison.data import ZipfConfig, synth_zipf
from ldp_poison.defenses import (DetectionConfig, build_indicator_vectors, detect_fake_users, normalize,
                                 oue_threshold, olh_threshold, olh_threshold_check)
from ldp_poison.errors import NotApplicableError, ParameterError
from ldp_poison.hashing import hash_eval
from ldp_poison.itemsets import mine_frequent_itemsets
from ldp_poison.protocols import FrequencyEstimate, Protocol, Report, ReportBatch, concat, derive_params, perturb_many
from ldp_poison.special import binomial_tail, regularized_incomplete_beta


# -- normalization ---------------------------------------------------------

def test_normalize_examples():
    np.testing.assert_allclose(normalize(FrequencyEstimate(np.array([0.5, 0.3, 0.4]))).values, [2 / 3, 0, 1 / 3])
    np.testing.assert_allclose(normalize(FrequencyEstimate(np.array([-0.1, 0.1]))).values, [0, 1])
    dist = np.array([0.0, 0.25, 0.75])
    np.testing.assert_allclose(normalize(FrequencyEstimate(dist)).values, dist)


def test_normalize_degenerate_and_too_small():
    out = normalize(FrequencyEstimate(np.full(4, 0.3)))
    assert out.degenerate and np.allclose(out.values, 0.25)
    with pytest.raises(ParameterError):
        normalize(FrequencyEstimate(np.array([1.0])))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=40))
def test_normalize_is_a_rank_preserving_distribution(values):
    vals = np.array(values)
    out = normalize(FrequencyEstimate(vals))
    assert (out.values >= 0).all()
    assert out.values.sum() == pytest.approx(1.0, abs=1e-9)
    if not out.degenerate:
        # strictly ordered pairs stay strictly ordered
        i, j = np.triu_indices(len(vals), 1)
        strict = vals[i] < vals[j]
        assert (out.values[i][strict] <= out.values[j][strict]).all()
        assert out.values[np.argmax(vals)] == out.values.max()


# -- indicator vectors -----------------------------------------------------

def test_indicator_vectors_oue_identity_and_olh_hash():
    oue = derive_params("oue", 1.0, 4)
    batch = ReportBatch.from_reports(oue, [Report(Protocol.OUE, bits=(0, 1, 0, 1))])
    assert build_indicator_vectors(oue, batch).astype(int).tolist() == [[0, 1, 0, 1]]
    olh = derive_params("olh", 1.0, 4)
    seed = next(s for s in range(100_000) if [hash_eval(s, v, 4) for v in range(1, 5)] == [2, 1, 2, 3])
    batch = ReportBatch.from_reports(olh, [Report(Protocol.OLH, seed=seed, value=2)])
    assert build_indicator_vectors(olh, batch).astype(int).tolist() == [[1, 0, 1, 0]]
    with pytest.raises(NotApplicableError):
        build_indicator_vectors(derive_params("krr", 1.0, 4), ReportBatch.empty(derive_params("krr", 1.0, 4)))


def test_olh_indicator_rates_follow_support_law():
    rng = np.random.default_rng(0)
    spec = derive_params("olh", 1.0, 10)
    items = rng.choice(np.arange(1, 11), size=40_000, p=np.linspace(1, 3, 10) / 20)
    vec = build_indicator_vectors(spec, perturb_many(spec, items, rng))
    f = np.bincount(items, minlength=11)[1:] / len(items)
    expected = f * spec.p_prime + (1 - f) * spec.q
    np.testing.assert_allclose(vec.mean(axis=0), expected, atol=4 * math.sqrt(0.25 / 40_000))


# -- miner -----------------------------------------------------------------

def _brute_force(vectors, base_support, max_size):
    vectors = np.asarray(vectors, bool)
    out = {}
    for size in range(1, max_size + 1):
        for combo in itertools.combinations(range(vectors.shape[1]), size):
            s = int(vectors[:, combo].all(axis=1).sum())
            if s >= base_support:
                out[frozenset(c + 1 for c in combo)] = s
    return out


def test_miner_hand_example():
    vecs = [[1, 1, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [0, 0, 0, 1]]
    got = dict(mine_frequent_itemsets(vecs, 3, 2))
    assert got == {frozenset({1}): 3, frozenset({2}): 3, frozenset({1, 2}): 3}
    assert mine_frequent_itemsets(vecs, 5, 2) == []
    with pytest.raises(ValueError):
        mine_frequent_itemsets(vecs, 0, 2)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 12), n=st.integers(1, 100), density=st.floats(0.1, 0.9),
       base=st.integers(1, 30), max_size=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_miner_matches_brute_force(d, n, density, base, max_size, seed):
    vecs = np.random.default_rng(seed).random((n, d)) < density
    got = dict(mine_frequent_itemsets(vecs, base, max_size))
    assert got == _brute_force(vecs, base, max_size)


def test_miner_on_fifty_users_twelve_items_up_to_triples():
    vecs = np.random.default_rng(7).random((50, 12)) < 0.5
    assert dict(mine_frequent_itemsets(vecs, 5, 3)) == _brute_force(vecs, 5, 3)


def test_miner_labels():
    vecs = [[1, 1], [1, 1]]
    assert dict(mine_frequent_itemsets(vecs, 2, 2, labels=[10, 20])) == {
        frozenset({10}): 2, frozenset({20}): 2, frozenset({10, 20}): 2}


# -- incomplete beta / binomial tails --------------------------------------

def test_incomplete_beta_examples():
    assert regularized_incomplete_beta(0.5, 1, 3) == pytest.approx(0.875, abs=1e-15)
    for x in (0.0, 0.2, 0.77, 1.0):
        assert regularized_incomplete_beta(x, 1, 1) == pytest.approx(x, abs=1e-15)


def test_incomplete_beta_equals_binomial_tail_on_grid():
    for N in (1, 7, 50, 333, 2000, 10_000):
        for x in (1e-4, 0.01, 0.0625, 0.25, 0.5, 0.9):
            for a in sorted({1, min(2, N), N // 3 + 1, N // 2 + 1, N}):
                mine = regularized_incomplete_beta(x, a, N - a + 1)
                assert mine == pytest.approx(betainc(a, N - a + 1, x), abs=1e-9)
                assert mine == pytest.approx(binom.sf(a - 1, N, x), abs=1e-9)


def test_incomplete_beta_fallback_and_errors():
    assert regularized_incomplete_beta(0.3, 2.5, 4.5) == pytest.approx(betainc(2.5, 4.5, 0.3))
    with pytest.raises(ValueError):
        regularized_incomplete_beta(1.5, 1, 1)
    assert binomial_tail(10, 0.3, 0) == 1.0 and binomial_tail(10, 0.3, 11) == 0.0


# -- thresholds ------------------------------------------------------------

def _oue_ok(tau, n, spec, z, eta):
    prob = spec.p * spec.q ** (z - 1)
    mu = n * prob
    return tau > mu and mu * (1 - prob) / (tau - mu) ** 2 <= eta


@pytest.mark.parametrize("n", [100, 10_000, 389_894])
@pytest.mark.parametrize("z", [1, 2, 5, 10, 20])
def test_oue_threshold_is_minimal(n, z):
    spec = derive_params("oue", 1.0, 102)
    tau = oue_threshold(n, spec, z, 0.01)
    assert _oue_ok(tau, n, spec, z, 0.01)
    assert not _oue_ok(tau - 1, n, spec, z, 0.01)
    assert oue_threshold(n, spec, z, 0.005) >= tau


@pytest.mark.parametrize("n", [50, 10_000, 105_263])
@pytest.mark.parametrize("z", [1, 2, 3, 6, 12])
def test_olh_threshold_is_minimal(n, z):
    spec = derive_params("olh", 1.0, 102)
    tau = olh_threshold(n, spec, z, 0.01)
    if z == 1:
        assert tau == n + 1  # x = 1: every honest user supports any singleton
        return
    x = spec.q ** (z - 1)
    assert betainc(tau, n - tau + 1, x) <= 0.01
    assert tau == 1 or betainc(tau - 1, n - tau + 2, x) > 0.01
    assert olh_threshold_check(n, spec, z, tau) == pytest.approx(betainc(tau, n - tau + 1, x), abs=1e-9)
    assert olh_threshold(n, spec, z, 0.005) >= tau


# -- detection -------------------------------------------------------------

def test_detection_refuses_krr():
    spec = derive_params("krr", 1.0, 10)
    with pytest.raises(NotApplicableError):
        detect_fake_users(spec, ReportBatch.empty(spec))


def test_detection_flags_only_supporters_of_abnormal_itemsets():
    rng = np.random.default_rng(1)
    spec = derive_params("oue", 1.0, 40)
    ds = synth_zipf(ZipfConfig(d=40, n=20_000, exponent=1.0), rng)
    genuine = perturb_many(spec, ds.user_items, rng)
    fake = craft(spec, "mga", [3, 9, 27, 33, 38], 1_000, rng)
    batch = concat([genuine, fake])
    out = detect_fake_users(spec, batch, DetectionConfig.for_targets(5), ground_truth=np.r_[np.zeros(20_000, bool), np.ones(1_000, bool)])
    assert out.abnormal_itemsets
    vec = build_indicator_vectors(spec, batch)
    supports_any = np.zeros(len(batch), bool)
    for b, s in out.abnormal_itemsets:
        cols = np.array(sorted(b)) - 1
        mask = vec[:, cols].all(axis=1)
        assert mask.sum() == s
        supports_any |= mask
    assert not (out.flagged_mask & ~supports_any).any()
    assert out.fnr == 0.0 and out.fpr <= 0.01
    # without labels the rates are absent
    unlabeled = detect_fake_users(spec, batch, DetectionConfig.for_targets(5))
    assert unlabeled.fpr is None and unlabeled.fnr is None
    np.testing.assert_array_equal(unlabeled.flagged_mask, out.flagged_mask)


@pytest.mark.parametrize("kind", ["oue", "olh"])
def test_honest_only_flagged_fraction_within_budget(kind):
    # 20 seeded honest-only runs; the threshold bound caps the flagged share at eta
    spec = derive_params(kind, 1.0, 64)
    cfg = DetectionConfig(max_itemset_size=20)
    fractions = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        items = synth_zipf(ZipfConfig(d=64, n=20_000, exponent=1.0), rng).user_items
        out = detect_fake_users(spec, perturb_many(spec, items, rng), cfg)
        fractions.append(out.flagged_mask.mean())
    assert max(fractions) <= cfg.eta


def test_detection_config_validation():
    with pytest.raises(ParameterError):
        DetectionConfig(eta=0.0)
    with pytest.raises(ParameterError):
        DetectionConfig(max_itemset_size=0)
    with pytest.raises(ParameterError):
        DetectionConfig(flag_rule="some")
    assert DetectionConfig.for_targets(1).max_itemset_size == 2
    assert DetectionConfig.for_targets(15).max_itemset_size == 20
