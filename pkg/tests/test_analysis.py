import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_poison.analysis import (GainReport, attack_constant, check_theorems, empirical_gain, expected_gain,
                                 krr_less_secure, select_targets, success_rate, theoretical_gain)
from ldp_poison.attacks import Attack, AttackConfig
from ldp_poison.data import ZipfConfig, synth_zipf
from ldp_poison.errors import ParameterError
from ldp_poison.protocols import Protocol, derive_params

PROTOCOLS = list(Protocol)
ATTACKS = list(Attack)


def test_table_values_at_default_settings():
    assert theoretical_gain("krr", "mga", 0.05, 1, 0.01, 1.0, 102) == pytest.approx(2.99, abs=0.01)
    assert theoretical_gain("oue", "mga", 0.05, 1, 0.01, 1.0, 102) == pytest.approx(0.16, abs=0.01)
    assert theoretical_gain("oue", "mga", 0.05, 10, 0.01, 1.0, 102) == pytest.approx(1.58, abs=0.01)
    assert theoretical_gain("olh", "rpa", 0.3, 4, 0.0, 1.0, 102) == 0.0


def test_unknown_combination_rejected():
    with pytest.raises(ParameterError):
        theoretical_gain("grr", "mga", 0.05, 1, 0.01, 1.0, 10)
    with pytest.raises(ParameterError):
        theoretical_gain("oue", "mga", 1.0, 1, 0.01, 1.0, 10)


@pytest.mark.parametrize("kind", ["krr", "oue"])
@pytest.mark.parametrize("attack", ATTACKS)
def test_exact_parameter_gain_equals_closed_form_for_krr_and_oue(kind, attack):
    spec = derive_params(kind, 1.3, 50)
    for r in (1, 4, 9):
        assert expected_gain(spec, attack, 0.07, r, 0.02) == pytest.approx(
            theoretical_gain(kind, attack, 0.07, r, 0.02, 1.3, 50), rel=1e-12)


def test_olh_exact_gain():
    spec = derive_params("olh", 1.0, 102)
    # RIA: ideal hashing makes the exact value coincide with the closed form
    assert expected_gain(spec, "ria", 0.05, 10, 0.01) == pytest.approx(0.05 * 0.99, rel=1e-12)
    # RPA: an honest-looking uniform report nets nothing
    assert expected_gain(spec, "rpa", 0.05, 10, 0.0) == pytest.approx(0.0, abs=1e-15)
    # MGA with d'=4 at eps=1 exceeds the d'=e+1 idealization
    assert expected_gain(spec, "mga", 0.05, 1, 0.01) == pytest.approx(0.05 * (0.75 / (spec.p - 0.25) - 0.01))


def test_theorem_two_crossover():
    # eps=1, r=1: boundary e - 1 + 3 = 4.718
    assert not krr_less_secure(1.0, 4, 1) and krr_less_secure(1.0, 5, 1)
    for d in (3, 4, 5, 6, 50):
        g_krr = theoretical_gain("krr", "mga", 0.05, 1, 0.01, 1.0, d)
        g_oue = theoretical_gain("oue", "mga", 0.05, 1, 0.01, 1.0, d)
        assert (g_krr > g_oue) == (d >= 5)


def test_check_theorems_grid():
    rep = check_theorems([0.25, 0.5, 1, 2, 4], [2, 5, 10, 102, 1024], [1, 2, 5, 10])
    assert rep.ok and rep.points == 5 * 14  # (d, r) pairs with r < d


def test_mga_gain_decreases_in_epsilon():
    for kind in PROTOCOLS:
        gains = [theoretical_gain(kind, "mga", 0.05, 3, 0.01, e, 100) for e in (0.5, 1, 2)]
        assert gains[0] > gains[1] > gains[2]
        if kind is not Protocol.KRR:
            assert gains == [theoretical_gain("olh", "mga", 0.05, 3, 0.01, e, 100) for e in (0.5, 1, 2)]


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(PROTOCOLS), attack=st.sampled_from(ATTACKS), beta=st.floats(0.001, 0.5),
       r=st.integers(1, 20), f1=st.floats(0, 0.5), f2=st.floats(0, 0.5), eps=st.floats(0.1, 5),
       d=st.integers(20, 2000))
def test_gains_decrease_in_target_frequency(kind, attack, beta, r, f1, f2, eps, d):
    lo, hi = sorted((f1, f2))
    g_lo = theoretical_gain(kind, attack, beta, r, lo, eps, d)
    g_hi = theoretical_gain(kind, attack, beta, r, hi, eps, d)
    assert g_hi <= g_lo + 1e-15
    if hi > lo + 1e-9:
        assert g_hi < g_lo


def test_attack_ordering_at_defaults():
    args = (0.05, 5, 0.01, 1.0, 102)
    for kind in ("krr", "olh"):
        mga, ria, rpa = (theoretical_gain(kind, a, *args) for a in ("mga", "ria", "rpa"))
        assert mga > ria >= rpa
    assert theoretical_gain("oue", "rpa", *args) > theoretical_gain("oue", "ria", *args)


def _dataset():
    return synth_zipf(ZipfConfig(d=40, n=20_000, exponent=1.0), np.random.default_rng(0))


def test_zero_fakes_gives_exactly_zero_gain():
    ds = _dataset()
    for kind in PROTOCOLS:
        spec = derive_params(kind, 1.0, 40)
        rep = empirical_gain(spec, ds, AttackConfig("mga", (30, 31), 0), trials=3, rng=np.random.default_rng(1))
        assert rep.overall_gain == 0.0 and all(g == 0.0 for g in rep.per_target_gain.values())


def test_gain_report_fields():
    ds = _dataset()
    spec = derive_params("oue", 1.0, 40)
    att = AttackConfig.from_beta("mga", (30, 31, 32), 0.05, ds.n)
    rep = empirical_gain(spec, ds, att, trials=4, rng=np.random.default_rng(2))
    assert isinstance(rep, GainReport)
    assert rep.overall_gain == pytest.approx(sum(rep.per_target_gain.values()))
    assert rep.beta == pytest.approx(att.m / (ds.n + att.m))
    assert rep.c == pytest.approx(att.m * (rep.f_T * (spec.p - spec.q) + 3 * spec.q) / ((ds.n + att.m) * (spec.p - spec.q)))
    assert rep.c == pytest.approx(attack_constant(spec, rep.beta, 3, rep.f_T))
    assert abs(rep.overall_gain - rep.expected_gain) < 4 * rep.overall_gain_stderr + 1e-3


def test_normalized_gain_uses_calibrated_frequencies():
    ds = _dataset()
    spec = derive_params("krr", 1.0, 40)
    att = AttackConfig.from_beta("mga", (35,), 0.05, ds.n)
    rep = empirical_gain(spec, ds, att, defense="normalize", trials=3, rng=np.random.default_rng(3))
    plain = empirical_gain(spec, ds, att, trials=3, rng=np.random.default_rng(3))
    assert 0 < rep.overall_gain < plain.overall_gain


def test_targets_outside_domain_rejected():
    ds = _dataset()
    spec = derive_params("oue", 1.0, 40)
    with pytest.raises(ParameterError):
        empirical_gain(spec, ds, AttackConfig("mga", (41,), 10), trials=1)
    with pytest.raises(ParameterError):
        empirical_gain(spec, ds, AttackConfig("mga", (1,), 10), trials=0)


def test_success_rate():
    targets = list(range(100, 110))
    after = targets[:7] + list(range(13))
    assert success_rate(list(range(20)), after, targets) == 0.7
    assert success_rate(list(range(20)), list(range(20)), targets) == 0.0
    with pytest.raises(ParameterError):
        success_rate([1], [1], [])
    with pytest.raises(ParameterError):
        success_rate([100], [100], targets)


def test_select_targets_honors_requested_mass():
    ds = synth_zipf(ZipfConfig(d=1024, n=200_000, exponent=1.5), np.random.default_rng(4))
    t = select_targets(ds, 5, 0.01, np.random.default_rng(0))
    assert len(t) == 5 and abs(ds.true_freq[np.array(t) - 1].sum() - 0.01) <= 0.002
    t2 = select_targets(ds, 5, 0.01, np.random.default_rng(0), exclude=t)
    assert not set(t) & set(t2)
