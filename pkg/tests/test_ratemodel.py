import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairsource.errors import DomainError
from pairsource.ratemodel import (
    Channel,
    IoConfig,
    SourceParams,
    expected_accidental_rate,
    expected_coincidence_rate,
    expected_singles_rate,
    quadratic_coefficients,
)


def simple_params(**kw):
    base = dict(
        gamma_eff=14.7,
        eta_gc_a=0.1,
        eta_gc_b=0.1,
        eta_path_s=0.1,
        eta_path_i=0.1,
        leak_s=0.0,
        leak_i=0.0,
        dark_s=100.0,
        dark_i=100.0,
        rep_rate=50e6,
    )
    base.update(kw)
    return SourceParams(**base)


unit = st.floats(0.001, 1.0)
params_st = st.builds(
    SourceParams,
    gamma_eff=st.floats(0.1, 200.0),
    eta_gc_a=unit,
    eta_gc_b=unit,
    eta_path_s=unit,
    eta_path_i=unit,
    leak_s=st.floats(0.0, 1e5),
    leak_i=st.floats(0.0, 1e5),
    dark_s=st.floats(0.0, 1e4),
    dark_i=st.floats(0.0, 1e4),
)
configs = st.sampled_from(list(IoConfig))


def test_zero_power_leaves_dark_counts():
    p = simple_params(leak_s=50.0, dark_s=123.0, dark_i=7.0)
    assert expected_singles_rate(p, IoConfig.A, Channel.SIGNAL, 0.0) == 123.0
    assert expected_singles_rate(p, IoConfig.B, Channel.IDLER, 0.0) == 7.0


def test_singles_closed_form_value():
    # eta_in = 0.1, eta_ch = 0.1 * 0.1 = 0.01
    p = simple_params()
    rate = expected_singles_rate(p, IoConfig.A, Channel.SIGNAL, 1.0)
    assert rate == pytest.approx(0.01 * 14.7e6 * 0.1**2 + 100.0, rel=1e-14)
    assert rate == pytest.approx(1570.0, rel=1e-12)


def test_doubling_power_quadruples_pure_pair_rate():
    p = simple_params(dark_s=0.0, dark_i=0.0)
    r1 = expected_singles_rate(p, IoConfig.A, Channel.SIGNAL, 0.7)
    r2 = expected_singles_rate(p, IoConfig.A, Channel.SIGNAL, 1.4)
    assert r2 == pytest.approx(4.0 * r1, rel=1e-14)


def test_negative_power_rejected():
    p = simple_params()
    with pytest.raises(DomainError):
        expected_singles_rate(p, IoConfig.A, Channel.SIGNAL, -1.0)
    with pytest.raises(DomainError):
        expected_coincidence_rate(p, IoConfig.A, -0.1)
    with pytest.raises(DomainError):
        expected_accidental_rate(p, IoConfig.A, -0.1)


def test_coincidence_closed_form_value():
    p = simple_params()
    assert expected_coincidence_rate(p, IoConfig.A, 1.0) == pytest.approx(14.7, rel=1e-12)


def test_no_nonlinearity_no_pairs():
    p = simple_params(gamma_eff=0.0)
    for power in (0.0, 0.3, 3.0):
        assert expected_coincidence_rate(p, IoConfig.B, power) == 0.0


def test_accidental_rate_value_and_zero():
    p = simple_params()
    acc = expected_accidental_rate(p, IoConfig.A, 1.0)
    assert acc == pytest.approx(1570.0**2 / 5e7, rel=1e-12)
    assert acc == pytest.approx(0.0493, abs=5e-5)
    z = SourceParams(0.0, 0.0, 0.0, 0.0, 0.0)
    assert expected_accidental_rate(z, IoConfig.A, 1.0) == 0.0


def test_accidental_rate_bilinear():
    # dark-only source: doubling both dark rates doubles both singles
    p1 = simple_params(gamma_eff=0.0, dark_s=300.0, dark_i=500.0)
    p2 = simple_params(gamma_eff=0.0, dark_s=600.0, dark_i=1000.0)
    a1 = expected_accidental_rate(p1, IoConfig.A, 1.0)
    a2 = expected_accidental_rate(p2, IoConfig.A, 1.0)
    assert a2 == pytest.approx(4.0 * a1, rel=1e-14)


@pytest.mark.parametrize(
    "field,value",
    [
        ("gamma_eff", -1.0),
        ("eta_gc_a", 1.5),
        ("eta_path_i", -0.1),
        ("dark_s", -1.0),
        ("rep_rate", 0.0),
        ("jitter_fwhm", 0.0),
    ],
)
def test_param_validation(field, value):
    with pytest.raises(DomainError):
        simple_params(**{field: value})


def test_config_swap_and_couplers():
    p = simple_params(eta_gc_a=0.3, eta_gc_b=0.05)
    assert IoConfig.A.swap() is IoConfig.B
    assert IoConfig.B.swap() is IoConfig.A
    assert p.coupler_in(IoConfig.A) == p.coupler_out(IoConfig.B) == 0.3
    assert p.coupler_in(IoConfig.B) == p.coupler_out(IoConfig.A) == 0.05
    assert p.eta_coupling == pytest.approx(0.015)


def test_params_dict_roundtrip():
    p = simple_params(leak_s=12.5)
    assert SourceParams.from_dict(p.to_dict()) == p
    with pytest.raises(DomainError):
        SourceParams.from_dict({**p.to_dict(), "bogus": 1})


@settings(max_examples=100, deadline=None)
@given(params_st, configs, st.sampled_from(list(Channel)))
def test_singles_is_exact_quadratic(p, config, channel):
    powers = np.array([0.5, 1.5, 3.0])
    rates = [expected_singles_rate(p, config, channel, x) for x in powers]
    coef = np.polyfit(powers, rates, 2)
    eta_ch = p.collection(config, channel)
    a_expected = eta_ch * p.gamma_eff * p.coupler_in(config) ** 2 * 1e6
    assert coef[0] == pytest.approx(a_expected, rel=1e-8, abs=1e-9 * max(rates))
    for x in (0.1, 2.2):
        assert expected_singles_rate(p, config, channel, x) == pytest.approx(
            np.polyval(coef, x), rel=1e-8, abs=1e-8 * max(rates)
        )


@settings(max_examples=100, deadline=None)
@given(params_st, configs, st.floats(0.0, 5.0))
def test_coincidences_never_exceed_pair_singles(p, config, power):
    cc = expected_coincidence_rate(p, config, power)
    pair = p.gamma_eff * (p.coupler_in(config) * power) ** 2 * 1e6
    s_pair = p.collection(config, Channel.SIGNAL) * pair
    i_pair = p.collection(config, Channel.IDLER) * pair
    assert cc <= min(s_pair, i_pair) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(params_st, configs)
def test_coefficient_ratio_identity(p, config):
    q = quadratic_coefficients(p, config)
    ratio = q["s"][0] * q["i"][0] / q["si"][0]
    assert ratio == pytest.approx(p.gamma_eff * p.coupler_in(config) ** 2 * 1e6, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(params_st)
def test_dual_product_identity(p):
    qa = quadratic_coefficients(p, IoConfig.A)
    qb = quadratic_coefficients(p, IoConfig.B)
    prod = (qa["s"][0] * qa["i"][0] / qa["si"][0]) * (qb["s"][0] * qb["i"][0] / qb["si"][0])
    assert prod == pytest.approx(p.gamma_eff**2 * p.eta_coupling**2 * 1e12, rel=1e-12)


def test_quadratic_coefficients_match_rate_functions():
    p = simple_params(leak_s=2e3, leak_i=3e3, dark_s=11.0, dark_i=13.0, eta_gc_a=0.2)
    for config in IoConfig:
        q = quadratic_coefficients(p, config)
        for x in (0.3, 1.0, 2.5):
            s = q["s"][0] * x * x + q["s"][1] * x + q["s"][2]
            assert s == pytest.approx(expected_singles_rate(p, config, Channel.SIGNAL, x), rel=1e-13)
            i = q["i"][0] * x * x + q["i"][1] * x + q["i"][2]
            assert i == pytest.approx(expected_singles_rate(p, config, Channel.IDLER, x), rel=1e-13)
            assert q["si"][0] * x * x == pytest.approx(expected_coincidence_rate(p, config, x), rel=1e-13)
