import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pairsource.errors import DomainError, InvalidCoefficientError
from pairsource.extract import FitTriple, Method, gamma_dual_config, gamma_single_config
from pairsource.fitting import QuadFit
from pairsource.ratemodel import IoConfig, SourceParams, quadratic_coefficients


def qf(a, sigma_a=0.0):
    cov = np.diag([sigma_a**2, 1.0, 1.0])
    return QuadFit(a=a, b=0.0, c=0.0, covariance=cov, chi2=0.0, dof=1)


def triple(coefs, rel=0.0):
    return FitTriple(*(qf(coefs[k][0], rel * coefs[k][0]) for k in ("s", "i", "si")))


def analytic(params, rel=0.0):
    return (
        triple(quadratic_coefficients(params, IoConfig.A), rel),
        triple(quadratic_coefficients(params, IoConfig.B), rel),
    )


def manual_coefs(gamma, eta_in, eta_1, eta_2):
    pair = gamma * eta_in**2 * 1e6
    return {"s": (eta_1 * pair,), "i": (eta_2 * pair,), "si": (eta_1 * eta_2 * pair,)}


unit = st.floats(0.001, 0.5)
params_st = st.builds(
    SourceParams,
    gamma_eff=st.floats(0.1, 200.0),
    eta_gc_a=st.floats(0.005, 0.5),
    eta_gc_b=st.floats(0.005, 0.5),
    eta_path_s=unit,
    eta_path_i=unit,
)


def test_single_config_unit_substitution():
    est = gamma_single_config(qf(1.0), qf(1.0), qf(1.0), 1.0)
    assert est.value == pytest.approx(1e-6, rel=1e-15)
    assert est.method is Method.SINGLE_CONFIG
    assert est.sigma == 0.0


def test_single_config_closed_form():
    c = manual_coefs(2.0, 0.15, 0.02, 0.03)
    assert c["s"][0] == pytest.approx(9e-4 * 1e6)
    assert c["i"][0] == pytest.approx(1.35e-3 * 1e6)
    assert c["si"][0] == pytest.approx(2.7e-5 * 1e6)
    est = gamma_single_config(qf(c["s"][0]), qf(c["i"][0]), qf(c["si"][0]), 0.15)
    assert est.value == pytest.approx(2.0, rel=1e-13)


def test_single_config_error_propagation():
    est = gamma_single_config(qf(4.0, 0.4), qf(2.0, 0.1), qf(1.0, 0.02), 1.0)
    assert est.sigma / est.value == pytest.approx(math.sqrt(0.1**2 + 0.05**2 + 0.02**2), rel=1e-14)


def test_single_config_bias_with_unbalanced_couplers():
    p = SourceParams(gamma_eff=5.0, eta_gc_a=0.3, eta_gc_b=0.05, eta_path_s=0.2, eta_path_i=0.3)
    for config in IoConfig:
        t = triple(quadratic_coefficients(p, config))
        est = gamma_single_config(t.s, t.i, t.si, math.sqrt(p.eta_coupling))
        bias = p.coupler_in(config) ** 2 / p.eta_coupling
        assert est.value == pytest.approx(5.0 * bias, rel=1e-12)


def test_dual_config_unit():
    one = FitTriple(qf(1.0), qf(1.0), qf(1.0))
    est = gamma_dual_config(one, one, 1.0, 0.0)
    assert est.value == pytest.approx(1e-6, rel=1e-15)
    assert est.method is Method.DUAL_CONFIG


def test_dual_config_closed_form():
    # config B swaps the couplers; collection composites change with the output coupler
    a = manual_coefs(2.0, 0.15, 0.02, 0.03)
    b = manual_coefs(2.0, 0.05, 0.02 * 3, 0.03 * 3)
    est = gamma_dual_config(triple(a), triple(b), 7.5e-3)
    assert est.value == pytest.approx(2.0, rel=1e-13)


def test_dual_config_error_formula():
    a = FitTriple(qf(4.0, 0.4), qf(2.0, 0.1), qf(1.0, 0.03))
    b = FitTriple(qf(3.0, 0.06), qf(5.0, 0.5), qf(2.0, 0.2))
    est = gamma_dual_config(a, b, 0.01, 0.0005)
    rel = [0.1, 0.05, 0.03, 0.02, 0.1, 0.1]
    expected = math.sqrt(0.25 * sum(r * r for r in rel) + 0.05**2)
    assert est.sigma / est.value == pytest.approx(expected, rel=1e-13)
    default = gamma_dual_config(a, b, 0.01)
    assert default.sigma == pytest.approx(est.sigma, rel=1e-14)


def test_dual_config_swap_is_bit_identical():
    a = FitTriple(qf(4.1, 0.4), qf(2.3, 0.1), qf(1.7, 0.03))
    b = FitTriple(qf(3.9, 0.06), qf(5.2, 0.5), qf(2.05, 0.2))
    e1 = gamma_dual_config(a, b, 0.013, 0.001)
    e2 = gamma_dual_config(b, a, 0.013, 0.001)
    assert e1.value == e2.value
    assert e1.sigma == e2.sigma


@pytest.mark.parametrize("which", ["s", "i", "si"])
@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_invalid_coefficients(which, bad):
    good = {"s": qf(1.0), "i": qf(1.0), "si": qf(1.0)}
    broken = FitTriple(**{**good, which: qf(bad)})
    with pytest.raises(InvalidCoefficientError):
        gamma_dual_config(FitTriple(**good), broken, 0.01)
    with pytest.raises(InvalidCoefficientError):
        gamma_single_config(broken.s, broken.i, broken.si, 0.1)


def test_eta_domain():
    one = FitTriple(qf(1.0), qf(1.0), qf(1.0))
    for eta in (0.0, 1.5):
        with pytest.raises(DomainError):
            gamma_dual_config(one, one, eta)
        with pytest.raises(DomainError):
            gamma_single_config(one.s, one.i, one.si, eta)


@settings(max_examples=100, deadline=None)
@given(params_st, st.floats(0.2, 5.0))
def test_coupler_split_invariance(p, k):
    a, b = analytic(p)
    base = gamma_dual_config(a, b, p.eta_coupling)
    assume(p.eta_gc_a * k <= 1.0 and p.eta_gc_b / k <= 1.0)
    moved = SourceParams(
        gamma_eff=p.gamma_eff,
        eta_gc_a=p.eta_gc_a * k,
        eta_gc_b=p.eta_gc_b / k,
        eta_path_s=p.eta_path_s,
        eta_path_i=p.eta_path_i,
    )
    a2, b2 = analytic(moved)
    est = gamma_dual_config(a2, b2, p.eta_coupling)
    assert est.value == pytest.approx(base.value, rel=1e-12)
    assert est.value == pytest.approx(p.gamma_eff, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(params_st, st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_collection_path_invariance(p, ks, ki):
    scaled = SourceParams(
        gamma_eff=p.gamma_eff,
        eta_gc_a=p.eta_gc_a,
        eta_gc_b=p.eta_gc_b,
        eta_path_s=min(p.eta_path_s * ks, 1.0),
        eta_path_i=min(p.eta_path_i * ki, 1.0),
    )
    v1 = gamma_dual_config(*analytic(p), p.eta_coupling).value
    v2 = gamma_dual_config(*analytic(scaled), scaled.eta_coupling).value
    assert v2 == pytest.approx(v1, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 200.0), st.floats(0.005, 0.5), unit, unit)
def test_balanced_single_equals_dual(gamma, eta, ps, pi):
    p = SourceParams(gamma_eff=gamma, eta_gc_a=eta, eta_gc_b=eta, eta_path_s=ps, eta_path_i=pi)
    a, b = analytic(p)
    dual = gamma_dual_config(a, b, p.eta_coupling)
    single = gamma_single_config(a.s, a.i, a.si, math.sqrt(p.eta_coupling))
    assert single.value == pytest.approx(dual.value, rel=1e-12)


def test_record_contains_inputs_and_flags():
    a = FitTriple(qf(4.0, 0.4), qf(2.0, 0.1), qf(1.0, 0.03))
    rec = gamma_dual_config(a, a, 0.01).to_record()
    assert rec["method"] == "dual_config"
    assert rec["inputs"]["A"]["si"]["sigma_a"] == pytest.approx(0.03)
    assert rec["inputs"]["sigma_eta_coupling"] == pytest.approx(5e-4)
    assert any("correlation" in f for f in rec["flags"])
