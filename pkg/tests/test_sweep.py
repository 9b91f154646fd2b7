import numpy as np
import pytest

from pairsource.errors import DomainError, InsufficientRepeatsError, RegimeError
from pairsource.presets import WAVEGUIDE_GAMMA, lab_source
from pairsource.ratemodel import IoConfig, quadratic_coefficients
from pairsource.sweep import (
    SINGLE_CONFIG_WARNING,
    AnalysisOptions,
    CoincidenceFit,
    SweepPlan,
    analyze_datasets,
    default_plan,
    run_pipeline,
)


def small_plan(**kw):
    return SweepPlan(
        powers=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
        integration_times=(60.0,) * 6,
        repeats=kw.pop("repeats", 4),
        **kw,
    )


class TestPlan:
    def test_degenerate_max_power(self):
        with pytest.raises(DomainError):
            default_plan(0.3)
        with pytest.raises(DomainError):
            default_plan(0.1)

    def test_schedule_endpoints(self):
        plan = default_plan(3.0)
        assert len(plan.powers) == 12
        assert plan.powers[0] == pytest.approx(0.3)
        assert plan.powers[-1] == pytest.approx(3.0)
        assert plan.integration_times[0] == 300.0
        assert plan.integration_times[-1] == 30.0
        assert plan.repeats == 10
        assert plan.configs == (IoConfig.A, IoConfig.B)

    def test_time_tracks_inverse_square_before_clamp(self):
        plan = default_plan(3.0)
        t, p = np.array(plan.integration_times), np.array(plan.powers)
        free = (t > 30.0) & (t < 300.0)
        assert free.any()
        np.testing.assert_allclose(t[free] * p[free] ** 2, 300.0 * 0.09, rtol=1e-12)
        assert np.all(np.diff(t) <= 0)

    @pytest.mark.parametrize("max_power", [0.31, 1.0, 3.0, 10.0, 100.0])
    def test_plans_satisfy_invariants(self, max_power):
        plan = default_plan(max_power)
        assert all(b > a for a, b in zip(plan.powers, plan.powers[1:]))
        assert all(30.0 <= t <= 300.0 for t in plan.integration_times)
        assert plan.repeats >= 2

    @pytest.mark.parametrize(
        "kw",
        [
            dict(powers=(1.0, 0.5), integration_times=(30.0, 30.0)),
            dict(powers=(0.0, 1.0), integration_times=(30.0, 30.0)),
            dict(powers=(1.0,), integration_times=(10.0,)),
            dict(powers=(1.0,), integration_times=(30.0, 30.0)),
            dict(powers=(), integration_times=()),
            dict(powers=(1.0,), integration_times=(30.0,), repeats=0),
            dict(powers=(1.0,), integration_times=(30.0,), configs=(IoConfig.A, IoConfig.A)),
        ],
    )
    def test_plan_validation(self, kw):
        with pytest.raises(DomainError):
            SweepPlan(**kw)


def test_pipeline_recovers_gamma_and_is_deterministic():
    params = lab_source()
    plan = default_plan(3.0)
    r1 = run_pipeline(params, plan, 123)
    r2 = run_pipeline(params, plan, 123)
    assert abs(r1.gamma.value - 14.7) < 3 * r1.gamma.sigma
    assert r1.summary_record() == r2.summary_record()
    assert r1.fits_record() == r2.fits_record()
    assert r1.provenance["master_seed"] == 123
    assert len(r1.provenance["params_sha256"]) == 64
    # coupler imbalance 3: single-config estimates off by x3 and x1/3
    assert r1.single_config[IoConfig.A].value == pytest.approx(3 * 14.7, rel=0.1)
    assert r1.single_config[IoConfig.B].value == pytest.approx(14.7 / 3, rel=0.1)


def test_pipeline_waveguide_analog():
    params = lab_source(gamma_eff=WAVEGUIDE_GAMMA)
    rep = run_pipeline(params, default_plan(3.0), 5)
    assert abs(rep.gamma.value - 2.0) < 3 * rep.gamma.sigma


def test_car_falls_with_power_when_pairs_dominate():
    params = lab_source(leak=0.0, dark=1.0)
    rep = run_pipeline(params, default_plan(3.0), 8)
    for analysis in rep.analyses.values():
        rows = analysis.rows
        cars = [r["car"] for r in rows]
        assert all(c is not None for c in cars)
        # decreasing in trend, and each step down is not contradicted beyond 3 sigma
        assert cars[0] > cars[-1]
        for a, b in zip(rows, rows[1:]):
            assert b["car"] < a["car"] + 3 * np.hypot(a["sigma_car"], b["sigma_car"])
        assert analysis.max_car["power_mw"] == rows[0]["power_mw"]


def test_linear_coefficient_tracks_leakage():
    plan = default_plan(3.0)
    for config in IoConfig:
        ratios = []
        for leak in (2e4, 4e4, 8e4):
            params = lab_source(leak=leak)
            rep = run_pipeline(params, plan, 31)
            q = quadratic_coefficients(params, config)
            fits = rep.fits[config]
            ratios += [fits.s.b / q["s"][1], fits.i.b / q["i"][1]]
        np.testing.assert_allclose(ratios, 1.0, atol=0.10)


def test_single_configuration_analysis_warns():
    params = lab_source()
    plan = small_plan(configs=(IoConfig.A,))
    rep = run_pipeline(params, plan, 1)
    assert rep.gamma.method.value == "single_config"
    assert SINGLE_CONFIG_WARNING in rep.warnings


def test_raw_coincidence_mode_runs():
    params = lab_source()
    opts = AnalysisOptions(coincidence_fit=CoincidenceFit.RAW)
    rep = run_pipeline(params, default_plan(3.0), 2, options=opts)
    assert rep.provenance["analysis"]["coincidence_fit"] == "raw"
    assert rep.gamma.value > 0


def test_regime_error_names_stage_and_point():
    params = lab_source(gamma_eff=1e4)
    with pytest.raises(RegimeError, match=r"simulate: config A, power .* repeat 1"):
        run_pipeline(params, small_plan(), 0)


def test_insufficient_repeats_in_analysis():
    params = lab_source()
    with pytest.raises(InsufficientRepeatsError, match="rates"):
        run_pipeline(params, small_plan(repeats=1), 0)


def test_analyze_requires_datasets():
    with pytest.raises(DomainError):
        analyze_datasets({}, 0.01)
