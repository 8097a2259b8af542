"""Closed-form gap-tail model: frozen values and structural properties."""

import numpy as np
import pytest

from sidelink.tailmodel import (
    TailModelParams,
    compare_tail,
    expected_reselection_spacing,
    fit_log_slope,
    p_unlock,
    q_interleaved,
    q_k,
    slippage_gamma,
    slippage_prob,
    tail_no_slippage,
    tail_with_slippage,
    unlock_series,
)

REL = 1e-12


def test_q_k_frozen_value():
    # 2*10*0.2 / ((15+5) * (10-5)) = 4/100
    assert q_k(10, 5, 15, 0.2) == pytest.approx(0.04, rel=REL)


def test_q_k_zero_until_counter_can_expire():
    assert q_k(5, 5, 15, 0.2) == 0.0
    assert np.all(q_k(np.arange(0, 6), 5, 15, 0.2) == 0.0)


def test_q_k_asymptote():
    # tends to 2p/(sigma+rho) from above
    assert q_k(1e15, 5, 15, 0.2) == pytest.approx(0.02, rel=1e-9)
    ks = np.array([10, 100, 1000, 10000])
    vals = q_k(ks, 5, 15, 0.2)
    assert np.all(np.diff(vals) < 0)
    assert np.all(vals > 0.02)


def test_q_k_clamped_to_one():
    # just past rho the raw expression blows up; the clamp caps it
    assert q_k(5.1, 5, 15, 0.2) == 1.0


def test_expected_spacing():
    # (rho + (sigma-rho)/2) / p = 10 / 0.2
    assert expected_reselection_spacing(5, 15, 0.2) == pytest.approx(50.0, rel=REL)


def test_q_interleaved_frozen_values():
    assert q_interleaved(0.04, 0.0) == pytest.approx(0.04, rel=REL)
    assert q_interleaved(0.5, 0.5) == pytest.approx(0.75, rel=REL)
    for x in (0.0, 0.3, 1.0):
        assert q_interleaved(1.0, x) == pytest.approx(1.0, rel=REL)


def test_p_unlock_frozen_values():
    assert p_unlock(0.0, 0.95) == 0.0
    assert p_unlock(1.0, 0.9) == pytest.approx(0.9, rel=REL)
    # (1-q) q p_f + (1-q) q + q^2 p_f at q=0.04, p_f=0.95
    expect = 0.96 * 0.04 * 0.95 + 0.96 * 0.04 + 0.04 * 0.04 * 0.95
    assert p_unlock(0.04, 0.95) == pytest.approx(expect, rel=REL)
    assert expect == pytest.approx(0.0764, rel=1e-12)


def test_unlock_series_against_scalar_recomputation():
    params = TailModelParams(k_max=32)
    series = unlock_series(params)
    for i, k in enumerate(range(1, 33)):
        q = q_k(k, 5, 15, 0.2)
        assert series[i] == pytest.approx(p_unlock(q, 0.95), rel=REL)


def test_tail_no_slippage_is_survival_product():
    params = TailModelParams(k_max=40)
    curve = tail_no_slippage(params)
    assert curve.exceed[0] == 1.0
    # brute-force product, scalar loop
    prod = 1.0
    for k in range(1, 41):
        q = q_k(k, params.rho_s, params.sigma_s, params.reselect_prob)
        prod *= 1.0 - p_unlock(q, params.p_f)
        assert curve.exceed[k] == pytest.approx(prod, rel=1e-10)
    # flat at 1 while the counter cannot expire
    assert np.all(curve.exceed[: params.rho_s + 1] == 1.0)
    assert curve.exceed[params.rho_s + 1] < 1.0


def test_tail_no_slippage_constant_q_is_geometric():
    # rho=1, sigma huge, p tuned so q_k is essentially constant at large k:
    # easier to freeze with p_f=1 and a hand-built comparison instead
    params = TailModelParams(rho_s=5, sigma_s=15, reselect_prob=0.2,
                             p_f=1.0, k_max=20)
    curve = tail_no_slippage(params)
    prod = np.cumprod([1.0 - p_unlock(q_k(k, 5, 15, 0.2), 1.0)
                       for k in range(1, 21)])
    np.testing.assert_allclose(curve.exceed[1:], prod, rtol=1e-12)


def test_oneshot_curve_strictly_below_baseline():
    base = tail_no_slippage(TailModelParams(k_max=30))
    fast = tail_no_slippage(TailModelParams(oneshot=(2, 6), k_max=30))
    # identical until the one-shot counter can expire (k <= 2), then strictly lower
    np.testing.assert_array_equal(fast.exceed[:3], base.exceed[:3])
    assert np.all(fast.exceed[3:] < base.exceed[3:])


def test_time_axis():
    curve = tail_no_slippage(TailModelParams(interval_ms=310.0, k_max=10))
    np.testing.assert_allclose(curve.t_ms, np.arange(11) * 310.0)


def test_validate_rejects_bad_params():
    with pytest.raises(ValueError):
        TailModelParams(rho_s=15, sigma_s=5).validate()
    with pytest.raises(ValueError):
        TailModelParams(reselect_prob=0.0).validate()
    with pytest.raises(ValueError):
        TailModelParams(oneshot=(6, 2)).validate()
    with pytest.raises(ValueError):
        TailModelParams(interval_ms=0.0).validate()


# -- phase drift ------------------------------------------------------------

def test_gamma_frozen_value():
    assert slippage_gamma(4, 100) == pytest.approx(4.0 / 96.0, rel=REL)


def test_slippage_zero_when_interval_is_cycle_multiple():
    for interval in (100.0, 300.0, 600.0):
        params = TailModelParams(interval_ms=interval)
        assert np.all(slippage_prob(np.arange(1, 65), params) == 0.0)


def test_slippage_piecewise_branches_at_310ms():
    # psi = 10, t1 = 4, span = 96, gamma = 1/24: early branch up to k=6,
    # middle branch up to k=14, gamma^2 beyond
    params = TailModelParams(interval_ms=310.0)
    k = np.arange(1, 21)
    q = slippage_prob(k, params)
    gamma = 4.0 / 96.0
    for i, kk in enumerate(k):
        if kk <= 6:
            phi = 96.0 - kk * 10.0
            expect = (10.0 / 96.0) * (phi / 96.0 + (phi + 4.0) / 96.0)
        elif kk <= 14:
            expect = 2.0 * gamma ** 2 + gamma * 6.0 / 96.0
        else:
            expect = gamma ** 2
        assert q[i] == pytest.approx(expect, rel=REL), f"k={kk}"
    # frozen spot checks
    assert q[0] == pytest.approx((10 / 96) * (86 / 96 + 90 / 96), rel=REL)
    assert q[19] == pytest.approx((1 / 24) ** 2, rel=REL)


def test_slippage_curve_matches_baseline_when_psi_zero():
    params = TailModelParams(interval_ms=300.0)
    np.testing.assert_array_equal(tail_with_slippage(params).exceed,
                                  tail_no_slippage(params).exceed)


def test_slippage_scales_by_cumulative_drift():
    params = TailModelParams(interval_ms=310.0, k_max=20)
    base = tail_no_slippage(params)
    with_drift = tail_with_slippage(params)
    k = np.arange(1, 21)
    factor = 1.0 - np.cumsum(slippage_prob(k, params))
    np.testing.assert_allclose(with_drift.exceed[1:], base.exceed[1:] * factor,
                               rtol=1e-12)
    # hand value at k=1: factor = 1 - (10/96)(86/96 + 90/96)
    assert with_drift.exceed[1] == pytest.approx(
        1.0 - (10 / 96) * (176 / 96), rel=REL)


def test_slippage_floors_at_zero_with_warning():
    # interval 110 ms drifts fast; by k ~ 89 the cumulative drift passes one
    params = TailModelParams(interval_ms=110.0, k_max=200)
    with pytest.warns(RuntimeWarning):
        curve = tail_with_slippage(params)
    assert curve.exceed.min() == 0.0
    assert np.all(curve.exceed >= 0.0)


def test_curves_monotone_and_bounded_on_parameter_grid():
    rng = np.random.default_rng(7)
    for _ in range(50):
        oneshot = None if rng.random() < 0.5 else (2, int(rng.integers(3, 9)))
        params = TailModelParams(
            reselect_prob=float(rng.choice([0.2, 0.4, 0.6, 0.8, 1.0])),
            oneshot=oneshot,
            p_f=float(rng.uniform(0.5, 1.0)),
            interval_ms=float(rng.integers(100, 601)),
            k_max=64)
        with np.testing.suppress_warnings() as sup:
            sup.filter(RuntimeWarning)
            for curve in (tail_no_slippage(params), tail_with_slippage(params)):
                assert np.all(np.diff(curve.exceed) <= 1e-15)
                assert np.all((curve.exceed >= 0) & (curve.exceed <= 1))


# -- slope fitting and comparison -------------------------------------------

def test_fit_log_slope_exact_exponential():
    t = np.arange(0, 12001, dtype=float)
    tau_s = 2.0
    v = np.exp(-(t / 1000.0) / tau_s)
    assert fit_log_slope(t, v) == pytest.approx(-0.5, abs=1e-9)


def test_fit_log_slope_flat_curve():
    t = np.arange(0, 12001, dtype=float)
    assert fit_log_slope(t, np.full_like(t, 0.3)) == pytest.approx(0.0, abs=1e-12)


def test_fit_log_slope_needs_support():
    t = np.arange(0, 12001, dtype=float)
    v = np.zeros_like(t)
    v[:100] = 1.0
    with pytest.raises(ValueError):
        fit_log_slope(t, v)


def test_compare_tail_self_consistency():
    params = TailModelParams(interval_ms=250.0, k_max=64)
    curve = tail_no_slippage(params)
    # sample the model itself onto the 1 ms grid (log-linear, as compare does)
    t = np.arange(12001, dtype=float)
    pos = curve.exceed > 0
    sim = np.exp(np.interp(t, curve.t_ms[pos], np.log(curve.exceed[pos])))
    res = compare_tail(curve, sim)
    # slopes get fitted on different grids (sparse model axis vs dense ms
    # axis), so a small discretisation residual remains in the ratio
    assert res.slope_ratio == pytest.approx(1.0, abs=5e-3)
    assert res.rms_log_gap == pytest.approx(0.0, abs=1e-9)


def test_compare_tail_anchor_absorbs_scaling():
    params = TailModelParams(interval_ms=250.0, k_max=64)
    curve = tail_no_slippage(params)
    t = np.arange(12001, dtype=float)
    pos = curve.exceed > 0
    sim = np.exp(np.interp(t, curve.t_ms[pos], np.log(curve.exceed[pos])))
    res_scaled = compare_tail(curve, sim * 0.125)
    assert res_scaled.slope_ratio == pytest.approx(1.0, abs=5e-3)
    assert res_scaled.rms_log_gap == pytest.approx(0.0, abs=1e-9)
