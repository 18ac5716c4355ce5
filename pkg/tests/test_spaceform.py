import math

import pytest
from hypothesis import given, strategies as st

from frozen_oracles import FROZEN
from riccati_lab import spaceform as sf


def test_sn_examples():
    assert sf.sn(0.0, 2.5) == 2.5
    assert sf.sn(1.0, math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert sf.sn(-1.0, 1.0) == pytest.approx(FROZEN["sn(-1,1)"], abs=1e-15)


def test_sn_ratio_examples():
    assert sf.sn_ratio(0.0, 2.0) == 0.5
    assert abs(sf.sn_ratio(1.0, math.pi / 2)) < 1e-15
    h = 1e-5
    d = (sf.sn_ratio(1.0, 1 + h) - sf.sn_ratio(1.0, 1 - h)) / (2 * h)
    assert abs(d - (-1 - sf.sn_ratio(1.0, 1.0) ** 2)) <= 1e-6


@pytest.mark.parametrize("k,t", [(1.0, 0.0), (1.0, math.pi), (1.0, 4.0), (0.0, -1.0), (4.0, math.pi / 2)])
def test_sn_ratio_domain(k, t):
    with pytest.raises(sf.DomainError):
        sf.sn_ratio(k, t)


def test_domain_end():
    assert sf.domain_end(4.0) == math.pi / 2
    assert sf.domain_end(0.0) == math.inf
    assert sf.domain_end(-1.0) == math.inf


def test_model_mean_curvature():
    assert sf.model_mean_curvature(3, 0.0, 1.0) == 2.0
    assert abs(sf.model_mean_curvature(3, 1.0, math.pi / 2)) < 1e-15
    assert sf.model_mean_curvature(3, 1.0, 3.0) == pytest.approx(FROZEN["model_mean_curvature(3,1,3.0)"], abs=1e-11)
    with pytest.raises(sf.DomainError):
        sf.model_mean_curvature(3, 1.0, 3.2)


def test_model_ball_volume_examples():
    assert sf.model_ball_volume(2, 0.0, 1.0) == pytest.approx(FROZEN["ball(2,0,1)"], rel=1e-14)
    assert sf.model_ball_volume(2, 1.0, math.pi) == pytest.approx(FROZEN["ball(2,1,pi)"], rel=1e-13)
    assert sf.model_ball_volume(3, 0.0, 1.0) == pytest.approx(FROZEN["ball(3,0,1)"], rel=1e-14)
    with pytest.raises(sf.DomainError):
        sf.model_ball_volume(2, 1.0, 3.2)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [-2.0, -1.0, -1e-5, 0.0, 1e-5, 0.3, 1.0, 4.0])
def test_model_ball_volume_against_series(n, k):
    from riccati_lab.oracles import series_sn_power_integral, unit_sphere_measure

    for r in (0.05, 0.5, min(1.5, 0.9 * sf.domain_end(k))):
        ref = unit_sphere_measure(n) * series_sn_power_integral(k, n - 1, r)
        assert sf.model_ball_volume(n, k, r) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("k", [-1.0, 0.0, 1.0, 4.0])
def test_sn_solves_its_ode(k):
    h = 1e-4
    end = min(sf.domain_end(k), 5.0)
    for i in range(1, 40):
        t = end * i / 40
        dd = (sf.sn(k, t + h) - 2 * sf.sn(k, t) + sf.sn(k, t - h)) / h**2
        # half-ulp rounding in each of the three samples, amplified by 4/h^2
        floor = 4 * math.ulp(max(abs(sf.sn(k, t + h)), abs(sf.sn(k, t)))) / h**2
        assert abs(dd + k * sf.sn(k, t)) <= 1e-8 + floor
    assert sf.sn(k, 0.0) == 0.0
    assert sf.sn_prime(k, 0.0) == 1.0


@pytest.mark.parametrize("k", [-1.0, 1.0, 4.0])
def test_sn_ratio_minus_reciprocal_is_order_t(k):
    cs = [abs(sf.sn_ratio(k, 10.0**-m) - 10.0**m) / 10.0**-m for m in range(2, 7)]
    # the limiting constant is |k|/3
    assert max(cs) <= abs(k) / 3 * 1.01 + 1e-6


def test_taylor_branch_is_continuous():
    t = 1.0
    k_switch = sf.TAYLOR_SWITCH / t**2
    for k in (k_switch * 0.999, k_switch * 1.001, -k_switch * 0.999, -k_switch * 1.001):
        ref = t - k * t**3 / 6 + k * k * t**5 / 120
        assert sf.sn(k, t) == pytest.approx(ref, rel=1e-15, abs=0)


@given(st.floats(0.01, 25.0), st.floats(0.0, 1.0))
def test_scaling(k, frac):
    t = frac * sf.domain_end(k)
    assert abs(sf.sn(k, t) - sf.sn(1.0, math.sqrt(k) * t) / math.sqrt(k)) <= 1e-12


@given(st.sampled_from([2, 3, 4]), st.floats(-3.0, 3.0), st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_model_ball_volume_increasing(n, k, a, b):
    end = min(sf.domain_end(k), 4.0)
    lo, hi = sorted((a * end, b * end))
    if hi - lo < 1e-6:
        return
    assert sf.model_ball_volume(n, k, lo) < sf.model_ball_volume(n, k, hi)


@given(st.floats(-5.0, 5.0), st.floats(0.001, 0.999))
def test_sn_ratio_satisfies_riccati(k, frac):
    t = frac * min(sf.domain_end(k), 3.0)
    h = 1e-6 * max(t, 1e-3)
    d = (sf.sn_ratio(k, t + h) - sf.sn_ratio(k, t - h)) / (2 * h)
    rho = sf.sn_ratio(k, t)
    assert abs(d + rho**2 + k) <= 1e-4 * max(1.0, rho**2)


def test_sphere_area():
    assert sf.sphere_area(2) == pytest.approx(2 * math.pi)
    assert sf.sphere_area(3) == pytest.approx(4 * math.pi)
    assert sf.sphere_area(4) == pytest.approx(2 * math.pi**2)
