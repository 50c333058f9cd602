import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisectl.errors import CoverageError, DomainError, ValidationError
from noisectl.numerics import UNBOUNDED, OdeGrid, solve_ode
from noisectl.schedules import (AcsParams, Constant, Cosine, Linear, Sigmoid, SigmoidApprox, VeExponential,
                                make_acs, make_catalog, make_custom, make_g_circle, map_score,
                                marginal_coeffs, ou, reparameterize, schedule_from_json,
                                score_from_noise_predictor, snr, snr_time_map)
from noisectl.targets import GaussianTarget, gaussian_score
from conftest import bisect_root


def test_ou_marginals():
    m = marginal_coeffs(ou(2.0), 1.0)
    assert m.alpha == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert m.sigma2 == pytest.approx(1.0 - math.exp(-2.0), rel=1e-15)
    assert snr(ou(2.0), 1.0) == pytest.approx(math.exp(-2) / (1 - math.exp(-2)), rel=1e-14)
    assert snr(ou(2.0), 0.0) is UNBOUNDED


@pytest.mark.parametrize("sched", [ou(1.0), make_catalog(Linear()), make_catalog(Cosine()),
                                   make_catalog(Sigmoid()), make_acs(AcsParams(0.5, 0.1, 3.0, 0.2))])
def test_time_zero_and_monotone_snr(sched):
    m = sched.marginal(0.0)
    assert (m.alpha, m.sigma2) == (1.0, 0.0)
    ts = np.linspace(0.0, sched.T, 100)[1:]
    s = np.array([float(sched.snr(t)) for t in ts])
    assert np.all(np.diff(s) < 0)


def test_ve_custom_table_marginal():
    sched = make_custom(lambda t: np.zeros_like(np.asarray(t, float)), np.exp, 1.0)
    m = sched.marginal(1.0)
    assert m.alpha == 1.0
    assert m.sigma2 == pytest.approx(math.e - 1.0, rel=1e-12)


def test_table_marginals_match_rk4_route():
    """Variance from the cell table against a separately integrated variance ODE."""
    f = lambda t: 0.3 + np.sin(3 * np.asarray(t, float)) ** 2
    g = lambda t: 1.0 + np.asarray(t, float) ** 2
    sched = make_custom(f, g, 2.0)
    grid = OdeGrid.uniform(0.0, 2.0, 21)
    y = solve_ode(lambda t, y: np.array([-f(t) * y[0], -2 * f(t) * y[1] + g(t)]), [1.0, 0.0], grid,
                  max_step=1e-3)
    for t, (a, s2) in zip(grid.points, y):
        m = sched.marginal(t)
        assert m.alpha == pytest.approx(a, rel=1e-10)
        assert m.sigma2 == pytest.approx(s2, rel=1e-10, abs=1e-14)


def test_linear_endpoints():
    for T in (1.0, 4.0):
        s = make_catalog(Linear(), T)
        assert s.f(0.0) == pytest.approx(0.05 / T)
        assert s.f(T) == pytest.approx(10.0 / T)
        assert np.allclose(s.g(np.linspace(0, T, 7)), 2 * s.f(np.linspace(0, T, 7)), rtol=0, atol=0)


def test_linear_vp_closed_marginal():
    s = make_catalog(Linear())
    for t in (0.2, 0.7, 1.0):
        F = 0.5 * (0.1 * t + 0.5 * 19.9 * t * t)
        m = s.marginal(t)
        assert m.alpha == pytest.approx(math.exp(-F), rel=1e-14)
        assert m.sigma2 == pytest.approx(1 - math.exp(-2 * F), rel=1e-14)


def test_cosine_formula():
    s0 = 0.008
    for T in (1.0, 2.0):
        sched = make_catalog(Cosine(s=s0), T)
        for t in np.linspace(0, 0.85 * T, 9):
            ref = math.pi / (2 * T * (1 + s0)) * math.tan((t / T + s0) / (1 + s0) * math.pi / 2)
            assert sched.f(t) == pytest.approx(ref, rel=1e-12)


def test_sigmoid_schedules_are_vp():
    for p in (Sigmoid(), SigmoidApprox()):
        s = make_catalog(p)
        ts = np.linspace(0, 1, 50)
        np.testing.assert_allclose(s.g(ts), 2 * s.f(ts), rtol=1e-15)
        m = s.marginal(1.0)
        assert m.alpha ** 2 + m.sigma2 == pytest.approx(1.0, rel=1e-12)


def test_ve_exponential_degenerate_is_constant():
    s = make_catalog(VeExponential(g0=1.0, lam=0.0))
    ts = np.linspace(0, 1, 11)
    assert np.all(s.g(ts) == 1.0) and np.all(s.f(ts) == 0.0)
    assert s.marginal(0.5).sigma2 == pytest.approx(0.5, rel=1e-14)


def test_constant_schedule_closed_form():
    s = make_catalog(Constant(0.7, 1.3))
    t = 0.9
    m = s.marginal(t)
    assert m.alpha == pytest.approx(math.exp(-0.7 * t), rel=1e-15)
    assert m.sigma2 == pytest.approx(1.3 * (1 - math.exp(-1.4 * t)) / 1.4, rel=1e-14)


def test_acs_exponential_branch():
    s = make_acs(AcsParams(0.0, 0.0, 2.0, 0.5))
    ts = np.linspace(0, 1, 21)
    np.testing.assert_allclose(s.g(ts), 0.5 * np.exp(2.0 * ts), rtol=1e-14)


def test_acs_rational_branch():
    theta, lam, g0 = 0.8, 2.0, 0.3
    s = make_acs(AcsParams(theta, lam / 2, lam, g0))
    assert s.branch == "rational"
    ts = np.linspace(0, 1, 21)
    g = g0 / (1 + 2 * theta * g0 * ts)
    np.testing.assert_allclose(s.g(ts), g, rtol=1e-15)
    np.testing.assert_allclose(s.f(ts), theta * g + lam / 2, rtol=1e-15)


def test_acs_sigmoid_start():
    s = make_acs(AcsParams(0.5, 0.0, 4.0, 0.1))
    assert s.g(0.0) == pytest.approx(0.1, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 3.0), st.floats(0.1, 10.0), st.floats(0.01, 2.0))
def test_acs_cumulative_drift_matches_quadrature(theta, omega, lam, g0):
    from noisectl.numerics import integrate
    s = make_acs(AcsParams(theta, omega, lam, g0))
    assert float(s.cumulative_drift(1.0)) == pytest.approx(integrate(s.f, 0.0, 1.0), rel=1e-9)
    assert s.integral_g(1.0) == pytest.approx(integrate(s.g, 0.0, 1.0), rel=1e-9)


@pytest.mark.parametrize("bad", [(-1.0, 0.0, 1.0, 1.0), (0.1, -0.5, 1.0, 1.0), (0.1, 0.0, 0.0, 1.0),
                                 (0.1, 0.0, 1.0, 0.0), (0.1, math.nan, 1.0, 1.0)])
def test_acs_params_validation(bad):
    with pytest.raises(ValidationError):
        AcsParams(*bad)


def test_g_circle_reductions():
    zero = lambda t: np.zeros_like(np.asarray(t, float))
    ts = np.linspace(0, 1, 11)
    s = make_g_circle(zero, 1.5, 0.4)
    np.testing.assert_allclose(s.g(ts), 0.4 * np.exp(1.5 * ts), rtol=1e-13)
    s = make_g_circle(lambda t: np.full_like(np.asarray(t, float), 0.75), 1.5, 0.4)
    np.testing.assert_allclose(s.g(ts), 0.4, rtol=1e-13)


def test_g_circle_matches_acs():
    p = AcsParams(0.4, 0.3, 2.5, 0.7)
    acs = make_acs(p)
    circ = make_g_circle(acs.f, p.lam, p.g0)
    ts = np.linspace(0, 1, 100)
    np.testing.assert_allclose(circ.g(ts), acs.g(ts), rtol=1e-8)


def test_reparameterize_identity_and_halving():
    base = make_catalog(Linear())
    ident = reparameterize(base, lambda u: u, lambda u: np.ones_like(np.asarray(u, float)), 1.0)
    ts = np.linspace(0, 1, 17)
    np.testing.assert_allclose(ident.f(ts), base.f(ts), rtol=1e-15)
    half = reparameterize(base, lambda u: 2 * np.asarray(u, float),
                          lambda u: np.full_like(np.asarray(u, float), 2.0), 0.5)
    tm = np.linspace(0, 0.5, 17)
    np.testing.assert_allclose(half.f(tm), 2 * base.f(2 * tm), rtol=1e-14)
    for t in tm[1:]:
        assert float(half.snr(t)) == pytest.approx(float(base.snr(2 * t)), rel=1e-10)


def test_reparameterize_rejects_bad_maps():
    base = ou(1.0)
    with pytest.raises(ValidationError):
        reparameterize(base, lambda u: -np.asarray(u, float), lambda u: -np.ones_like(np.asarray(u, float)), 1.0)


def test_snr_time_map_cases():
    a = ou(1.0)
    assert snr_time_map(a, a, 0.3) == 0.3
    assert snr_time_map(ou(2.0), ou(1.0), 0.5) == pytest.approx(0.5, rel=1e-12)
    ve = make_catalog(VeExponential(g0=1.0, lam=2.0), 3.0)
    t = 0.5
    target = math.exp(-2 * t) / (1 - math.exp(-2 * t))
    ref = bisect_root(lambda tau: 2.0 / math.expm1(2.0 * tau) - target, 1e-9, 3.0)
    assert snr_time_map(ve, ou(1.0), t) == pytest.approx(ref, rel=1e-10)


def test_snr_time_map_coverage():
    with pytest.raises(CoverageError) as info:
        snr_time_map(ou(0.5), ou(2.0), 1.5)
    assert info.value.snr_range[0] == pytest.approx(float(ou(0.5).snr(0.5)))


def test_map_score_gaussian():
    target = GaussianTarget([0.3, -0.2], [0.5, 2.0])
    a = make_catalog(Linear(), 1.0)
    b = ou(2.0)

    def score_a(tau, x):
        m = a.marginal(tau)
        return gaussian_score(target, m.alpha, m.sigma2, x)

    x = np.array([0.4, 1.1])
    for t in (0.3, 1.0, 1.7):
        m = b.marginal(t)
        ref = gaussian_score(target, m.alpha, m.sigma2, x)
        np.testing.assert_allclose(map_score(score_a, a, b, t, x), ref, rtol=1e-10, atol=1e-12)
        same = map_score(lambda tau, y: gaussian_score(target, *_ab(b, tau), y), b, b, t, x)
        np.testing.assert_allclose(same, ref, rtol=1e-15)
    with pytest.raises(DomainError):
        map_score(score_a, a, b, 0.0, x)


def _ab(s, t):
    m = s.marginal(t)
    return m.alpha, m.sigma2


def test_noise_predictor_conversion():
    np.testing.assert_allclose(score_from_noise_predictor([0.5, -1.0], 0.25), [-1.0, 2.0])
    with pytest.raises(DomainError):
        score_from_noise_predictor([1.0], 0.0)


@pytest.mark.parametrize("sched", [ou(2.0), make_catalog(Linear()), make_catalog(Cosine(s=0.01)),
                                   make_catalog(Sigmoid()), make_catalog(SigmoidApprox()),
                                   make_catalog(VeExponential(2.0, 1.0)), make_catalog(Constant(1.0, 1.0)),
                                   make_acs(AcsParams(0.3, 0.2, 4.0, 0.5), 1.5)])
def test_json_round_trip(sched):
    back = schedule_from_json(json.dumps(sched.to_dict()))
    ts = np.linspace(0, sched.T, 9)
    assert back.kind == sched.kind and back.T == sched.T
    assert np.array_equal(back.f(ts), sched.f(ts)) and np.array_equal(back.g(ts), sched.g(ts))


def test_json_errors():
    with pytest.raises(ValidationError, match="schedule.kind"):
        schedule_from_json({"kind": "nope"})
    with pytest.raises(ValidationError):
        schedule_from_json("{not json")
    with pytest.raises(ValidationError):
        schedule_from_json({"kind": "linear", "params": {"bogus": 1}})


def test_validation_errors():
    with pytest.raises(ValidationError):
        ou(0.0)
    with pytest.raises(ValidationError):
        make_custom(lambda t: -np.ones_like(np.asarray(t, float)), lambda t: np.ones_like(np.asarray(t, float)), 1.0)
    with pytest.raises(DomainError):
        ou(1.0).marginal(1.5)
