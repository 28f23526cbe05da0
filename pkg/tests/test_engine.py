import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as spi
from scipy.optimize import bisect, minimize_scalar

from qiengine import engine
from qiengine.engine import (
    K_B,
    DegenerateTemperature,
    DegenerateThreshold,
    EngineParams,
    IdentityViolation,
)
from qiengine.numerics import InvalidInput, binary_entropy

mpmath.mp.dps = 30

REF = EngineParams.relative(1.0, 300.0, 300.0)
COLD = EngineParams.relative(1.0, 300.0, 100.0)

params_st = st.builds(
    EngineParams.relative,
    st.floats(0.1, 4.0),
    st.floats(50.0, 600.0),
    st.floats(20.0, 600.0),
)


def mp_joint(params, tau):
    """Independent (mpmath) joint densities for the two system branches."""
    a = 1 / (1 + mpmath.exp(-mpmath.mpf(params.delta_E) / (K_B * params.T_S)))
    b = 1 - a
    s2 = mpmath.mpf(K_B * params.T_M)
    norm = 1 / mpmath.sqrt(2 * mpmath.pi * s2)
    P0 = lambda p: a * norm * mpmath.exp(-p * p / (2 * s2))  # noqa: E731
    P1 = lambda p: b * norm * mpmath.exp(-(p + tau) ** 2 / (2 * s2))  # noqa: E731
    return a, b, P0, P1


def mp_information(params, tau):
    a, b, P0, P1 = mp_joint(params, tau)

    def f(p):
        q0, q1 = P0(p), P1(p)
        Q = q0 + q1
        return q0 * mpmath.log(q0 / (Q * a)) + q1 * mpmath.log(q1 / (Q * b))

    w = 12 * math.sqrt(K_B * params.T_M)
    return float(mpmath.quad(f, [-tau - w, -tau, -tau / 2, 0, w]))


def mp_ergotropy(params, tau):
    a, b, P0, P1 = mp_joint(params, tau)
    f = lambda p: params.delta_E * max(P1(p) - P0(p), 0)  # noqa: E731
    pp = engine.threshold_p_prime(params, tau)
    w = 12 * math.sqrt(K_B * params.T_M)
    return float(mpmath.quad(f, [-tau - w, min(-tau, pp), pp]))


# ------------------------------------------------------------ parameters


@pytest.mark.parametrize("kw", [dict(delta_E=0, T_S=1, T_M=1), dict(delta_E=1, T_S=-5, T_M=1), dict(delta_E=1, T_S=1, T_M=math.nan)])
def test_params_validation(kw):
    with pytest.raises(InvalidInput):
        EngineParams(**kw)


def test_invalid_tau():
    with pytest.raises(InvalidInput):
        engine.measurement_cost(REF, -1.0)


def test_thermal_populations():
    tls = engine.thermal_populations(REF)
    assert tls.a == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-15)
    assert tls.a == pytest.approx(0.7310585786300049, rel=1e-15)
    assert tls.a + tls.b == 1.0
    hot = engine.thermal_populations(EngineParams.relative(1e-6, 300, 300))
    assert hot.a == pytest.approx(0.5, abs=1e-6)
    cold = engine.thermal_populations(EngineParams.relative(800, 300, 300))
    assert cold.b == 0.0 or cold.b < 1e-300
    assert cold.log_b == pytest.approx(-800, rel=1e-12)


# ------------------------------------------------------------ distribution


@pytest.mark.parametrize("tau", [0.5, 5.0, 10.0])
def test_marginals_normalized(tau):
    tls = engine.thermal_populations(REF)
    for attr, w in (("P0_joint", tls.a), ("P1_joint", tls.b)):
        f = lambda p: getattr(engine.outcome_distribution(REF, tau, p), attr)  # noqa: E731
        val, _ = spi.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
        assert val == pytest.approx(w, abs=1e-9)


def test_tau_zero_conditionals_are_priors():
    tls = engine.thermal_populations(REF)
    d = engine.outcome_distribution(REF, 0.0, np.linspace(-20, 20, 41))
    np.testing.assert_allclose(d.P0_cond, tls.a, rtol=1e-15)
    np.testing.assert_allclose(d.P1_cond, tls.b, rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(params_st, st.floats(0.0, 100.0), st.floats(-300.0, 300.0))
def test_conditionals_sum_to_one(params, tau, p):
    d = engine.outcome_distribution(params, tau, p)
    assert 0.0 <= d.P0_cond <= 1.0
    assert d.P0_cond + d.P1_cond == pytest.approx(1.0, abs=1e-15)


def test_conditionals_deep_tail():
    # far on the excited side both densities underflow; the log route still resolves it
    d = engine.outcome_distribution(REF, 100.0, -200.0)
    assert d.P0_joint == 0.0
    assert d.P1_cond == 1.0


@pytest.mark.parametrize("tau", [0.3, 2.0, 10.0, 50.0])
def test_p_prime_matches_root(tau):
    g = lambda p: engine.outcome_distribution(REF, tau, p).P0_cond - 0.5  # noqa: E731
    root = bisect(g, -1e4, 1e4, xtol=1e-13, rtol=1e-15)
    assert engine.threshold_p_prime(REF, tau) == pytest.approx(root, rel=1e-9, abs=1e-9)


def test_p_prime_degenerate():
    with pytest.raises(DegenerateThreshold):
        engine.threshold_p_prime(REF, 0.0)


def test_p_prime_recedes_as_tau_shrinks():
    pps = [engine.threshold_p_prime(REF, t) for t in (10.0, 1.0, 0.1)]
    assert pps[0] > pps[1] > pps[2]


# ------------------------------------------------------------ information


@pytest.mark.parametrize("params,tau", [(REF, 1.0), (REF, 10.0), (COLD, 3.0), (EngineParams.relative(2, 300, 200), 7.0)])
def test_information_vs_mpmath(params, tau):
    assert engine.mutual_information(params, tau) == pytest.approx(mp_information(params, tau), rel=1e-9, abs=1e-13)


def test_information_zero_and_limit():
    assert engine.mutual_information(REF, 0.0) == 0.0
    tls = engine.thermal_populations(REF)
    h = -(tls.a * math.log(tls.a) + tls.b * math.log(tls.b))
    assert engine.information_limit(REF) == pytest.approx(h, rel=1e-15)
    assert engine.mutual_information(REF, 200.0) == pytest.approx(h, abs=1e-8)


def test_information_small_tau_expansion():
    tls = engine.thermal_populations(REF)
    tau = 1e-3
    approx = tls.a * tls.b * tau**2 / (2 * REF.sigma2)
    assert engine.mutual_information(REF, tau) == pytest.approx(approx, rel=1e-3)


@settings(max_examples=15, deadline=None)
@given(params_st)
def test_information_monotone_and_bounded(params):
    taus = np.geomspace(0.05, 100, 15)
    vals = [engine.mutual_information(params, t) for t in taus]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert 0 <= min(vals) and max(vals) <= engine.information_limit(params) + 1e-12


def test_measurement_cost():
    b = engine.thermal_populations(REF).b
    assert engine.measurement_cost(REF, 10.0) == pytest.approx(50 * b, rel=1e-15)
    assert engine.measurement_cost(REF, 10.0) == pytest.approx(13.4470710685, rel=1e-10)
    assert engine.measurement_cost(REF, 0.0) == 0.0


# ------------------------------------------------------------ ergotropy


@pytest.mark.parametrize("params,tau", [(REF, 1.0), (REF, 10.0), (COLD, 4.0), (EngineParams.relative(0.5, 300, 300), 20.0)])
def test_ergotropy_vs_mpmath(params, tau):
    assert engine.ergotropy_avg(params, tau) == pytest.approx(mp_ergotropy(params, tau), rel=1e-9, abs=1e-15)


def test_ergotropy_outcome_at_crossing_is_zero():
    pp = engine.threshold_p_prime(REF, 10.0)
    assert engine.ergotropy_outcome(REF, 10.0, pp) == pytest.approx(0.0, abs=1e-12)
    assert engine.ergotropy_outcome(REF, 10.0, pp + 1.0) == 0.0
    assert engine.ergotropy_outcome(REF, 10.0, pp - 5.0) > 0.0


def test_ergotropy_limits():
    assert engine.ergotropy_avg(REF, 0.0) == 0.0
    b = engine.thermal_populations(REF).b
    assert engine.ergotropy_limit(REF) == pytest.approx(b * REF.delta_E)
    assert engine.ergotropy_avg(REF, 200.0) == pytest.approx(b * REF.delta_E, rel=1e-6)
    assert engine.ergotropy_limit(REF) == pytest.approx(6.9526, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(params_st, st.floats(0.01, 150.0))
def test_ergotropy_bounds(params, tau):
    w = engine.ergotropy_avg(params, tau)
    assert 0.0 <= w <= engine.ergotropy_limit(params) * (1 + 1e-12)
    assert w <= K_B * params.T_S * engine.mutual_information(params, tau) + 1e-12


# ------------------------------------------------------------ temperatures


def test_outcome_temperature_prior():
    # at tau = 0 every outcome leaves the thermal populations
    assert engine.outcome_temperature(REF, 0.0, 3.0) == pytest.approx(REF.T_S, rel=1e-12)


def test_outcome_temperature_crossing():
    with pytest.raises(DegenerateTemperature):
        engine.outcome_temperature(REF, 10.0, engine.threshold_p_prime(REF, 10.0))


def test_heat_capacity_schottky_peak():
    dE = 10.0
    res = minimize_scalar(lambda T: -engine.heat_capacity(dE, T), bounds=(1, 1000), method="bounded", options={"xatol": 1e-10})
    # peak at x = dE/(k_B T) solving x tanh(x/2) = 2
    x = dE / (K_B * res.x)
    assert x == pytest.approx(2.399357280515, rel=1e-6)
    assert x * math.tanh(x / 2) == pytest.approx(2.0, rel=1e-6)


def test_heat_capacity_vs_derivative():
    dE, T, h = 20.0, 250.0, 1e-3
    U = lambda T: dE / (1 + math.exp(dE / (K_B * T)))  # noqa: E731
    assert engine.heat_capacity(dE, T) == pytest.approx((U(T + h) - U(T - h)) / (2 * h), rel=1e-7)


# ------------------------------------------------------------ rethermalization work


def test_thermal_work_at_crossing():
    # populations (1/2, 1/2): relative entropy to the thermal pair
    tls = engine.thermal_populations(REF)
    want = K_B * REF.T_S * (-math.log(2) - 0.5 * math.log(tls.a) - 0.5 * math.log(tls.b))
    pp = engine.threshold_p_prime(REF, 10.0)
    assert engine.thermal_work_outcome(REF, 10.0, pp) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("params,tau,p", [(REF, 10.0, -3.0), (REF, 10.0, -12.0), (COLD, 5.0, 1.0), (COLD, 5.0, -8.0)])
def test_thermal_work_closed_vs_integral(params, tau, p):
    closed = engine.thermal_work_outcome(params, tau, p)
    direct = engine.thermal_work_outcome_integral(params, tau, p)
    assert closed == pytest.approx(direct, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(params_st, st.floats(0.0, 100.0), st.floats(-200.0, 100.0))
def test_thermal_work_nonnegative(params, tau, p):
    assert engine.thermal_work_outcome(params, tau, p) >= 0.0


def test_thermal_work_limit():
    assert engine.thermal_work_avg(REF, 0.0) == 0.0
    want = K_B * REF.T_S * binary_entropy(*(lambda t: (t.a, t.b))(engine.thermal_populations(REF))) - engine.ergotropy_limit(REF)
    assert engine.thermal_work_limit(REF) == pytest.approx(want, rel=1e-15)
    assert engine.thermal_work_avg(REF, 200.0) == pytest.approx(want, rel=1e-6)


# ------------------------------------------------------------ identity


@settings(max_examples=25, deadline=None)
@given(params_st, st.floats(0.01, 150.0))
def test_total_work_identity(params, tau):
    w_tot, ts_i = engine.total_work(params, tau)
    assert abs(w_tot - ts_i) <= 1e-6 * max(ts_i, 1e-12)


def test_identity_violation_raised():
    with pytest.raises(IdentityViolation):
        engine.check_identity(1.0, 1.1)
    engine.check_identity(0.0, 0.0)
