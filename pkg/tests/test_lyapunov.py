import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from infserv.model import (EMPTY, ConstantArrivals, Exponential, InadmissibleParameters, LyapunovParams,
                           ParetoHazard, ScaledArrivals, SystemState, X0DecayFactor, advance,
                           check_conditions, drift, drift_upper_bound, generator_terms, lyapunov,
                           lyapunov_time, random_state)
from infserv.streams import generator

ADM = LyapunovParams(C0=31.0, m=2.0, a=2.0, ell=1.0, k=0.5)
X = SystemState(1.0, (1.0, 0.0))


def test_lyapunov_examples():
    assert lyapunov(X, 2, 2) == 25
    assert lyapunov(SystemState(9.0, ()), 3.3, 1.7) == 0
    assert lyapunov(SystemState(0.0, (3.0,)), 1, 1) == 4


def test_lyapunov_time_examples():
    assert lyapunov_time(1.0, X, 2, 2, 2) == 100
    assert lyapunov_time(0.0, X, 2, 2, 2) == lyapunov(X, 2, 2)
    assert lyapunov_time(5.0, EMPTY, 2, 2, 2) == 0


def test_lyapunov_ignores_x0():
    assert lyapunov(SystemState(0.0, (1.0, 2.0)), 2, 3) == lyapunov(SystemState(50.0, (1.0, 2.0)), 2, 3)


def test_generator_terms_examples():
    x = SystemState(0.0, (0.0,))
    arr, svc = ConstantArrivals(1.0), ParetoHazard(3.0)
    assert generator_terms(x, arr, svc, 2, 1) == pytest.approx((1.0, 3.0, 2.0), abs=1e-12)
    assert drift(x, arr, svc, 2, 1) == pytest.approx(0.0, abs=1e-12)
    assert generator_terms(x, arr, svc, 2, 2) == pytest.approx((3.0, 3.0, 4.0), abs=1e-12)


def test_generator_terms_need_customers():
    with pytest.raises(ValueError):
        generator_terms(EMPTY, ConstantArrivals(1.0), ParetoHazard(3.0), 2, 2)


def test_drift_bound_examples():
    assert drift_upper_bound(SystemState(0.0, (0.0,)), ADM, 1.0) == pytest.approx(-19.0)
    with pytest.raises(ValueError):
        drift_upper_bound(EMPTY, ADM, 1.0)
    with pytest.raises(InadmissibleParameters):
        drift_upper_bound(X, LyapunovParams(10.0, 2.0, 2.0, 1.0, 0.5), 1.0)


def _naive_terms(x, lam, h, m, a):
    S = sum((1 + v) ** m for v in x.elapsed)
    I1 = lam * ((1 + S) ** a - S ** a)
    I2 = sum(h(v) * (S ** a - (S - (1 + v) ** m) ** a) for v in x.elapsed)
    I3 = a * m * sum((1 + v) ** (m - 1) for v in x.elapsed) * S ** (a - 1)
    return I1, I2, I3


@given(st.lists(st.floats(0, 50), min_size=1, max_size=6), st.floats(1.01, 3), st.floats(1.01, 3))
def test_generator_terms_match_naive_formula(el, m, a):
    x = SystemState(0.0, tuple(el))
    got = generator_terms(x, ConstantArrivals(1.3), ParetoHazard(4.0), m, a)
    want = _naive_terms(x, 1.3, lambda v: 4.0 / (1 + v), m, a)
    assert got == pytest.approx(want, rel=1e-9)


@given(st.lists(st.floats(0, 20), min_size=1, max_size=5), st.floats(1.1, 3), st.floats(1.1, 3))
def test_ageing_term_is_time_derivative(el, m, a):
    # I3 is d/dt L(x + t) at t = 0
    x = SystemState(0.0, tuple(el))
    h = 1e-6 * (1 + max(el))
    fd = (lyapunov(advance(x, h), m, a) - lyapunov(x, m, a)) / h
    I3 = generator_terms(x, ConstantArrivals(1.0), ParetoHazard(2.0), m, a)[2]
    assert I3 == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("arr", [ConstantArrivals(1.0), ScaledArrivals(1.0, X0DecayFactor(0.3, 2.0))],
                         ids=["constant", "count-times-factor"])
def test_drift_domination_random_states(arr):
    rng = generator(2024, 7, 0)
    svc = ParetoHazard(31.0)
    for _ in range(2000):
        x = random_state(rng, 20, 1e3, min_n=1)
        assert drift(x, arr, svc, 2, 2) <= drift_upper_bound(x, ADM, arr.Lambda) < 0


params = st.builds(
    lambda m, a, frac, C0extra: (m, a, frac, C0extra),
    st.floats(1.05, 3), st.floats(1.05, 3), st.floats(0.05, 0.95), st.floats(0.0, 20))


@given(params, st.floats(0.1, 2), st.data())
def test_drift_domination_property(p, Lam, data):
    m, a, frac, extra = p
    C0 = a * (m + Lam * 2 ** a) + 0.01 + extra
    lp = LyapunovParams(C0, m, a, 1.0, frac)
    seed = data.draw(st.integers(0, 2**32))
    x = random_state(generator(seed, 1), 20, 1e3, min_n=1)
    g = drift(x, ConstantArrivals(Lam), ParetoHazard(C0), m, a)
    assert g <= drift_upper_bound(x, lp, Lam) * (1 - 1e-9) + 1e-9 * abs(g)


def test_params_validation():
    for bad in [dict(C0=0, m=2, a=2, ell=1, k=0.5), dict(C0=1, m=1, a=2, ell=1, k=0.5),
                dict(C0=1, m=2, a=1, ell=1, k=0.5), dict(C0=1, m=2, a=2, ell=1, k=1),
                dict(C0=1, m=2, a=2, ell=0, k=0)]:
        with pytest.raises(ValueError):
            LyapunovParams(**bad)


def test_margins_and_thresholds():
    assert ADM.main_margin(1.0) == pytest.approx(1.0)
    assert ADM.weak_margin(1.0) == pytest.approx(19.0)
    assert ADM.a_prime == pytest.approx(2.5)
    assert ADM.aprime_margin(1.0) == pytest.approx(31 - 2.5 * (2 + 2 ** 2.5))
    assert ADM.admissible(1.0)


def test_check_conditions_examples():
    rep = check_conditions(ConstantArrivals(1.0), ParetoHazard(31.0), ADM)
    assert rep.main_condition_ok and rep.margins["main"] == pytest.approx(1.0) and rep.all_ok
    rep30 = check_conditions(ConstantArrivals(1.0), ParetoHazard(31.0),
                             LyapunovParams(30.0, 2.0, 2.0, 1.0, 0.5))
    assert not rep30.main_condition_ok
    rep_exp = check_conditions(ConstantArrivals(1.0), Exponential(1.0),
                               LyapunovParams(1.0, 2.0, 2.0, 1.0, 0.5))
    assert rep_exp.hazard_ok


def test_hazard_condition_boundary_is_non_strict():
    rep = check_conditions(ConstantArrivals(1.0), ParetoHazard(31.0), ADM)
    assert rep.hazard_ok and rep.margins["hazard"] == 0.0
    rep = check_conditions(ConstantArrivals(1.0), ParetoHazard(30.0), ADM)
    assert not rep.hazard_ok


def test_report_as_dict_is_plain():
    d = check_conditions(ConstantArrivals(1.0), ParetoHazard(31.0), ADM).as_dict()
    assert d["all_ok"] is True and type(d["bounds_ok"]) is bool


def test_random_state_ranges():
    rng = generator(1, 2)
    for _ in range(500):
        x = random_state(rng, 20, 1e3, min_n=1)
        assert 1 <= x.n <= 20
        assert all(0 <= v <= 1e3 for v in x.elapsed) and x.x0 <= min(x.elapsed)
    logs = np.log1p([v for _ in range(200) for v in random_state(rng, 5, 1e3, 5).elapsed])
    assert abs(np.mean(logs) - math.log1p(1e3) / 2) < 0.2
