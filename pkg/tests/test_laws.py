import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from infserv.model import (ConstantArrivals, CustomArrivals, Exponential, ImproperLawError,
                           ParetoHazard, PerCountArrivals, ScaledArrivals, SystemState, TableHazard,
                           Weibull, X0DecayFactor, residual_service_sample)

LAWS = [ParetoHazard(3.0), ParetoHazard(1.5), Exponential(2.0), Weibull(2.0, 1.0), Weibull(0.7, 1.5),
        TableHazard([(0, 0.5), (1, 2.0), (4, 1.5)]), TableHazard([(0, 3.0)])]


def test_residual_examples():
    assert residual_service_sample(ParetoHazard(3), 0.0, 3 * math.log(2)) == pytest.approx(1.0, abs=1e-12)
    assert residual_service_sample(ParetoHazard(3), 1.0, 3 * math.log(2)) == pytest.approx(2.0, abs=1e-12)
    assert residual_service_sample(Exponential(2.0), 17.3, 1.0) == 0.5


@pytest.mark.parametrize("s,e", [(-1.0, 1.0), (0.0, 0.0), (0.0, -2.0)])
def test_residual_domain(s, e):
    with pytest.raises(ValueError):
        residual_service_sample(Exponential(1.0), s, e)


@pytest.mark.parametrize("law", LAWS, ids=repr)
@given(s=st.floats(0, 50), e=st.floats(1e-6, 20))
def test_residual_inverts_cumulative_hazard(law, s, e):
    r = law.residual(s, e)
    assert r >= 0
    got = float(law.cumulative_hazard(s + r)) - float(law.cumulative_hazard(s))
    assert got == pytest.approx(e, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("law", LAWS, ids=repr)
def test_cumulative_hazard_integrates_hazard(law):
    for t in (0.3, 1.0, 2.5, 7.0):
        val, _ = integrate.quad(lambda u: float(law.hazard(u)), 0, t, points=[1, 4], limit=200)
        assert float(law.cumulative_hazard(t)) == pytest.approx(val, rel=1e-7)


@pytest.mark.parametrize("law", LAWS, ids=repr)
def test_mean_matches_quadrature(law):
    val, _ = integrate.quad(lambda u: float(law.survival(u)), 0, np.inf, limit=500)
    assert law.mean == pytest.approx(val, rel=1e-6)


def test_family_means():
    assert ParetoHazard(3).mean == pytest.approx(0.5)
    assert Exponential(4).mean == pytest.approx(0.25)
    assert Weibull(1.0, 2.0).mean == pytest.approx(2.0)


@pytest.mark.parametrize("law", LAWS, ids=repr)
def test_residual_accepts_arrays(law):
    s = np.array([0.0, 0.5, 3.0])
    e = np.array([0.1, 1.0, 2.0])
    vec = law.residual(s, e)
    assert np.allclose(vec, [law.residual(float(a), float(b)) for a, b in zip(s, e)], rtol=1e-12)


@pytest.mark.parametrize("law", [ParetoHazard(3.0), Exponential(2.0), Weibull(2.0, 1.0), Weibull(0.7, 1.0),
                                 TableHazard([(0, 0.5), (1, 2.0), (4, 1.5)])], ids=repr)
@given(s=st.floats(0.01, 30), w=st.floats(0.01, 5), u=st.floats(0, 1))
def test_hazard_bound_dominates(law, s, w, u):
    assert float(law.hazard(s + u * w)) <= law.hazard_bound(s, w) * (1 + 1e-12)


def test_weibull_small_shape_unbounded_at_zero():
    with pytest.raises(ValueError):
        Weibull(0.5, 1.0).hazard_bound(0.0, 1.0)


def test_scaled_hazard_infimum():
    assert ParetoHazard(31).scaled_hazard_infimum()[0] == 31
    assert Exponential(1.0).scaled_hazard_infimum() == (1.0, 0.0)
    v, t = Weibull(0.5, 1.0).scaled_hazard_infimum()
    grid = np.linspace(1e-3, 20, 20001)
    assert v == pytest.approx(float(np.min(Weibull(0.5, 1.0).hazard(grid) * (1 + grid))), rel=1e-6)
    tv, tt = TableHazard([(0, 2.0), (1, 1.0)]).scaled_hazard_infimum()
    assert tv == pytest.approx(2.0) and tt in (0.0, 1.0)


def test_table_validation():
    with pytest.raises(ValueError):
        TableHazard([(1, 1.0)])
    with pytest.raises(ValueError):
        TableHazard([(0, 1.0), (0, 2.0)])
    with pytest.raises(ValueError):
        TableHazard([(0, -1.0)])
    with pytest.raises(ImproperLawError):
        TableHazard([(0, 1.0), (2, 0.0)])
    law = TableHazard([(0, 1.0), (2, 0.0)], allow_improper=True)
    with pytest.raises(ImproperLawError):
        law.residual(0.0, 5.0)
    with pytest.raises(ImproperLawError):
        _ = law.mean


def test_table_constant_matches_exponential():
    t = TableHazard([(0, 2.0)])
    e = Exponential(2.0)
    for s in (0.0, 1.0, 5.0):
        assert t.residual(s, 1.3) == pytest.approx(e.residual(s, 1.3))
    assert t.mean == pytest.approx(0.5)


def test_law_equality_and_hash():
    assert ParetoHazard(3) == ParetoHazard(3.0)
    assert ParetoHazard(3) != Exponential(3)
    assert len({ParetoHazard(3), ParetoHazard(3.0), Exponential(1)}) == 2


@pytest.mark.parametrize("bad", [lambda: ParetoHazard(1.0), lambda: Exponential(0.0),
                                 lambda: Weibull(0.0, 1.0), lambda: Weibull(1.0, -1.0)])
def test_service_law_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_arrival_laws():
    c = ConstantArrivals(2.0)
    assert (c.Lambda, c.lower0, c.upper0) == (2.0, 2.0, 2.0)
    p = PerCountArrivals([0.5, 1.0, 3.0])
    assert p.rate(SystemState(0, (1.0, 2.0, 3.0, 4.0))) == 3.0
    assert p.Lambda == pytest.approx(1.5)
    lin = PerCountArrivals([1.0], tail="linear", slope=0.3)
    assert lin.level_sup(10) == pytest.approx(3.0)
    s = ScaledArrivals(0.5, X0DecayFactor(0.2, 1.0))
    assert s.lower0 == pytest.approx(0.1) and s.upper0 == 0.5
    assert s.rate(SystemState(0.0, ())) == pytest.approx(0.5)
    assert s.rate(SystemState(0.0, (1.0, 2.0))) == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [
    lambda: ConstantArrivals(0.0),
    lambda: PerCountArrivals([0.0, 1.0]),
    lambda: PerCountArrivals([]),
    lambda: PerCountArrivals([1.0], tail="linear"),
    lambda: ScaledArrivals(1.0, X0DecayFactor(0.0, 1.0)),
    lambda: ScaledArrivals(1.0, lambda x: 1.0),
    lambda: CustomArrivals(lambda x: 1.0, Lambda=1.0, lower0=2.0, upper0=1.0),
    lambda: CustomArrivals(lambda x: 1.0, Lambda=math.inf, lower0=1.0, upper0=1.0),
])
def test_arrival_validation(bad):
    with pytest.raises(ValueError):
        bad()


@given(st.floats(0, 1), st.floats(0.01, 10), st.floats(0, 1e3))
def test_x0_factor_range(floor, scale, x0):
    assume(floor > 0)
    phi = X0DecayFactor(floor, scale)(SystemState(x0, ()))
    assert floor - 1e-15 <= phi <= 1.0
