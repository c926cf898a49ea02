import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tailnorm import (gls_norm, gls_norm_of_tail, gls_tail_bound, lorentz_quasinorm, make_psi, make_tail,
                      moment, natural_psi, r_psi)
from tailnorm.errors import InputError, NotApplicableError
from tailnorm.gls import PsiFunction, gls_converse_bound, p_grid
from tailnorm.numerics import fit_line, fit_loglog_slope

EXP = make_tail("weibull", {"C": 1, "m": 1})


@pytest.mark.parametrize("psi", [make_psi("flat", {"r": 3}), make_psi("power", {"m": 2}),
                                 make_psi("exp-power", {"C": 1, "beta": 1}),
                                 make_psi("grand", {"b": 3, "gamma": 1})])
def test_constant_variable_has_unit_norm(psi):
    est = gls_norm_of_tail(make_tail("constant", {"c": 1}), psi)
    assert est.value == pytest.approx(1.0, rel=1e-10) and not est.diverged


def test_flat_psi_is_lebesgue_norm():
    est = gls_norm_of_tail(EXP, make_psi("flat", {"r": 2}))
    assert est.value == pytest.approx(math.sqrt(2), rel=1e-8)
    assert est.details["argmax_p"] == pytest.approx(2.0)


def test_grand_space_membership():
    t = make_tail("power-log", {"b": 3, "gamma": 1})
    assert gls_norm_of_tail(t, make_psi("grand", {"b": 3, "gamma": 1})).diverged
    assert gls_norm_of_tail(t, make_psi("grand", {"b": 3, "gamma": 2})).finite


def test_moment_pole_inside_support():
    t = make_tail("pure-power", {"r": 2})
    est = gls_norm_of_tail(t, make_psi("grand", {"b": 3, "gamma": 1}))
    assert est.diverged and est.value == math.inf


def test_grid_outside_support_rejected():
    curve = natural_psi(EXP, [1.0, 2.0, 3.5])
    with pytest.raises(InputError):
        gls_norm(curve, make_psi("grand", {"b": 3, "gamma": 1}))


@pytest.mark.parametrize("family,params", [("flat", {"r": 0.5}), ("grand", {"b": 1, "gamma": 1}),
                                           ("power", {"m": 0}), ("bessel", {})])
def test_bad_psi(family, params):
    with pytest.raises(InputError):
        make_psi(family, params)


def test_p_grid_shapes():
    g = p_grid(make_psi("grand", {"b": 3, "gamma": 1}))
    assert g[0] == 1.0 and g[-1] < 3.0 and 3 - g[-1] <= 1.1e-3
    assert np.all(np.diff(g) > 0)
    assert p_grid(make_psi("flat", {"r": 2}))[-1] == 2.0


# -- tail bounds

def test_flat_bound_is_power():
    S = gls_tail_bound(make_psi("flat", {"r": 2}), 1.0)
    for x in (1.0, 1.5, 10.0, 1e3):
        assert S(x) == pytest.approx(x ** -2, rel=1e-12)
    assert S(0.5) == 1.0


def test_power_psi_bound_is_weibull():
    S = gls_tail_bound(make_psi("power", {"m": 2}), 1.0)
    xs = np.geomspace(10, 1e4, 30)
    fit = fit_loglog_slope([(x, -S.log_tail(x)) for x in xs])
    assert fit.slope == pytest.approx(2.0, abs=0.02)


def test_grand_bound_power_log_shape():
    S = gls_tail_bound(make_psi("grand", {"b": 3, "gamma": 1}), 1.0)
    ys = np.linspace(math.log(1e20), math.log(1e200), 40)
    lt = np.array([S.log_tail_log(y) for y in ys])
    # ln S = -3 ln x + ln ln x + const
    fit = fit_line(ys, lt - np.log(ys))
    assert fit.slope == pytest.approx(-3.0, abs=1e-3)
    assert fit.rms < 1e-2


def test_bound_rejects_bad_level():
    with pytest.raises(InputError):
        gls_tail_bound(make_psi("flat", {"r": 2}), 0.0)


# -- converse machinery

def test_r_psi_power():
    r = r_psi(make_psi("power", {"m": 2}))
    assert not r.unbounded and 1.0 <= r.value < 10.0
    assert r.trace[-1] == pytest.approx(r.trace[-2], rel=0.05)


def test_r_psi_exp_power_recorded():
    r = r_psi(make_psi("exp-power", {"C": 1, "beta": 1}))
    assert len(r.trace) == 3
    assert r.unbounded or math.isfinite(r.value)


def test_r_psi_needs_unbounded_support():
    with pytest.raises(NotApplicableError):
        r_psi(make_psi("flat", {"r": 2}))


@pytest.mark.parametrize("tail,psi", [
    (make_tail("weibull", {"C": 0.5, "m": 2}), make_psi("power", {"m": 2})),
    (make_tail("constant", {"c": 1}), make_psi("power", {"m": 2})),
    (make_tail("log-power", {"K": 1, "beta": 1}), make_psi("exp-power", {"C": 1, "beta": 1})),
])
def test_converse_ratio(tail, psi):
    est = gls_converse_bound(tail, psi)
    assert est.details["ratio"] <= 1.0


# -- properties

psis = st.one_of(
    st.builds(lambda r: make_psi("flat", {"r": r}), st.floats(1, 6)),
    st.builds(lambda m: make_psi("power", {"m": m}), st.floats(0.3, 5)),
    st.builds(lambda C, be: make_psi("exp-power", {"C": C, "beta": be}), st.floats(0.1, 3), st.floats(0.2, 2)),
    st.builds(lambda b, g: make_psi("grand", {"b": b, "gamma": g}), st.floats(1.1, 8), st.floats(0.1, 3)),
)


@given(psi=psis, u=st.floats(0, 1))
def test_psi_at_least_one_and_continuous(psi, u):
    top = min(psi.b, 50.0)
    p = 1.0 + u * (top - 1.0)
    if not psi.in_support(p) or not psi.in_support(p + 1e-9) and not psi.in_support(p - 1e-9):
        return
    q = p + 1e-9 if psi.in_support(p + 1e-9) else p - 1e-9
    assert psi(p) >= 1.0 - 1e-12
    assert abs(psi.log_psi(q) - psi.log_psi(p)) < 1e-5 * max(1.0, abs(psi.log_psi(p)))


@given(psi=psis, c=st.floats(0.01, 100))
def test_norm_homogeneous(psi, c):
    grid = p_grid(psi, points=15)
    curve = natural_psi(make_tail("weibull", {"C": 1, "m": 1.5}), grid[grid < 60])
    a = gls_norm(curve, psi, polish=False)
    b = gls_norm(curve.scaled(c), psi, polish=False)
    assert b.value == pytest.approx(c * a.value, rel=1e-12)
    assert a.diverged == b.diverged


tails = st.one_of(
    st.builds(lambda C, m: make_tail("weibull", {"C": C, "m": m}), st.floats(0.3, 3), st.floats(0.5, 3)),
    st.builds(lambda b, g: make_tail("power-log", {"b": b, "gamma": g}), st.floats(2, 8), st.floats(0.1, 2)),
    st.builds(lambda r: make_tail("pure-power", {"r": r}), st.floats(1.5, 8)),
    st.builds(lambda c: make_tail("constant", {"c": c}), st.floats(0.2, 5)),
    st.builds(lambda s: make_tail("gaussian", {"sigma": s}), st.floats(0.3, 3)),
)


@given(t=tails, psi=psis)
def test_forward_bound_holds(t, psi):
    est = gls_norm_of_tail(t, psi, points=20)
    if not est.finite:
        return
    S = gls_tail_bound(psi, est.value)
    assert lorentz_quasinorm(t, S, levels=2, points=200).value <= 1 + 1e-6


@given(r=st.floats(1, 5), C=st.floats(0.3, 3), m=st.floats(0.5, 3))
def test_flat_reduction(r, C, m):
    t = make_tail("weibull", {"C": C, "m": m})
    assert gls_norm_of_tail(t, make_psi("flat", {"r": r})).value == pytest.approx(moment(t, r), rel=1e-6)


def test_psi_round_trip():
    psi = make_psi("grand", {"b": 3, "gamma": 1})
    assert PsiFunction.from_dict(psi.to_dict()) == psi
