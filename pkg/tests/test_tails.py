import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tailnorm import gls_tail_bound, lorentz_quasinorm, make_psi, make_tail
from tailnorm.errors import InputError
from tailnorm.tails import TailFunction


def test_power_log_value_at_e():
    t = make_tail("power-log", {"b": 3, "gamma": 1})
    assert t.x0 == pytest.approx(math.e)
    assert t(math.e) == pytest.approx(math.exp(-3.0), rel=1e-12)
    assert t(math.e) == pytest.approx(0.0498, abs=5e-5)
    assert t(1.0) == 1.0


def test_power_log_monotone_by_derivative_sign():
    # d/dx [x^-3 ln x] = x^-4 (1 - 3 ln x) < 0 for x > e^(1/3)
    t = make_tail("power-log", {"b": 3, "gamma": 1})
    xs = np.geomspace(math.e, 1e8, 500)
    assert np.all(np.diff([t(x) for x in xs]) < 0)


def test_pure_power():
    t = make_tail("pure-power", {"r": 2})
    assert t(1.0) == 1.0
    assert t(2.0) == pytest.approx(0.25)


def test_weibull():
    t = make_tail("weibull", {"C": 1, "m": 2})
    assert t(0.0) == 1.0
    assert t(1.0) == pytest.approx(math.exp(-1.0))


def test_log_power_formula():
    t = make_tail("log-power", {"K": 1, "beta": 1})
    assert t(10.0) == pytest.approx(math.exp(-math.log(11.0) ** 2))


def test_constant_is_two_point():
    t = make_tail("constant", {"c": 1})
    assert t(0.999) == 1.0 and t(1.0 + 1e-12) == 0.0
    assert t.support_end == pytest.approx(1.0)


def test_array_evaluation():
    t = make_tail("weibull", {"C": 1, "m": 1})
    np.testing.assert_allclose(t(np.array([0.0, 1.0, 2.0])), np.exp([-0.0, -1.0, -2.0]))


@pytest.mark.parametrize("family,params", [("power-log", {"b": 0.5, "gamma": 1}),
                                           ("weibull", {"C": -1, "m": 2}),
                                           ("pure-power", {}),
                                           ("gen-weibull-log", {"m": 1, "a": 0})])
def test_bad_parameters(family, params):
    with pytest.raises(InputError):
        make_tail(family, params)


def test_clamped_below_monotone_start():
    t = make_tail("gen-weibull-log", {"m": 1.2, "a": 2})
    assert t.x0 > 0 and t(0.5 * t.x0) == 1.0


def test_ratio_overflow_is_divergence():
    est = lorentz_quasinorm(make_tail("weibull", {"C": 1, "m": 1}), make_tail("gaussian", {}))
    assert est.diverged


def test_unknown_family():
    with pytest.raises(InputError):
        make_tail("cauchy", {})


def test_increasing_table_rejected():
    with pytest.raises(InputError):
        make_tail("table", {"x": [0, 1, 2, 3], "T": [1, 0.5, 0.7, 0.1]})


def test_descriptor_round_trip():
    t = make_tail("exp-poly", {"b": 3, "gamma": 1})
    d = json.loads(json.dumps(t.to_dict()))
    u = TailFunction.from_dict(d)
    for x in (0.5, 3.0, 10.0):
        assert u(x) == pytest.approx(t(x), rel=1e-12)


def test_scaled_and_dilated():
    t = make_tail("weibull", {"C": 1, "m": 1})
    assert t.scaled(2.0)(1.0) == pytest.approx(min(1.0, 2 * math.exp(-1)))
    assert t.dilated(2.0)(2.0) == pytest.approx(math.exp(-1))
    assert t.dilated(2.0).critical_lambda == t.critical_lambda / 2


# -- Lorentz quasi-norm

def test_lorentz_identity():
    t = make_tail("power-log", {"b": 3, "gamma": 1})
    est = lorentz_quasinorm(t, t)
    assert est.value == 1.0 and not est.diverged


def test_lorentz_faster_tail():
    fast = make_tail("weibull", {"C": 2, "m": 1})
    slow = make_tail("weibull", {"C": 1, "m": 1})
    est = lorentz_quasinorm(fast, slow)
    assert est.value == pytest.approx(1.0) and not est.diverged
    assert lorentz_quasinorm(slow, fast).diverged


def test_lorentz_flags_heavier_log_power():
    t = make_tail("power-log", {"b": 3, "gamma": 2})
    S = gls_tail_bound(make_psi("grand", {"b": 3, "gamma": 1}), 1.0)
    assert lorentz_quasinorm(t, S).diverged


def test_lorentz_reference_vanishing():
    t = make_tail("weibull", {"C": 1, "m": 1})
    S = make_tail("constant", {"c": 2})
    est = lorentz_quasinorm(t, S)
    assert est.diverged and est.details["reason"] == "reference tail vanishes"


def test_lorentz_value_is_last_trace_entry():
    t = make_tail("pure-power", {"r": 3})
    S = make_tail("pure-power", {"r": 2})
    est = lorentz_quasinorm(t, S)
    assert est.value == est.trace[-1]
    assert all(b >= a for a, b in zip(est.trace, est.trace[1:]))


# -- properties

tails = st.one_of(
    st.builds(lambda C, m: make_tail("weibull", {"C": C, "m": m}), st.floats(0.2, 5), st.floats(0.3, 4)),
    st.builds(lambda b, g: make_tail("power-log", {"b": b, "gamma": g}), st.floats(1.2, 8), st.floats(0.1, 3)),
    st.builds(lambda b, g: make_tail("exp-poly", {"b": b, "gamma": g}), st.floats(0.5, 5), st.floats(0.1, 3)),
    st.builds(lambda K, be: make_tail("log-power", {"K": K, "beta": be}), st.floats(0.3, 3), st.floats(0.2, 2)),
    st.builds(lambda r: make_tail("pure-power", {"r": r}), st.floats(0.5, 8)),
    st.builds(lambda m, a: make_tail("gen-weibull-log", {"m": m, "a": a}), st.floats(1.2, 4), st.floats(0, 2)),
    st.builds(lambda c: make_tail("constant", {"c": c}), st.floats(0.1, 10)),
    st.builds(lambda s: make_tail("gaussian", {"sigma": s}), st.floats(0.2, 5)),
)


@given(t=tails)
def test_tail_nonincreasing_and_bounded(t):
    hi = max(t.upper_cut(-200.0), 10.0)
    xs = np.unique(np.concatenate([np.linspace(0, min(hi, 50.0), 2000), np.geomspace(1e-6, hi, 8000)]))
    v = np.array([t(float(x)) for x in xs])
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v) <= 1e-12)
    assert t(0.0) == 1.0 and t(1e-300) == 1.0


@given(t=tails)
def test_lorentz_self_ratio_is_one(t):
    assert lorentz_quasinorm(t, t, levels=1, points=200).value == 1.0


@given(t=tails, s=tails)
def test_lorentz_nondecreasing_in_scaling(t, s):
    hi = max(t.upper_cut(-60.0), s.upper_cut(-60.0))
    xs = np.unique(np.concatenate([np.linspace(0, min(hi, 20.0), 200), np.geomspace(1e-3, hi, 300)]))
    vals = [lorentz_quasinorm(t.scaled(c), s, xs) for c in (0.5, 1.0, 2.0)]
    assert all(b.value >= a.value * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
