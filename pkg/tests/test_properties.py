import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochexp.catalog import gaussian_model
from stochexp.conditions import (
    Domain,
    growth_ratio,
    operator_frakL_markov,
    operator_frakL_pathdep,
    operator_L_markov,
    operator_L_pathdep,
)
from stochexp.engine import Streams
from stochexp.exponential import Increments, exponential_closed_form, exponential_from_sde
from stochexp.model import CoefficientSet, LevyMeasure, ModelSpec
from stochexp.simulate import (
    DriverPath,
    StoppingRule,
    TimeGrid,
    apply_stopping,
    integrate_path,
    simulate_driver,
)

XS = np.linspace(-3.0, 3.0, 13)
coef = st.floats(-2.0, 2.0, allow_nan=False)
finite = st.floats(-5.0, 5.0, allow_nan=False)


@settings(deadline=None, max_examples=40)
@given(coef, coef, coef, coef, st.floats(0.1, 3.0))
def test_frakL_reduces_to_L_without_tilt(a0, a1, b0, h0, rate):
    spec = ModelSpec(x0=[0.0], levy=LevyMeasure.two_point(rate=rate), coefficients=CoefficientSet(
        a=lambda s, v: a0 + a1 * v.x,
        b=lambda s, v: b0 + 0.0 * v.x,
        h=lambda s, v, z: h0 * v.x[:, None] * z))
    np.testing.assert_allclose(operator_frakL_markov(spec, 0.0, XS), operator_L_markov(spec, 0.0, XS),
                               atol=1e-12)
    np.testing.assert_allclose(operator_frakL_pathdep(spec, 0.0, XS),
                               operator_L_pathdep(spec, 0.0, XS), atol=1e-12)


def _increments(dMc, comp, steps, sizes):
    n = dMc.size
    times = np.linspace(0.0, 1.0, n + 1)
    steps = np.asarray(steps, dtype=int)
    return Increments(times, dMc, dMc**2, comp, steps, times[steps] + 0.5 / n, sizes)


increment_data = st.integers(2, 30).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=st.floats(-0.5, 0.5)),
    arrays(float, n, elements=st.floats(0.0, 0.5)),
    st.lists(st.tuples(st.integers(0, n - 1), st.floats(-0.99, 3.0)), max_size=5)))


@settings(deadline=None, max_examples=60)
@given(increment_data)
def test_exponential_is_nonnegative(data):
    dMc, comp, jumps = data
    steps = sorted(j[0] for j in jumps)
    sizes = np.array([j[1] for j in jumps], dtype=float)
    inc = _increments(dMc, comp, steps, sizes)
    for form in (exponential_closed_form, exponential_from_sde):
        ez = form(inc)
        assert np.all(ez.z >= 0.0)
        assert np.all(np.isfinite(ez.z))


@settings(deadline=None, max_examples=60)
@given(st.integers(2, 30).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=st.floats(0.0, 0.5)),
    st.lists(st.tuples(st.integers(0, n - 1), st.floats(-0.99, 3.0)), max_size=5))))
def test_pure_jump_forms_agree(data):
    comp, jumps = data
    steps = sorted(j[0] for j in jumps)
    sizes = np.array([j[1] for j in jumps], dtype=float)
    inc = _increments(np.zeros(comp.size), comp, steps, sizes)
    np.testing.assert_allclose(exponential_from_sde(inc).z, exponential_closed_form(inc).z,
                               rtol=1e-12)


@settings(deadline=None, max_examples=25)
@given(st.floats(-2.0, 2.0), st.floats(0.0, 3.0), st.floats(0.5, 4.0), st.floats(1.0, 4.0))
def test_box_enlargement_never_decreases_r(p, q, b1, scale):
    def f(x):
        return np.sin(p * x[:, 0]) * np.abs(x[:, 0]) ** q

    r_small = growth_ratio(f, Domain(box=(-b1, b1))).estimated_r
    r_large = growth_ratio(f, Domain(box=(-b1 * scale, b1 * scale))).estimated_r
    assert r_small <= r_large


def _recorded(X):
    X = np.asarray(X, dtype=float).reshape(-1, 1)
    g = TimeGrid(0.1 * (X.shape[0] - 1), 0.1)
    b = integrate_path(ModelSpec(x0=X[0], coefficients=CoefficientSet()),
                       DriverPath(np.zeros((g.n, 1))), g)
    b.X = X
    b.log_z = np.zeros(X.shape[0])
    return b


@settings(deadline=None, max_examples=60)
@given(arrays(float, st.integers(2, 40), elements=finite), st.floats(1.5, 20.0))
def test_pathdep_stop_not_after_markov_stop(xs, level):
    xs[0] = 0.0
    path = _recorded(xs)
    m = apply_stopping(path, StoppingRule(level, "markov")).stop_index
    p = apply_stopping(path, StoppingRule(level, "pathdep")).stop_index
    if m is not None:
        assert p is not None and p <= m


@settings(deadline=None, max_examples=20)
@given(st.floats(-2.0, 2.0), st.integers(0, 2**31))
def test_gaussian_closed_form(theta, seed):
    spec = gaussian_model(theta)
    g = TimeGrid(1.0, 0.05)
    b = integrate_path(spec, simulate_driver(g, None, 1, Streams(seed)), g)
    assert np.isclose(b.log_z[-1], theta * b.X[-1, 0] - 0.5 * theta**2, rtol=0.0, atol=1e-12)
